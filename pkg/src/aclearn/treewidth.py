"""Moral graphs and the min-fill treewidth heuristic."""
from __future__ import annotations

from typing import Sequence


def moralize(parents: Sequence[set[int]]) -> list[set[int]]:
    """Undirected adjacency: each node joined to its parents, co-parents married."""
    n = len(parents)
    adj = [set() for _ in range(n)]
    for child, ps in enumerate(parents):
        ps = sorted(ps)
        for p in ps:
            adj[child].add(p)
            adj[p].add(child)
        for i, a in enumerate(ps):
            for b in ps[i + 1:]:
                adj[a].add(b)
                adj[b].add(a)
    return adj


def _fill_in(adj, v) -> int:
    nbrs = sorted(adj[v])
    return sum(1 for i, a in enumerate(nbrs) for b in nbrs[i + 1:] if b not in adj[a])


def _eliminate(adj, v):
    nbrs = adj[v]
    for a in nbrs:
        adj[a] |= nbrs
        adj[a].discard(a)
        adj[a].discard(v)
    adj[v] = set()


def min_fill_order(adj: Sequence[set[int]]) -> tuple[int, list[int]]:
    """Greedy elimination by fewest fill edges, lowest index on ties.

    Returns (width, order) where width is the largest neighbourhood size at
    elimination time, i.e. max clique size minus one.
    """
    adj = [set(a) for a in adj]
    remaining = set(range(len(adj)))
    width, order = 0, []
    while remaining:
        v = min(remaining, key=lambda u: (_fill_in(adj, u), u))
        width = max(width, len(adj[v]))
        _eliminate(adj, v)
        remaining.remove(v)
        order.append(v)
    return width, order


def elimination_width(adj: Sequence[set[int]], order: Sequence[int]) -> int:
    """Width of a given elimination order."""
    if sorted(order) != list(range(len(adj))):
        raise ValueError("order must be a permutation of the nodes")
    adj = [set(a) for a in adj]
    width = 0
    for v in order:
        width = max(width, len(adj[v]))
        _eliminate(adj, v)
    return width


def estimate_treewidth_minfill(bn) -> tuple[int, list[int]]:
    return min_fill_order(moralize(bn.parents))
