"""Learn arithmetic circuits from data and answer probabilistic queries with them.

Exit codes: 0 success, 1 usage error or missing file, 2 bad data or model,
3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict

from . import __version__
from .data import atomic_write, load_dataset
from .errors import DataError, InternalError
from .gibbs import SCENARIOS, compile_network, gibbs_query, scenario
from .inference import evaluate_queryset, generate_queries, read_queries, write_queries
from .learner import MODES, LearnerConfig, LearnResult, Learner
from .modelio import ModelBundle, dumps_bundle, load_model, save_model
from .treewidth import estimate_treewidth_minfill
from .tuning import TuningGrid, parse_grid, tune

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _learner_args(p):
    p.add_argument("--k-e", type=float, default=0.1, help="per-edge penalty")
    p.add_argument("--k-p", type=float, default=0.0, help="per-parameter penalty")
    p.add_argument("--mode", choices=MODES, default="greedy")
    p.add_argument("--max-splits", type=int)
    p.add_argument("--max-seconds", type=float)
    p.add_argument("--estimator", choices=("laplace", "ml"), default="laplace")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aclearn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aclearn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("learn", help="learn a circuit from training data")
    p.add_argument("data")
    p.add_argument("-o", "--out", required=True, help="model bundle to write")
    p.add_argument("--trace", help="write per-iteration records (JSON lines)")
    p.add_argument("--manifest", help="run manifest path (default: <out>.run.json)")
    _learner_args(p)

    p = sub.add_parser("eval", help="log-likelihood of a dataset under a model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--per-row", help="write one log-likelihood per row")

    p = sub.add_parser("infer", help="exact conditional queries on the circuit")
    p.add_argument("model")
    p.add_argument("queries")
    p.add_argument("-o", "--out", help="results file (JSON lines)")

    p = sub.add_parser("gibbs", help="Gibbs-sampling estimates on the network")
    p.add_argument("model")
    p.add_argument("queries")
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="fast")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", help="results file (JSON lines)")

    p = sub.add_parser("genqueries", help="random conditional queries from test rows")
    p.add_argument("data")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--query-frac", type=float, default=0.3)
    p.add_argument("--evidence-frac", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rows", type=int)

    p = sub.add_parser("stats", help="size and structure of a model")
    p.add_argument("model")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("tune", help="grid search k_e and k_p on a holdout split, then retrain")
    p.add_argument("data")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--k-e-grid", default="1.0,0.5,0.2,0.1,0.05,0.02,0.01")
    p.add_argument("--k-p-grid", default="0")
    p.add_argument("--fraction", type=float, default=0.9)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--report", help="write the per-cell report (JSON lines)")
    p.add_argument("--mode", choices=MODES, default="greedy")
    p.add_argument("--max-splits", type=int)
    p.add_argument("--max-seconds", type=float)
    p.add_argument("--estimator", choices=("laplace", "ml"), default="laplace")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config(args, **over) -> LearnerConfig:
    fields = dict(k_e=getattr(args, "k_e", 0.1), k_p=getattr(args, "k_p", 0.0), mode=args.mode,
                  max_splits=args.max_splits, max_seconds=args.max_seconds,
                  estimator=args.estimator, seed=args.seed)
    fields.update(over)
    return LearnerConfig(**fields)


def _bundle(result: LearnResult, config: LearnerConfig, data) -> ModelBundle:
    manifest = {
        "version": __version__,
        "config": asdict(config),
        "train_digest": data.digest(),
        "train_rows": data.n_rows,
        "splits": len(result.trace),
        "stop_reason": result.stop_reason,
        "initial_edges": result.initial_edges,
        "final_score": result.final_score,
    }
    return ModelBundle(result.bn, result.circuit, manifest)


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def cmd_learn(args) -> int:
    t0 = time.perf_counter()
    data = load_dataset(args.data)
    t1 = time.perf_counter()
    config = _config(args)
    result = Learner(data, config).run()
    t2 = time.perf_counter()
    bundle = _bundle(result, config, data)
    text = dumps_bundle(bundle)
    atomic_write(args.out, text)
    trace_text = "".join(r.to_json() + "\n" for r in result.trace)
    if args.trace:
        atomic_write(args.trace, trace_text)
    t3 = time.perf_counter()
    run = {
        "command": "learn",
        "version": __version__,
        "seed": config.seed,
        "config": asdict(config),
        "datasets": {str(args.data): data.digest()},
        "outputs": {"model": str(args.out), "trace": args.trace},
        "model_sha256": _sha(text),
        "trace_sha256_without_times": _sha("".join(r.to_json(with_time=False) + "\n" for r in result.trace)),
        "wall_seconds": {"load": t1 - t0, "learn": t2 - t1, "save": t3 - t2},
    }
    atomic_write(args.manifest or f"{args.out}.run.json", json.dumps(run, indent=2, sort_keys=True) + "\n")
    print(f"splits {len(result.trace)}  edges {result.circuit.n_edges}  params {result.circuit.n_params}"
          f"  score {result.final_score:.6f}  stop {result.stop_reason}")
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = load_model(args.model)
    data = load_dataset(args.data)
    if list(data.arities) != list(bundle.bn.arities):
        raise DataError("dataset arities do not match the model")
    per_row = bundle.circuit.evaluate_batch(data.values, log=True)
    if args.per_row:
        atomic_write(args.per_row, "".join(f"{x!r}\n" for x in per_row.tolist()))
    total = float(per_row.sum())
    print(json.dumps({"rows": data.n_rows, "ll": total, "ll_per_example": total / max(data.n_rows, 1)},
                     sort_keys=True))
    return EXIT_OK


def _report(report, out) -> int:
    if out:
        atomic_write(out, "".join(r.to_json() + "\n" for r in report.results))
    print(json.dumps({"queries": len(report.results), "answered": report.answered,
                      "impossible": report.impossible, "mean_per_var": report.mean_per_var,
                      "mean_us": report.mean_micros}, sort_keys=True))
    return EXIT_OK


def cmd_infer(args) -> int:
    bundle = load_model(args.model)
    queries = read_queries(args.queries)
    for q in queries:
        q.check(bundle.circuit.arities)
    return _report(evaluate_queryset(bundle.circuit, queries), args.out)


def cmd_gibbs(args) -> int:
    bundle = load_model(args.model)
    queries = read_queries(args.queries)
    for q in queries:
        q.check(bundle.bn.arities)
    scn = scenario(args.scenario, args.seed)
    net = compile_network(bundle.bn)
    streams = iter(range(len(queries)))  # one seed stream per query, in file order
    report = evaluate_queryset(lambda q: gibbs_query(bundle.bn, q, scn, next(streams), net), queries)
    return _report(report, args.out)


def cmd_genqueries(args) -> int:
    data = load_dataset(args.data)
    queries = generate_queries(data, args.query_frac, args.evidence_frac, args.seed, args.max_rows)
    write_queries(queries, args.out)
    print(f"wrote {len(queries)} queries to {args.out}")
    return EXIT_OK


def model_stats(bundle: ModelBundle) -> dict:
    bn, circ = bundle.bn, bundle.circuit
    counts = bn.parent_counts()
    width, order = estimate_treewidth_minfill(bn)
    return {
        "edges": circ.n_edges,
        "params": circ.n_params,
        "nodes": circ.node_count,
        "leaves": bn.n_leaves,
        "avg_parents": sum(counts) / len(counts) if counts else 0.0,
        "max_parents": max(counts, default=0),
        "treewidth": width,
        "elimination_order": order,
    }


def cmd_stats(args) -> int:
    stats = model_stats(load_model(args.model))
    if args.json:
        print(json.dumps(stats, sort_keys=True))
    else:
        for key, val in stats.items():
            if key == "elimination_order":
                val = " ".join(map(str, val))
            elif isinstance(val, float):
                val = f"{val:.3f}"
            print(f"{key:<18}{val}")
    return EXIT_OK


def cmd_tune(args) -> int:
    data = load_dataset(args.data)
    grid = TuningGrid(parse_grid(args.k_e_grid), parse_grid(args.k_p_grid), args.fraction)
    base = _config(args)
    res = tune(data, grid, base, seed=args.seed, workers=args.workers)
    config = LearnerConfig(**{**asdict(base), "k_e": res.best[0], "k_p": res.best[1]})
    save_model(_bundle(res.final, config, data), args.out)
    rows = [json.dumps(asdict(c), sort_keys=True) for c in res.cells]
    if args.report:
        atomic_write(args.report, "".join(r + "\n" for r in rows))
    for r in rows:
        print(r)
    print(f"best k_e={res.best[0]} k_p={res.best[1]}")
    return EXIT_OK


COMMANDS = {"learn": cmd_learn, "eval": cmd_eval, "infer": cmd_infer, "gibbs": cmd_gibbs,
            "genqueries": cmd_genqueries, "stats": cmd_stats, "tune": cmd_tune}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
