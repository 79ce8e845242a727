"""Model bundles: network, circuit and manifest in one checksummed text file.

Layout::

    aclearn-model 1
    [manifest]
    {...sorted JSON...}
    [bn]
    ...
    [circuit]
    ...
    [checksum]
    sha256 <hex digest of every preceding byte>

Only deterministic fields go into the bundle so that replaying a run
reproduces it byte for byte; wall times live in a separate run manifest.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .bn import BayesianNetwork
from .circuit import ArithmeticCircuit
from .data import atomic_write
from .errors import ModelFormatError

FORMAT = "aclearn-model"
FORMAT_VERSION = 1
SECTIONS = ("manifest", "bn", "circuit")


@dataclass
class ModelBundle:
    bn: BayesianNetwork
    circuit: ArithmeticCircuit
    manifest: dict = field(default_factory=dict)


def _check_consistent(bn: BayesianNetwork, circuit: ArithmeticCircuit):
    if list(circuit.arities) != list(bn.arities):
        raise ModelFormatError("network and circuit disagree on arities")
    leaves = {leaf_id: leaf.var for leaf_id, leaf in bn.leaves.items()}
    live = {}
    for leaf_id, var in circuit.leaf_variable.items():
        try:
            circuit.parameter_nodes(leaf_id)
        except KeyError:
            continue
        live[leaf_id] = var
    if live != leaves:
        raise ModelFormatError("circuit parameters do not match the network's leaf distributions")


def dumps_bundle(bundle: ModelBundle) -> str:
    body = [f"{FORMAT} {FORMAT_VERSION}",
            "[manifest]", json.dumps(bundle.manifest, sort_keys=True),
            "[bn]", bundle.bn.dumps().rstrip("\n"),
            "[circuit]", bundle.circuit.dumps().rstrip("\n"),
            "[checksum]"]
    text = "\n".join(body) + "\n"
    return text + f"sha256 {hashlib.sha256(text.encode()).hexdigest()}\n"


def loads_bundle(text: str) -> ModelBundle:
    head, _, rest = text.partition("\n")
    parts = head.split()
    if len(parts) != 2 or parts[0] != FORMAT:
        raise ModelFormatError("not a model bundle")
    if parts[1] != str(FORMAT_VERSION):
        raise ModelFormatError(f"unsupported bundle version {parts[1]} (expected {FORMAT_VERSION})")
    marker = "\n[checksum]\n"
    cut = text.rfind(marker)
    if cut < 0:
        raise ModelFormatError("checksum section missing (truncated file?)")
    payload = text[: cut + len(marker)]
    tail = text[cut + len(marker):].split()
    if len(tail) != 2 or tail[0] != "sha256":
        raise ModelFormatError("malformed checksum line")
    if hashlib.sha256(payload.encode()).hexdigest() != tail[1]:
        raise ModelFormatError("checksum mismatch")

    sections: dict[str, list[str]] = {}
    current = None
    for line in payload.splitlines()[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            raise ModelFormatError("content before the first section")
        else:
            sections[current].append(line)
    for name in SECTIONS:
        if name not in sections:
            raise ModelFormatError(f"missing [{name}] section")
    try:
        manifest = json.loads("\n".join(sections["manifest"]))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"bad manifest: {exc}") from None
    try:
        bn = BayesianNetwork.loads("\n".join(sections["bn"]))
        circuit = ArithmeticCircuit.loads("\n".join(sections["circuit"]))
    except ModelFormatError:
        raise
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None
    _check_consistent(bn, circuit)
    return ModelBundle(bn, circuit, manifest)


def save_model(bundle: ModelBundle, path):
    atomic_write(path, dumps_bundle(bundle))


def load_model(path) -> ModelBundle:
    return loads_bundle(Path(path).read_text())
