"""Test-case generation: concrete, valid inputs for a subgraph.

Parameters split three ways: an entry node's parameters are all materialized
from one randomly picked record of its api; a parameter fed by an edge is
dependent (wired at run time); the remaining parameters of non-entry nodes
are filled from a record whose features exactly match the dependent
parameters' inferred dtype/shape. No mutation, no boundary injection: values
are sampled uniformly inside the recorded ranges, scalars copied verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np

from . import rng
from .graphs import ComputationGraph, entry_nodes, topo_order
from .ops import TensorSpec, ValidityError, infer_output, validate
from .signatures import REGISTRY, ParamKind
from .tensors import TensorValue, decode_payload, encode_payload, np_dtype
from .traces import InputRecord, TensorFeature, TraceStore

ALL_DEPENDENT = "-"  # provenance sentinel for nodes that need no record


class GenerationError(Exception):
    pass


class NoCompatibleRecord(GenerationError):
    """No record matches a node's dependent dtype/shapes: the case is abandoned."""

    def __init__(self, node_id: int, api: str,
                 dep_bindings: dict[str, tuple[str, tuple[int, ...]]]):
        self.node_id = node_id
        self.api = api
        self.dep_bindings = dep_bindings
        pretty = {p: f"{d} {list(s)}" for p, (d, s) in dep_bindings.items()}
        super().__init__(f"node {node_id} ({api}): no trace record matches {pretty}")


class InvalidNodeInput(GenerationError):
    """Record-derived bindings failed the op's validity check mid-generation."""

    def __init__(self, node_id: int, api: str, cause: ValidityError, nodes_ok: int):
        self.node_id = node_id
        self.api = api
        self.cause = cause
        self.nodes_ok = nodes_ok
        super().__init__(f"node {node_id} ({api}): {cause}")


@dataclass(frozen=True)
class Dependent:
    src: int


@dataclass(frozen=True)
class Concrete:
    tensor: TensorValue


@dataclass(frozen=True)
class Scalar:
    value: Any


Binding = Union[Dependent, Concrete, Scalar]


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # whole-word "Test" name, but not a pytest class

    case_id: str
    pattern_id: str
    pattern: ComputationGraph
    bindings: dict[tuple[int, str], Binding]
    seed: int
    provenance: dict[int, str]

    def node_bindings(self, node_id: int) -> dict[str, Binding]:
        return {p: b for (n, p), b in self.bindings.items() if n == node_id}


@dataclass(frozen=True)
class ParamClasses:
    entry: frozenset[str]
    dependent: frozenset[str]
    free: frozenset[str]


def classify_params(pattern: ComputationGraph, node_id: int) -> ParamClasses:
    """Partition a node's parameters into entry / dependent / free sets."""
    sig = REGISTRY[pattern.api_of(node_id)]
    names = {p.name for p in sig.params}
    wired = {e.dst_param for e in pattern.in_edges(node_id)}
    if not wired:
        return ParamClasses(frozenset(names), frozenset(), frozenset())
    return ParamClasses(frozenset(), frozenset(wired), frozenset(names - wired))


def _inward_bounds(feat: TensorFeature, dtype: np.dtype):
    lo = np.asarray(feat.vmin, dtype=dtype)
    hi = np.asarray(feat.vmax, dtype=dtype)
    if float(lo) < feat.vmin:
        lo = np.nextafter(lo, np.asarray(np.inf, dtype=dtype))
    if float(hi) > feat.vmax:
        hi = np.nextafter(hi, np.asarray(-np.inf, dtype=dtype))
    if float(lo) > float(hi):  # interval narrower than one ulp
        mid = np.asarray((feat.vmin + feat.vmax) / 2.0, dtype=dtype)
        lo = hi = mid
    return lo, hi


def sample_tensor(feat: TensorFeature, key: int) -> TensorValue:
    """Uniform elementwise sample inside [vmin, vmax], reproducible from key."""
    dtype = np_dtype(feat.dtype)
    size = int(np.prod(feat.shape, dtype=np.int64))
    u = rng.unit_stream(key, 0, size)
    vals = (feat.vmin + u * (feat.vmax - feat.vmin)).astype(dtype)
    lo, hi = _inward_bounds(feat, dtype)
    vals = np.clip(vals, lo, hi)
    return TensorValue(feat.dtype, tuple(feat.shape), vals.reshape(feat.shape))


def generate_case(pattern: ComputationGraph, store: TraceStore, seed: int,
                  *, pattern_id: str = "pattern") -> TestCase:
    """Build one fully concrete TestCase; deterministic in (pattern, store, seed).

    Raises NoCompatibleRecord when a non-entry node has no shape-matching
    record (the case is abandoned, not invalid), and InvalidNodeInput when
    record-derived bindings fail a validity check (inconsistent trace data).
    """
    order = topo_order(pattern)
    bindings: dict[tuple[int, str], Binding] = {}
    provenance: dict[int, str] = {}
    inferred: dict[int, tuple[str, tuple[int, ...]]] = {}

    for walked, nid in enumerate(order):
        api = pattern.api_of(nid)
        sig = REGISTRY[api]
        wired = {e.dst_param: e.src for e in pattern.in_edges(nid)}
        dep_specs = {p: inferred[src] for p, src in wired.items()}

        record: Optional[InputRecord] = None
        if not wired:
            records = store.query(api)
            if not records:
                raise GenerationError(f"trace store has no records for api {api!r}")
            record = records[rng.pick_index(rng.derive_key(seed, rng.CH_RECORD, nid),
                                            len(records))]
            provenance[nid] = record.record_id
        elif any(p.name not in wired for p in sig.params):
            matches = store.match_records(api, dep_specs)
            if not matches:
                raise NoCompatibleRecord(nid, api, dep_specs)
            record = matches[rng.pick_index(rng.derive_key(seed, rng.CH_RECORD, nid),
                                            len(matches))]
            provenance[nid] = record.record_id
        else:
            provenance[nid] = ALL_DEPENDENT

        shape_bindings: dict[str, Any] = {}
        for ordinal, p in enumerate(sig.params):
            if p.name in wired:
                bindings[(nid, p.name)] = Dependent(wired[p.name])
                shape_bindings[p.name] = TensorSpec(*dep_specs[p.name])
            elif p.kind is ParamKind.TENSOR:
                feat = record.tensor_params.get(p.name) if record else None
                if feat is None:
                    bindings[(nid, p.name)] = Scalar(None)
                    shape_bindings[p.name] = None
                else:
                    tv = sample_tensor(feat, rng.derive_key(seed, rng.CH_TENSOR, nid, ordinal))
                    bindings[(nid, p.name)] = Concrete(tv)
                    shape_bindings[p.name] = TensorSpec(feat.dtype, feat.shape)
            else:
                if record is not None and p.name in record.scalar_params:
                    value = record.scalar_value(p.name)
                else:
                    value = p.default
                bindings[(nid, p.name)] = Scalar(value)
                shape_bindings[p.name] = value

        try:
            validate(api, shape_bindings)
            inferred[nid] = infer_output(api, shape_bindings)
        except ValidityError as exc:
            raise InvalidNodeInput(nid, api, exc, walked) from exc

    return TestCase(
        case_id=f"{pattern_id}-{seed & 0xFFFFFFFFFFFFFFFF:016x}",
        pattern_id=pattern_id,
        pattern=pattern,
        bindings=bindings,
        seed=seed,
        provenance=provenance,
    )


# ------------------------------------------------------------- case file form

def case_to_obj(case: TestCase, *, inline_tensors: bool = False) -> dict:
    from .graphs import graph_to_obj

    nodes: dict[str, dict] = {}
    for (nid, param), b in sorted(case.bindings.items()):
        slot = nodes.setdefault(str(nid), {})
        if isinstance(b, Dependent):
            slot[param] = {"dep": b.src}
        elif isinstance(b, Concrete):
            slot[param] = {"tensor": encode_payload(b.tensor) if inline_tensors else None}
        else:
            v = b.value
            slot[param] = {"scalar": list(v) if isinstance(v, tuple) else v}
    return {
        "case_id": case.case_id,
        "pattern": graph_to_obj(case.pattern_id, case.pattern),
        "seed": case.seed,
        "provenance": {str(k): v for k, v in sorted(case.provenance.items())},
        "bindings": nodes,
    }


def case_from_obj(obj: dict, store: Optional[TraceStore] = None) -> TestCase:
    """Rebuild a case: from inlined tensors if present, else by regeneration.

    Regeneration needs the trace store the case was generated from; the
    stored provenance is cross-checked to catch a mismatched store.
    """
    from .graphs import make_graph

    pat = obj["pattern"]
    pattern = make_graph([(n["id"], n["api"]) for n in pat["nodes"]],
                         [(e["src"], e["dst"], e["param"]) for e in pat["edges"]],
                         where=f"case {obj['case_id']}")
    has_inline = any(
        isinstance(slot.get("tensor"), dict)
        for node in obj.get("bindings", {}).values() for slot in node.values()
        if isinstance(slot, dict) and "tensor" in slot
    )
    if not has_inline:
        if store is None:
            raise GenerationError(
                f"case {obj['case_id']} has no inlined tensors; a trace store is "
                f"required to regenerate it")
        case = generate_case(pattern, store, int(obj["seed"]), pattern_id=pat["id"])
        recorded = {int(k): v for k, v in obj.get("provenance", {}).items()}
        if recorded and recorded != case.provenance:
            raise GenerationError(
                f"case {obj['case_id']}: provenance mismatch on regeneration "
                f"(different trace store?)")
        return case

    bindings: dict[tuple[int, str], Binding] = {}
    for nid_s, params in obj["bindings"].items():
        nid = int(nid_s)
        for param, slot in params.items():
            if "dep" in slot:
                bindings[(nid, param)] = Dependent(int(slot["dep"]))
            elif "tensor" in slot:
                if not isinstance(slot["tensor"], dict):
                    raise GenerationError(
                        f"case {obj['case_id']}: node {nid} param {param!r} tensor "
                        f"was not inlined")
                bindings[(nid, param)] = Concrete(decode_payload(slot["tensor"]))
            else:
                v = slot.get("scalar")
                bindings[(nid, param)] = Scalar(tuple(v) if isinstance(v, list) else v)
    return TestCase(
        case_id=str(obj["case_id"]),
        pattern_id=str(pat["id"]),
        pattern=pattern,
        bindings=bindings,
        seed=int(obj["seed"]),
        provenance={int(k): v for k, v in obj.get("provenance", {}).items()},
    )
