"""Differential harness: compare two backends node by node over test cases.

The oracle is elementwise and absolute: a node fails when any element pair
differs by more than the threshold, when NaN appears on exactly one side, or
when one side crashes. A failing node implicates itself and every ancestor
(the root cause must sit on a path into the failure).
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import rng
from .backends import (Backend, BackendUnavailable, CrashOutcome, NodeOutcome,
                       run_case)
from .generate import (Dependent, GenerationError, InvalidNodeInput,
                       NoCompatibleRecord, TestCase, generate_case)
from .graphs import ComputationGraph, ancestors, make_graph, topo_order
from .tensors import TensorValue
from .traces import TraceStore

STATUSES = ("ok", "precision", "nan", "crash-one-side", "crash-both", "skipped")
FAILING = ("precision", "nan", "crash-one-side", "crash-both")


@dataclass(frozen=True)
class NodeDiff:
    node_id: int
    api: str
    status: str
    max_abs_diff: Optional[float]  # None when not applicable (crash/skipped)
    note: str = ""


@dataclass(frozen=True)
class CaseReport:
    case_id: str
    pattern_id: str
    backend_a: str
    backend_b: str
    threshold: float
    nodes: tuple[NodeDiff, ...]
    implicated: tuple[int, ...]
    classification: tuple[str, ...]
    agreed_rejection: bool = False

    def node(self, node_id: int) -> NodeDiff:
        for nd in self.nodes:
            if nd.node_id == node_id:
                return nd
        raise KeyError(f"no node {node_id} in report {self.case_id}")


def compare(a: NodeOutcome, b: NodeOutcome, threshold: float) -> tuple[str, Optional[float], str]:
    """Classify one node's pair of outcomes -> (status, max_abs_diff, note)."""
    a_skip = isinstance(a, CrashOutcome) and not a.crashed
    b_skip = isinstance(b, CrashOutcome) and not b.crashed
    if a_skip or b_skip:
        return "skipped", None, (a.message if a_skip else b.message)
    a_crash = isinstance(a, CrashOutcome)
    b_crash = isinstance(b, CrashOutcome)
    if a_crash and b_crash:
        note = a.message if a.message == b.message else f"a: {a.message} | b: {b.message}"
        return "crash-both", None, note
    if a_crash or b_crash:
        msg = a.message if a_crash else b.message
        side = "a" if a_crash else "b"
        return "crash-one-side", None, f"{side} crashed: {msg}"
    if a.shape != b.shape:
        return ("crash-one-side", None,
                f"output-shape divergence: {list(a.shape)} vs {list(b.shape)}")

    av = a.data.astype(np.float64, copy=False)
    bv = b.data.astype(np.float64, copy=False)
    a_nan = np.isnan(av)
    b_nan = np.isnan(bv)
    one_nan = a_nan ^ b_nan
    with np.errstate(invalid="ignore"):
        diff = np.where(av == bv, 0.0, np.abs(av - bv))
    diff[a_nan & b_nan] = 0.0  # matching NaN positions compare equal
    if one_nan.any():
        n = int(one_nan.sum())
        finite = diff[~(a_nan | b_nan)]
        peak = float(np.max(finite)) if finite.size else 0.0
        return "nan", peak, f"NaN on one side at {n} position(s)"
    peak = float(np.max(diff)) if diff.size else 0.0
    if peak > threshold:
        return "precision", peak, ""
    return "ok", peak, ""


def _classify(nodes: list[NodeDiff]) -> tuple[tuple[str, ...], bool]:
    kinds = set()
    failing = [nd for nd in nodes if nd.status in FAILING]
    for nd in failing:
        if nd.status == "precision":
            kinds.add("precision")
        elif nd.status == "nan":
            kinds.add("nan")
        else:
            kinds.add("crash")
    agreed = bool(failing) and all(
        nd.status == "crash-both" and " | " not in nd.note for nd in failing)
    return tuple(sorted(kinds)), agreed


def run_differential(case: TestCase, backend_a: Backend, backend_b: Backend,
                     threshold: float,
                     per_op_threshold: Optional[dict[str, float]] = None) -> CaseReport:
    """Run a case on two backends and compare node by node.

    Raises BackendUnavailable (the case is then unevaluated, not a finding).
    """
    out_a = run_case(case, backend_a)
    out_b = run_case(case, backend_b)
    return build_report(case, out_a, out_b, backend_a.name, backend_b.name,
                        threshold, per_op_threshold)


def build_report(case: TestCase, out_a: dict[int, NodeOutcome],
                 out_b: dict[int, NodeOutcome], name_a: str, name_b: str,
                 threshold: float,
                 per_op_threshold: Optional[dict[str, float]] = None) -> CaseReport:
    nodes: list[NodeDiff] = []
    for nid in topo_order(case.pattern):
        api = case.pattern.api_of(nid)
        limit = (per_op_threshold or {}).get(api, threshold)
        status, peak, note = compare(out_a[nid], out_b[nid], limit)
        nodes.append(NodeDiff(nid, api, status, peak, note))

    implicated: set[int] = set()
    for nd in nodes:
        if nd.status in FAILING:
            implicated.add(nd.node_id)
            implicated |= ancestors(case.pattern, nd.node_id)
    classification, agreed = _classify(nodes)
    return CaseReport(
        case_id=case.case_id,
        pattern_id=case.pattern_id,
        backend_a=name_a,
        backend_b=name_b,
        threshold=threshold,
        nodes=tuple(nodes),
        implicated=tuple(sorted(implicated)),
        classification=classification,
        agreed_rejection=agreed,
    )


# ----------------------------------------------------------- single-node mode

def single_node_case(case: TestCase, node_id: int,
                     materialized: Optional[dict[int, NodeOutcome]] = None) -> TestCase:
    """Extract one node of a case as a standalone 1-node case, same inputs.

    Entry nodes carry their own concrete bindings; for non-entry nodes the
    dependent inputs are frozen from ``materialized`` (a prior run_case map).
    """
    api = case.pattern.api_of(node_id)
    pattern = make_graph([(node_id, api)], [], where=f"single:{case.case_id}")
    bindings = {}
    for param, b in case.node_bindings(node_id).items():
        if isinstance(b, Dependent):
            if materialized is None or not isinstance(materialized.get(b.src), TensorValue):
                raise GenerationError(
                    f"node {node_id} param {param!r} depends on node {b.src}; "
                    f"pass materialized outputs from a prior run")
            from .generate import Concrete
            bindings[(node_id, param)] = Concrete(materialized[b.src])
        else:
            bindings[(node_id, param)] = b
    return TestCase(
        case_id=f"{case.case_id}@n{node_id}",
        pattern_id=f"{case.pattern_id}@n{node_id}",
        pattern=pattern,
        bindings=bindings,
        seed=case.seed,
        provenance={node_id: case.provenance.get(node_id, "-")},
    )


# ------------------------------------------------------------------- campaign

@dataclass
class GenerationStats:
    cases_requested: int = 0
    cases_generated: int = 0
    cases_abandoned: int = 0       # NoCompatibleRecord
    cases_invalid: int = 0         # validity failure during generation
    cases_unevaluated: int = 0     # backend unavailable
    node_inputs_total: int = 0
    node_inputs_valid: int = 0
    node_inputs_invalid: int = 0

    def merge(self, other: "GenerationStats") -> None:
        for f in self.__dataclass_fields__:
            setattr(self, f, getattr(self, f) + getattr(other, f))


def _account_run(stats: GenerationStats, outcomes: dict[int, NodeOutcome]) -> None:
    for out in outcomes.values():
        if isinstance(out, CrashOutcome):
            if out.crashed:
                stats.node_inputs_total += 1
                stats.node_inputs_invalid += 1
            # skipped nodes never executed: no input was consumed
        else:
            stats.node_inputs_total += 1
            stats.node_inputs_valid += 1


def run_campaign(patterns: list[tuple[str, ComputationGraph]], store: TraceStore,
                 backend_a: Backend, backend_b: Backend, threshold: float,
                 cases_per_pattern: int, seed: int, *, jobs: int = 1,
                 per_op_threshold: Optional[dict[str, float]] = None,
                 ) -> tuple[list[CaseReport], GenerationStats]:
    """Generate and differentially run cases for every pattern.

    Deterministic for reference backends: per-case seeds derive from (seed,
    pattern index, case index) and reports come back sorted by case_id.
    """
    stats = GenerationStats()
    work: list[TestCase] = []
    for pi, (pid, pattern) in enumerate(patterns):
        for ci in range(cases_per_pattern):
            stats.cases_requested += 1
            case_seed = rng.derive_key(seed, rng.CH_CASE, pi, ci)
            try:
                case = generate_case(pattern, store, case_seed, pattern_id=pid)
            except NoCompatibleRecord:
                stats.cases_abandoned += 1
                continue
            except InvalidNodeInput as exc:
                stats.cases_invalid += 1
                stats.node_inputs_total += exc.nodes_ok + 1
                stats.node_inputs_valid += exc.nodes_ok
                stats.node_inputs_invalid += 1
                continue
            stats.cases_generated += 1
            work.append(case)

    reports: list[CaseReport] = []

    def _one(case: TestCase) -> tuple[Optional[CaseReport], GenerationStats]:
        local = GenerationStats()
        try:
            out_a = run_case(case, backend_a)
            out_b = run_case(case, backend_b)
        except BackendUnavailable:
            local.cases_unevaluated += 1
            return None, local
        _account_run(local, out_a)
        rep = build_report(case, out_a, out_b, backend_a.name, backend_b.name,
                           threshold, per_op_threshold)
        return rep, local

    if jobs > 1 and len(work) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            for rep, local in pool.map(_one, work):
                stats.merge(local)
                if rep is not None:
                    reports.append(rep)
    else:
        for case in work:
            rep, local = _one(case)
            stats.merge(local)
            if rep is not None:
                reports.append(rep)

    reports.sort(key=lambda r: r.case_id)
    return reports, stats


# ------------------------------------------------------------ report file form

def report_to_obj(rep: CaseReport) -> dict:
    return {
        "case_id": rep.case_id,
        "pattern_id": rep.pattern_id,
        "backends": [rep.backend_a, rep.backend_b],
        "threshold": rep.threshold,
        "nodes": [
            {"id": nd.node_id, "api": nd.api, "status": nd.status,
             "max_abs_diff": nd.max_abs_diff, **({"note": nd.note} if nd.note else {})}
            for nd in rep.nodes
        ],
        "implicated": list(rep.implicated),
        "classification": list(rep.classification),
        "agreed_rejection": rep.agreed_rejection,
    }


def report_from_obj(obj: dict) -> CaseReport:
    return CaseReport(
        case_id=obj["case_id"],
        pattern_id=obj.get("pattern_id", ""),
        backend_a=obj["backends"][0],
        backend_b=obj["backends"][1],
        threshold=float(obj["threshold"]),
        nodes=tuple(
            NodeDiff(int(n["id"]), n["api"], n["status"],
                     None if n.get("max_abs_diff") is None else float(n["max_abs_diff"]),
                     n.get("note", ""))
            for n in obj["nodes"]
        ),
        implicated=tuple(int(i) for i in obj["implicated"]),
        classification=tuple(obj["classification"]),
        agreed_rejection=bool(obj.get("agreed_rejection", False)),
    )
