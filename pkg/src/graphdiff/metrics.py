"""Campaign metrics: valid-input ratio, per-api involvement, average diffs,
bug tallies.

Involvement follows the per-case reading: for each api, the share of cases
executing it in which it landed in the implicated set. Average diff pools the
per-node max-abs differences of numerically compared nodes (crash, skipped
and NaN-status nodes excluded; NaN occurrences are counted separately).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .harness import FAILING, CaseReport, GenerationStats

BUG_KINDS = ("crash", "nan", "precision")


@dataclass(frozen=True)
class CampaignMetrics:
    r: Optional[float]                       # None when no inputs were generated
    per_api_involvement: dict[str, float]
    per_api_avg_diff: dict[str, float]
    per_api_nan_nodes: dict[str, int]
    bug_counts: dict[str, int]               # per case, agreed rejections excluded
    bug_counts_nodes: dict[str, int]         # per failing node
    bug_counts_patterns: dict[str, int]      # per pattern with >= 1 flagged case
    cases: int
    flagged_cases: int


def valid_ratio(stats: GenerationStats) -> Optional[float]:
    """Inputs that passed validity checks / all generated inputs (None if none)."""
    if stats.node_inputs_total == 0:
        return None
    return stats.node_inputs_valid / stats.node_inputs_total


def involvement_frequency(reports: list[CaseReport]) -> dict[str, float]:
    executed: dict[str, int] = {}
    involved: dict[str, int] = {}
    for rep in reports:
        imp = set(rep.implicated)
        apis_run = {nd.api for nd in rep.nodes if nd.status != "skipped"}
        apis_involved = {nd.api for nd in rep.nodes if nd.node_id in imp}
        for api in apis_run:
            executed[api] = executed.get(api, 0) + 1
        for api in apis_involved & apis_run:
            involved[api] = involved.get(api, 0) + 1
    return {api: involved.get(api, 0) / n for api, n in sorted(executed.items())}


def average_diff(reports: list[CaseReport]) -> dict[str, float]:
    total: dict[str, float] = {}
    count: dict[str, int] = {}
    for rep in reports:
        for nd in rep.nodes:
            if nd.status in ("ok", "precision") and nd.max_abs_diff is not None:
                total[nd.api] = total.get(nd.api, 0.0) + nd.max_abs_diff
                count[nd.api] = count.get(nd.api, 0) + 1
    return {api: total[api] / count[api] for api in sorted(total)}


def nan_node_counts(reports: list[CaseReport]) -> dict[str, int]:
    out: dict[str, int] = {}
    for rep in reports:
        for nd in rep.nodes:
            if nd.status == "nan":
                out[nd.api] = out.get(nd.api, 0) + 1
    return dict(sorted(out.items()))


def _case_kinds(rep: CaseReport) -> set[str]:
    kinds = set(rep.classification)
    if rep.agreed_rejection:
        kinds.discard("crash")  # both sides rejected identically: not a finding
    return kinds


def bug_counts(reports: list[CaseReport]) -> tuple[dict[str, int], dict[str, int], dict[str, int]]:
    """(per-case, per-node, per-pattern) tallies for crash / nan / precision."""
    by_case = {k: 0 for k in BUG_KINDS}
    by_node = {k: 0 for k in BUG_KINDS}
    patterns: dict[str, set[str]] = {k: set() for k in BUG_KINDS}
    for rep in reports:
        for kind in _case_kinds(rep):
            by_case[kind] += 1
            patterns[kind].add(rep.pattern_id)
        for nd in rep.nodes:
            if nd.status == "precision":
                by_node["precision"] += 1
            elif nd.status == "nan":
                by_node["nan"] += 1
            elif nd.status in ("crash-one-side", "crash-both"):
                if not rep.agreed_rejection:
                    by_node["crash"] += 1
    return by_case, by_node, {k: len(v) for k, v in patterns.items()}


def campaign_metrics(reports: list[CaseReport], stats: GenerationStats) -> CampaignMetrics:
    by_case, by_node, by_pattern = bug_counts(reports)
    return CampaignMetrics(
        r=valid_ratio(stats),
        per_api_involvement=involvement_frequency(reports),
        per_api_avg_diff=average_diff(reports),
        per_api_nan_nodes=nan_node_counts(reports),
        bug_counts=by_case,
        bug_counts_nodes=by_node,
        bug_counts_patterns=by_pattern,
        cases=len(reports),
        flagged_cases=sum(1 for r in reports if _case_kinds(r)),
    )


def metrics_to_obj(m: CampaignMetrics, stats: GenerationStats) -> dict:
    return {
        "valid_input_ratio": m.r,
        "generation": {
            "cases_requested": stats.cases_requested,
            "cases_generated": stats.cases_generated,
            "cases_abandoned": stats.cases_abandoned,
            "cases_invalid": stats.cases_invalid,
            "cases_unevaluated": stats.cases_unevaluated,
            "node_inputs_total": stats.node_inputs_total,
            "node_inputs_valid": stats.node_inputs_valid,
            "node_inputs_invalid": stats.node_inputs_invalid,
        },
        "per_api": {
            api: {
                "involvement": m.per_api_involvement.get(api, 0.0),
                "avg_output_diff": m.per_api_avg_diff.get(api),
                "nan_nodes": m.per_api_nan_nodes.get(api, 0),
            }
            for api in sorted(set(m.per_api_involvement) | set(m.per_api_avg_diff))
        },
        "bugs": {
            "by_case": m.bug_counts,
            "by_node": m.bug_counts_nodes,
            "by_pattern": m.bug_counts_patterns,
        },
        "cases": m.cases,
        "flagged_cases": m.flagged_cases,
    }


def render_table(m: CampaignMetrics, stats: GenerationStats) -> str:
    lines = []
    r = "n/a" if m.r is None else f"{100.0 * m.r:.2f}%"
    lines.append(f"valid input ratio: {r}  "
                 f"(passed {stats.node_inputs_valid} / {stats.node_inputs_total} inputs; "
                 f"{stats.cases_generated} cases, {stats.cases_abandoned} abandoned)")
    lines.append("")
    lines.append(f"{'api':<22} {'involvement':>12} {'avg |a-b|':>14} {'nan nodes':>10}")
    lines.append("-" * 62)
    apis = sorted(set(m.per_api_involvement) | set(m.per_api_avg_diff))
    for api in apis:
        inv = m.per_api_involvement.get(api)
        inv_s = "-" if inv is None else f"{100.0 * inv:.2f}%"
        avg = m.per_api_avg_diff.get(api)
        avg_s = "-" if avg is None else f"{avg:.6g}"
        lines.append(f"{api:<22} {inv_s:>12} {avg_s:>14} {m.per_api_nan_nodes.get(api, 0):>10}")
    lines.append("")
    lines.append(f"{'bug kind':<12} {'cases':>8} {'nodes':>8} {'patterns':>10}")
    lines.append("-" * 42)
    for kind in BUG_KINDS:
        lines.append(f"{kind:<12} {m.bug_counts[kind]:>8} {m.bug_counts_nodes[kind]:>8} "
                     f"{m.bug_counts_patterns[kind]:>10}")
    lines.append("")
    lines.append(f"cases evaluated: {m.cases}; flagged: {m.flagged_cases}")
    return "\n".join(lines) + "\n"
