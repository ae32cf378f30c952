"""Command-line entry point.

Subcommands: mine, ingest-check, gen, run, report. Results land in files;
progress goes to stderr. Exit codes: 0 success, 1 usage error, 2 data or
validation error, 3 a run campaign found at least one bug.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .backends import BackendError, parse_backend
from .generate import GenerationError, case_to_obj, generate_case, NoCompatibleRecord
from .graphs import GraphError, GraphCorpus, graph_to_obj, load_corpus
from .harness import report_to_obj, run_campaign
from .metrics import campaign_metrics, metrics_to_obj, render_table
from .mining import MiningConfig, MiningError, mine
from .rng import CH_CASE, derive_key
from .traces import TraceFormatError, ingest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BUGS = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        self.print_usage(sys.stderr)
        _status("usage-error", message)
        raise SystemExit(EXIT_USAGE)


def _status(state: str, detail: str = "") -> None:
    line = f"graphdiff: status={state}"
    if detail:
        line += f" detail={json.dumps(detail)}"
    print(line, file=sys.stderr)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _write_jsonl(path: Path, objs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def _parse_op_thresholds(specs) -> dict[str, float]:
    out = {}
    for spec in specs or ():
        api, sep, val = spec.partition("=")
        if not sep:
            raise GenerationError(f"bad --op-threshold {spec!r}, want API=TOL")
        out[api] = float(val)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphdiff",
                description="Differential testing of operator graphs mined "
                            "from model computation graphs.")
    sub = p.add_subparsers(dest="cmd", required=True)

    m = sub.add_parser("mine", help="mine frequent subgraphs from a graph corpus")
    m.add_argument("--graphs", required=True)
    m.add_argument("--min-support", type=int, required=True)
    m.add_argument("--min-nodes", type=int, default=2)
    m.add_argument("--max-nodes", type=int, default=7)
    m.add_argument("--out", required=True)

    ic = sub.add_parser("ingest-check", help="validate a trace file")
    ic.add_argument("--trace", required=True, action="append")

    g = sub.add_parser("gen", help="generate test cases for patterns")
    g.add_argument("--patterns", required=True)
    g.add_argument("--trace", required=True, action="append")
    g.add_argument("--cases", type=int, required=True)
    g.add_argument("--seed", type=lambda s: int(s, 0), default=0)
    g.add_argument("--inline-tensors", action="store_true")
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="differentially run generated cases")
    r.add_argument("--backend-a", required=True)
    r.add_argument("--backend-b", required=True)
    r.add_argument("--threshold", type=float, default=1e-3)
    r.add_argument("--op-threshold", action="append", metavar="API=TOL",
                   help="per-operator threshold override")
    r.add_argument("--cases", type=int, required=True)
    r.add_argument("--seed", type=lambda s: int(s, 0), default=0)
    r.add_argument("--patterns", required=True)
    r.add_argument("--trace", required=True, action="append")
    r.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    r.add_argument("--out", required=True)

    rp = sub.add_parser("report", help="aggregate metrics from run outputs")
    rp.add_argument("--runs", required=True)
    rp.add_argument("--out", required=True)
    return p


def _cmd_mine(args) -> int:
    corpus = load_corpus(args.graphs)
    cfg = MiningConfig(min_support=args.min_support, min_nodes=args.min_nodes,
                       max_nodes=args.max_nodes)
    t0 = time.monotonic()
    found = mine(corpus, cfg)
    _log(f"mined {len(found)} frequent subgraphs from {len(corpus)} graphs "
         f"in {time.monotonic() - t0:.2f}s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = []
    supports = {}
    for i, f in enumerate(found):
        pid = f"p{i:04d}"
        doc.append(graph_to_obj(pid, f.pattern))
        supports[pid] = {
            "support": f.support,
            "graphs": sorted(f.supporting_graphs),
            "nodes": len(f.pattern.nodes),
        }
    _write_json(out / "patterns.json", doc)
    _write_json(out / "supports.json", supports)
    _status("ok", f"{len(found)} patterns -> {out}")
    return EXIT_OK


def _cmd_ingest_check(args) -> int:
    store = ingest(args.trace)
    for api in store.apis:
        _log(f"{api}: {len(store.query(api))} records")
    print(json.dumps({
        "records": len(store),
        "apis": {api: len(store.query(api)) for api in store.apis},
        "rejections": [
            {"line": r.line, "id": r.record_id, "reason": r.reason}
            for r in store.rejections
        ],
    }, sort_keys=True, indent=1))
    if store.rejections:
        _status("data-error", f"{len(store.rejections)} record(s) rejected")
        return EXIT_DATA
    _status("ok", f"{len(store)} records valid")
    return EXIT_OK


def _load_inputs(args):
    patterns = load_corpus(args.patterns, connected=True)
    store = ingest(args.trace)
    if store.rejections:
        raise TraceFormatError(
            f"{len(store.rejections)} trace record(s) rejected; run ingest-check")
    return patterns, store


def _cmd_gen(args) -> int:
    patterns, store = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    objs = []
    abandoned = 0
    for pi, (pid, pattern) in enumerate(patterns):
        for ci in range(args.cases):
            case_seed = derive_key(args.seed, CH_CASE, pi, ci)
            try:
                case = generate_case(pattern, store, case_seed, pattern_id=pid)
            except NoCompatibleRecord as exc:
                abandoned += 1
                _log(f"abandoned: {exc}")
                continue
            objs.append(case_to_obj(case, inline_tensors=args.inline_tensors))
    objs.sort(key=lambda o: o["case_id"])
    _write_jsonl(out / "cases.jsonl", objs)
    _write_json(out / "gen_stats.json",
                {"requested": len(patterns) * args.cases,
                 "generated": len(objs), "abandoned": abandoned})
    _status("ok", f"{len(objs)} cases -> {out} ({abandoned} abandoned)")
    return EXIT_OK


def _cmd_run(args) -> int:
    patterns, store = _load_inputs(args)
    backend_a = parse_backend(args.backend_a)
    backend_b = parse_backend(args.backend_b)
    per_op = _parse_op_thresholds(args.op_threshold)
    t0 = time.monotonic()
    reports, stats = run_campaign(
        list(patterns), store, backend_a, backend_b, args.threshold,
        args.cases, args.seed, jobs=max(1, args.jobs), per_op_threshold=per_op)
    _log(f"ran {len(reports)} cases in {time.monotonic() - t0:.2f}s "
         f"({stats.cases_abandoned} abandoned, {stats.cases_unevaluated} unevaluated)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "reports.jsonl", [report_to_obj(r) for r in reports])
    _write_json(out / "stats.json", {
        "backends": [backend_a.name, backend_b.name],
        "threshold": args.threshold,
        "seed": args.seed,
        "cases_requested": stats.cases_requested,
        "cases_generated": stats.cases_generated,
        "cases_abandoned": stats.cases_abandoned,
        "cases_invalid": stats.cases_invalid,
        "cases_unevaluated": stats.cases_unevaluated,
        "node_inputs_total": stats.node_inputs_total,
        "node_inputs_valid": stats.node_inputs_valid,
        "node_inputs_invalid": stats.node_inputs_invalid,
    })
    if stats.cases_unevaluated and not reports:
        _status("data-error", "backend unavailable: no case could be evaluated")
        return EXIT_DATA
    m = campaign_metrics(reports, stats)
    if m.flagged_cases:
        _status("bugs-found", f"{m.flagged_cases} flagged case(s) -> {out}")
        return EXIT_BUGS
    _status("ok", f"no differences above threshold -> {out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .harness import GenerationStats, report_from_obj

    runs = Path(args.runs)
    reports_path = runs / "reports.jsonl"
    stats_path = runs / "stats.json"
    if not reports_path.exists():
        raise GenerationError(f"no reports.jsonl under {runs}")
    reports = []
    with open(reports_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                reports.append(report_from_obj(json.loads(line)))
    stats = GenerationStats()
    if stats_path.exists():
        raw = json.loads(stats_path.read_text())
        for name in stats.__dataclass_fields__:
            setattr(stats, name, int(raw.get(name, 0)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m = campaign_metrics(reports, stats)
    _write_json(out / "metrics.json", metrics_to_obj(m, stats))
    (out / "table.txt").write_text(render_table(m, stats), encoding="utf-8")
    _status("ok", f"metrics for {len(reports)} cases -> {out}")
    return EXIT_OK


_COMMANDS = {
    "mine": _cmd_mine,
    "ingest-check": _cmd_ingest_check,
    "gen": _cmd_gen,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.cmd](args)
    except (GraphError, TraceFormatError, MiningError, GenerationError,
            BackendError, OSError, ValueError) as exc:
        _status("data-error", str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
