#!/usr/bin/env python3
"""Build the desk-scale corpus: model graphs + a consistent trace file.

Eight synthetic model graphs over one tensor shape ([2, 4, 8, 8] throughout;
flatten appears only as a sink), so every operator's records match every
context it can be mined in and generation never lacks a compatible record.
One trace record is emitted per node occurrence, with jittered value ranges.

Writes data/models.json, data/trace.jsonl, data/patterns.json,
data/supports.json, then self-checks coverage and zero-abandonment.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from graphdiff.generate import generate_case
from graphdiff.graphs import graph_to_obj, load_corpus, make_graph, topo_order
from graphdiff.mining import MiningConfig, mine
from graphdiff.ops import TensorSpec, infer_output
from graphdiff.signatures import API_NAMES, REGISTRY, ParamKind
from graphdiff.traces import ingest

S = [2, 4, 8, 8]  # the one tensor shape of this corpus

# api -> (free tensor params with (shape, lo, hi), scalar params)
OP_CONFIG = {
    "conv2d": (
        {"weight": ([4, 4, 3, 3], -0.35, 0.35), "bias": ([4], -0.1, 0.1)},
        {"stride": ("int", 1), "padding": ("int", 1), "dilation": ("int", 1),
         "groups": ("int", 1)},
    ),
    "batch_norm": (
        {"running_mean": ([4], -0.06, 0.09), "running_var": ([4], 0.7, 1.3),
         "weight": ([4], 0.9, 1.1), "bias": ([4], -0.1, 0.1)},
        {"training": ("bool", False), "momentum": ("float", 0.1),
         "eps": ("float", 1e-5)},
    ),
    "relu": ({}, {}),
    "gelu": ({}, {}),
    "max_pool2d": (
        {},
        {"kernel_size": ("int", 3), "stride": ("int", 1), "padding": ("int", 1),
         "dilation": ("int", 1), "ceil_mode": ("bool", False)},
    ),
    "adaptive_avg_pool2d": ({}, {"output_size": ("int-tuple", [8, 8])}),
    "dropout": ({}, {"p": ("float", 0.25), "training": ("bool", False)}),
    "flatten": ({}, {"start_dim": ("int", 1), "end_dim": ("int", -1)}),
    "linear": ({"weight": ([8, 8], -0.5, 0.5), "bias": ([8], -0.1, 0.1)}, {}),
    "layer_norm": (
        {"weight": ([8], 0.95, 1.05), "bias": ([8], -0.05, 0.05)},
        {"normalized_shape": ("int-tuple", [8]), "eps": ("float", 1e-5)},
    ),
    "softmax": ({}, {"dim": ("int", -1)}),
    "matmul": ({"other": (S, -0.4, 0.4)}, {}),
    "__add__": ({"other": (S, -1.2, 1.2)}, {}),
    "__mul__": ({"other": (S, -1.0, 1.0)}, {}),
    "div": ({"other": (S, 0.6, 1.6)}, {}),
}


def _chain(apis):
    nodes = list(enumerate(apis))
    edges = [(i, i + 1, "input") for i in range(len(apis) - 1)]
    return nodes, edges


MODELS = {}

MODELS["conv_stack_a"] = _chain(
    ["conv2d", "batch_norm", "relu", "conv2d", "batch_norm", "relu",
     "max_pool2d", "flatten"])

MODELS["conv_stack_b"] = _chain(
    ["conv2d", "batch_norm", "relu", "max_pool2d", "conv2d", "batch_norm",
     "gelu", "adaptive_avg_pool2d", "flatten"])

# residual: add takes the branch output plus the post-activation skip
_n, _e = _chain(["conv2d", "batch_norm", "relu", "conv2d", "batch_norm"])
_n += [(5, "__add__"), (6, "relu"), (7, "adaptive_avg_pool2d"), (8, "flatten")]
_e += [(4, 5, "input"), (2, 5, "other"), (5, 6, "input"), (6, 7, "input"),
       (7, 8, "input")]
MODELS["residual_block"] = (_n, _e)

MODELS["mlp"] = _chain(
    ["linear", "relu", "dropout", "linear", "gelu", "layer_norm", "linear",
     "dropout", "softmax"])

_n, _e = _chain(["matmul", "div", "softmax", "dropout", "matmul", "linear",
                 "layer_norm"])
_n += [(7, "__add__"), (8, "linear")]
_e += [(6, 7, "input"), (5, 7, "other"), (7, 8, "input")]
MODELS["attention_a"] = (_n, _e)

_n = [(0, "conv2d"), (1, "batch_norm"), (2, "gelu"),
      (3, "conv2d"), (4, "batch_norm"), (5, "relu"),
      (6, "__mul__"), (7, "conv2d"), (8, "batch_norm"), (9, "relu"),
      (10, "max_pool2d"), (11, "flatten")]
_e = [(0, 1, "input"), (1, 2, "input"), (3, 4, "input"), (4, 5, "input"),
      (2, 6, "input"), (5, 6, "other"), (6, 7, "input"), (7, 8, "input"),
      (8, 9, "input"), (9, 10, "input"), (10, 11, "input")]
MODELS["gated_conv"] = (_n, _e)

_n, _e = _chain(["matmul", "div", "softmax", "matmul", "linear", "layer_norm",
                 "gelu", "linear", "dropout"])
_n += [(9, "__add__"), (10, "layer_norm")]
_e += [(8, 9, "input"), (7, 9, "other"), (9, 10, "input")]
MODELS["attention_b"] = (_n, _e)

_n, _e = _chain(["conv2d", "batch_norm", "gelu"])
_n += [(3, "__mul__"), (4, "conv2d"), (5, "relu"), (6, "max_pool2d"),
       (7, "adaptive_avg_pool2d"), (8, "div"), (9, "__add__"), (10, "flatten")]
_e += [(2, 3, "input"), (3, 4, "input"), (4, 5, "input"), (5, 6, "input"),
       (6, 7, "input"), (7, 8, "input"), (8, 9, "input"), (9, 10, "input")]
MODELS["gated_mixed"] = (_n, _e)


def build(out_dir: Path) -> None:
    jitter = random.Random(20240117)
    out_dir.mkdir(parents=True, exist_ok=True)

    graphs = {name: make_graph(nodes, edges, where=name)
              for name, (nodes, edges) in MODELS.items()}
    doc = [graph_to_obj(name, g) for name, g in sorted(graphs.items())]
    (out_dir / "models.json").write_text(json.dumps(doc, indent=1) + "\n")

    records = []
    for name, g in sorted(graphs.items()):
        out_shapes = {}
        for nid in topo_order(g):
            api = g.api_of(nid)
            free_tensors, scalars = OP_CONFIG[api]
            wired = {e.dst_param: e.src for e in g.in_edges(nid)}
            tensors = {}
            bindings = {}
            for param, src in wired.items():
                shape = out_shapes[src]
                lo = -2.5 + jitter.uniform(-0.2, 0.2)
                hi = 2.5 + jitter.uniform(-0.2, 0.2)
                tensors[param] = {"dtype": "f32", "shape": list(shape),
                                  "min": round(lo, 4), "max": round(hi, 4)}
                bindings[param] = TensorSpec("f32", tuple(shape))
            for p in REGISTRY[api].params:
                if p.kind is ParamKind.TENSOR and p.name not in wired:
                    if p.name in free_tensors:
                        shape, lo, hi = free_tensors[p.name]
                        width = hi - lo
                        lo_j = lo + jitter.uniform(0, 0.05) * width
                        hi_j = hi - jitter.uniform(0, 0.05) * width
                        tensors[p.name] = {"dtype": "f32", "shape": list(shape),
                                           "min": round(lo_j, 4), "max": round(hi_j, 4)}
                        bindings[p.name] = TensorSpec("f32", tuple(shape))
                    elif p.name == "input":
                        lo = -2.5 + jitter.uniform(-0.2, 0.2)
                        hi = 2.5 + jitter.uniform(-0.2, 0.2)
                        tensors["input"] = {"dtype": "f32", "shape": S,
                                            "min": round(lo, 4), "max": round(hi, 4)}
                        bindings["input"] = TensorSpec("f32", tuple(S))
            scalar_map = {k: {"kind": kind, "value": v}
                          for k, (kind, v) in scalars.items()}
            for k, (kind, v) in scalars.items():
                bindings[k] = tuple(v) if isinstance(v, list) else v
            records.append({
                "id": f"{name}-n{nid:02d}",
                "api": api,
                "tensors": tensors,
                "scalars": scalar_map,
            })
            _, shape = infer_output(api, bindings)
            out_shapes[nid] = shape

    # one training-mode dropout record for variety (masks are seed-shared)
    records.append({
        "id": "extra-dropout-train",
        "api": "dropout",
        "tensors": {"input": {"dtype": "f32", "shape": S, "min": -2.5, "max": 2.5}},
        "scalars": {"p": {"kind": "float", "value": 0.5},
                    "training": {"kind": "bool", "value": True}},
    })

    with open(out_dir / "trace.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    # self-check: mine, assert coverage, spot-check generation
    corpus = load_corpus(out_dir / "models.json")
    store = ingest(str(out_dir / "trace.jsonl"))
    assert not store.rejections, store.rejections[:3]
    found = mine(corpus, MiningConfig(min_support=2, min_nodes=2, max_nodes=5))
    apis = {n.api for f in found for n in f.pattern.nodes}
    missing = set(API_NAMES) - apis
    assert len(found) >= 20, f"only {len(found)} patterns"
    assert not missing, f"ops not covered by any pattern: {sorted(missing)}"

    pat_doc = []
    supports = {}
    for i, f in enumerate(found):
        pid = f"p{i:04d}"
        pat_doc.append(graph_to_obj(pid, f.pattern))
        supports[pid] = {"support": f.support, "graphs": sorted(f.supporting_graphs),
                         "nodes": len(f.pattern.nodes)}
    (out_dir / "patterns.json").write_text(json.dumps(pat_doc, indent=1) + "\n")
    (out_dir / "supports.json").write_text(json.dumps(supports, indent=1) + "\n")

    for i, f in enumerate(found):
        generate_case(f.pattern, store, seed=1000 + i, pattern_id=f"p{i:04d}")

    print(f"{len(corpus)} models, {len(records)} trace records, "
          f"{len(found)} patterns (all 15 ops covered)")


if __name__ == "__main__":
    build(Path(__file__).resolve().parent.parent / "data")
