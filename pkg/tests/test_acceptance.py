"""Acceptance suite: the package's exit criteria, one verdict line each.

Run as part of the normal pytest session; each criterion prints
"ACCEPTANCE <name>: PASS|FAIL" on the terminal when it finishes.
"""

import json
import random
import time

import numpy as np
import pytest

import oracles
from conftest import DATA
from graphdiff.backends import PerturbBackend, RefBackend, run_case
from graphdiff.cli import main as cli_main
from graphdiff.generate import Concrete, Dependent, Scalar, TestCase, generate_case
from graphdiff.graphs import GraphCorpus, load_corpus, make_graph
from graphdiff.harness import build_report, run_differential, single_node_case
from graphdiff.mining import MiningConfig, canonical_code, mine
from graphdiff.ops import execute_node
from graphdiff.rng import CH_CASE, derive_key
from graphdiff.signatures import API_NAMES
from graphdiff.tensors import from_numpy
from graphdiff.traces import ingest
from oracles import brute_force_mine, graph_canonical, reachability_oracle

CRITERION = {}


@pytest.fixture(autouse=True)
def verdict_line(request):
    yield
    name = CRITERION.get(request.node.name.split("[")[0])
    if name is None:
        return
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None:
        tr.write_line(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}")


def criterion(name):
    def deco(fn):
        CRITERION[fn.__name__] = name
        return fn
    return deco


def tv(arr):
    return from_numpy(np.ascontiguousarray(arr))


# ---------------------------------------------------------------- criterion 1

@criterion("miner-fixture")
def test_miner_fixture_exact_set(fig_corpus_path):
    t0 = time.monotonic()
    corpus = load_corpus(str(fig_corpus_path))
    found = mine(corpus, MiningConfig(min_support=2, min_nodes=2, max_nodes=3))
    elapsed = time.monotonic() - t0

    def chain(apis):
        return make_graph(list(enumerate(apis)),
                          [(i, i + 1, "input") for i in range(len(apis) - 1)])

    got = {graph_canonical(f.pattern) for f in found}
    expected = {
        graph_canonical(chain(["conv2d", "batch_norm"])),
        graph_canonical(chain(["batch_norm", "relu"])),
        graph_canonical(chain(["conv2d", "batch_norm", "relu"])),
    }
    assert got == expected
    assert graph_canonical(chain(["conv2d", "batch_norm", "relu"])) in got
    assert all(f.support == 2 for f in found)
    assert elapsed < 1.0, f"miner fixture took {elapsed:.2f}s"


# ---------------------------------------------------------------- criterion 2

@criterion("miner-oracle-equivalence")
def test_miner_matches_brute_force_on_25_random_corpora():
    apis = ("relu", "gelu", "dropout", "flatten", "softmax")
    rng = random.Random(2024)
    t0 = time.monotonic()
    for trial in range(25):
        graphs = []
        for gi in range(4):
            n = rng.randint(2, 10)
            nodes = [(i, rng.choice(apis)) for i in range(n)]
            edges = []
            for j in range(1, n):
                if rng.random() < 0.75:
                    edges.append((rng.randrange(j), j, "input"))
            graphs.append((f"g{gi}", make_graph(nodes, edges)))
        corpus = GraphCorpus(tuple(graphs))
        found = mine(corpus, MiningConfig(min_support=2, min_nodes=2, max_nodes=4))
        got = {graph_canonical(f.pattern): (f.support, f.supporting_graphs)
               for f in found}
        expected = brute_force_mine(graphs, 2, 2, 4)
        assert got == expected, f"trial {trial}: mined {len(got)} vs oracle {len(expected)}"
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"oracle equivalence took {elapsed:.1f}s"


# ---------------------------------------------------------------- criterion 3

@criterion("valid-rate-100pct")
def test_thousand_cases_zero_validity_errors(desk_store, desk_patterns):
    t0 = time.monotonic()
    assert len(desk_patterns) >= 20
    covered = {n.api for _, p in desk_patterns for n in p.nodes}
    assert covered == set(API_NAMES), f"missing: {set(API_NAMES) - covered}"

    per_pattern = -(-1000 // len(desk_patterns))  # ceil: at least 1000 total
    backend = RefBackend("f32")
    cases = abandoned = 0
    node_inputs = invalid = 0
    for pi, (pid, pattern) in enumerate(desk_patterns):
        for ci in range(per_pattern):
            seed = derive_key(4242, CH_CASE, pi, ci)
            try:
                case = generate_case(pattern, desk_store, seed, pattern_id=pid)
            except Exception:
                abandoned += 1
                continue
            cases += 1
            outcomes = run_case(case, backend)
            for out in outcomes.values():
                node_inputs += 1
                if not hasattr(out, "data"):
                    invalid += 1
    elapsed = time.monotonic() - t0
    assert cases >= 1000
    assert abandoned == 0, f"{abandoned} cases abandoned on the consistent corpus"
    assert invalid == 0, f"{invalid} of {node_inputs} node inputs failed validity"
    assert elapsed < 300.0, f"validity run took {elapsed:.1f}s"


# ---------------------------------------------------------------- criterion 4

@criterion("kernel-oracles")
def test_kernels_match_independent_oracles():
    rng = np.random.default_rng(31337)

    def rand(*shape, lo=-1.0, hi=1.0):
        return (lo + (hi - lo) * rng.random(shape)).astype(np.float64)

    def check(api, want, precision, **bindings):
        wrapped = {k: (tv(v) if isinstance(v, np.ndarray) else v)
                   for k, v in bindings.items()}
        got = execute_node(api, wrapped, precision).data
        tol = 1e-12 if precision == "f64" else 1e-5
        np.testing.assert_allclose(got, np.asarray(want), atol=tol, rtol=0,
                                   err_msg=api)

    for precision in ("f64", "f32"):
        for _ in range(50):
            # conv2d
            cin, cout, k = (int(rng.integers(1, 4)) for _ in range(3))
            h = int(rng.integers(k, k + 4))
            x = rand(1, cin, h, h)
            w = rand(cout, cin, k, k)
            b = rand(cout)
            check("conv2d", oracles.conv2d_naive(x, w, b, (1, 1), (1, 1), (1, 1), 1),
                  precision, input=x, weight=w, bias=b, padding=1)
            # max_pool2d
            xp = rand(1, 2, 6, 6)
            check("max_pool2d", oracles.max_pool2d_naive(xp, (2, 2), (2, 2), (1, 1),
                                                         (1, 1)),
                  precision, input=xp, kernel_size=2, stride=2, padding=1)
            # adaptive_avg_pool2d
            check("adaptive_avg_pool2d", oracles.adaptive_avg_pool2d_naive(xp, (3, 5)),
                  precision, input=xp, output_size=[3, 5])
            # matmul / linear
            a = rand(2, 3, 4)
            bm = rand(4, 5)
            check("matmul", oracles.matmul_naive(a, bm), precision, input=a, other=bm)
            xl = rand(3, 6)
            wl = rand(4, 6)
            bl = rand(4)
            check("linear", oracles.linear_naive(xl, wl, bl), precision,
                  input=xl, weight=wl, bias=bl)
            # normalizers and pointwise
            xs = rand(4, 7, lo=-5, hi=5)
            check("softmax", oracles.softmax_naive(xs, -1), precision,
                  input=xs, dim=-1)
            wn = rand(7, lo=0.5, hi=1.5)
            bn = rand(7)
            check("layer_norm", oracles.layer_norm_naive(xs, (7,), wn, bn),
                  precision, input=xs, normalized_shape=[7], weight=wn, bias=bn)
            xb = rand(2, 3, 2, 2)
            mean, var = rand(3), rand(3, lo=0.3, hi=2.0)
            check("batch_norm", oracles.batch_norm_naive(xb, mean, var),
                  precision, input=xb, running_mean=mean, running_var=var,
                  training=False)
            check("gelu", oracles.gelu_naive(xs), precision, input=xs)
            check("relu", np.maximum(xs, 0.0), precision, input=xs)
            ya = rand(4, 7, lo=0.5, hi=2.0)
            for api in ("__add__", "__mul__", "div"):
                check(api, oracles.elementwise_naive(api, xs, ya), precision,
                      input=xs, other=ya)
            xf = rand(2, 3, 4)
            check("flatten", xf.reshape(2, 12), precision, input=xf)
            check("dropout", xf, precision, input=xf, p=0.5, training=False)

    # stated identities
    xs = rand(16, 64, lo=-4, hi=4)
    soft = execute_node("softmax", {"input": tv(xs), "dim": -1}, "f32").data
    assert np.all(soft >= 0)
    np.testing.assert_allclose(soft.sum(axis=-1), 1.0, atol=1e-6, rtol=0)

    ln = execute_node("layer_norm", {"input": tv(xs), "normalized_shape": (64,)},
                      "f64").data
    assert np.abs(ln.mean(axis=-1)).max() <= 1e-5
    assert np.abs(ln.var(axis=-1) - 1.0).max() <= 1e-3

    x32 = xs.astype(np.float32)
    drop = execute_node("dropout", {"input": tv(x32), "p": 0.9, "training": False},
                        "f32").data
    assert drop.tobytes() == x32.tobytes()  # identity, bit-exact

    w = rand(32, 64)
    b = rand(32)
    lin = execute_node("linear", {"input": tv(xs), "weight": tv(w), "bias": tv(b)},
                       "f32").data
    mm = execute_node("matmul", {"input": tv(xs), "other": tv(w.T.copy())},
                      "f32").data
    np.testing.assert_allclose(lin, mm + b.astype(np.float32), atol=1e-6, rtol=0)


# ---------------------------------------------------------------- criterion 5

AMPLIFY_CHAIN = make_graph(
    [(0, "__add__"), (1, "layer_norm"), (2, "linear")],
    [(0, 1, "input"), (1, 2, "input")])


@criterion("threshold-oracle-and-implication")
def test_observed_profile_and_ancestor_implication(desk_store, desk_patterns):
    # the reported diff profile: 0 at the add, 2.28882e-5 at layer_norm,
    # 0.17188 at linear, threshold 1e-3 -> linear fails, all three implicated
    out_a, out_b = {}, {}
    for nid, d in enumerate((0.0, 2.28882e-5, 0.17188)):
        base = np.zeros(8)
        other = base.copy()
        other[0] += d
        out_a[nid] = tv(base)
        out_b[nid] = tv(other)
    case = TestCase("profile", "profile", AMPLIFY_CHAIN, {}, 0, {})
    rep = build_report(case, out_a, out_b, "ref-f32", "ref-f64", 1e-3)
    failing = [nd.node_id for nd in rep.nodes if nd.status == "precision"]
    assert failing == [2]
    assert rep.pattern_id == "profile"
    assert rep.implicated == (0, 1, 2)
    assert rep.classification == ("precision",)

    # 100 randomized perturbation campaigns: implicated == ancestor closure
    rng = random.Random(909)
    for trial in range(100):
        pid, pattern = desk_patterns[rng.randrange(len(desk_patterns))]
        gcase = generate_case(pattern, desk_store, seed=7000 + trial, pattern_id=pid)
        ids = list(pattern.node_ids())
        targets = frozenset(rng.sample(ids, k=rng.randint(1, len(ids))))
        pert = PerturbBackend(RefBackend("f64"), 10.0 ** rng.randint(-2, 1), targets)
        drep = run_differential(gcase, pert, RefBackend("f64"), 1e-3)
        failing = {nd.node_id for nd in drep.nodes
                   if nd.status in ("precision", "nan", "crash-one-side",
                                    "crash-both")}
        oracle = reachability_oracle(pattern)
        expected = set()
        for f in failing:
            expected |= {f} | oracle[f]
        assert set(drep.implicated) == expected, (trial, pid)


# ---------------------------------------------------------------- criterion 6

@criterion("amplification-property")
def test_small_difference_amplified_downstream_only():
    n = 64
    rng = np.random.default_rng(55)
    g = make_graph([(0, "layer_norm"), (1, "linear")], [(0, 1, "input")])
    x = (rng.random((2, n)) * 6 - 3).astype(np.float64)
    w = ((rng.random((n, n)) * 2 - 1) * 20.0).astype(np.float64)  # scaled up
    case = TestCase("amp", "amp", g, {
        (0, "input"): Concrete(tv(x)),
        (0, "normalized_shape"): Scalar((n,)),
        (0, "weight"): Scalar(None), (0, "bias"): Scalar(None),
        (0, "eps"): Scalar(1e-5),
        (1, "input"): Dependent(0),
        (1, "weight"): Concrete(tv(w)), (1, "bias"): Scalar(None),
    }, 55, {})
    eps = 1e-4
    pert = PerturbBackend(RefBackend("f64"), eps, frozenset({0}))
    rep = run_differential(case, pert, RefBackend("f64"), 1e-3)
    assert rep.node(0).max_abs_diff < 1e-3, "first node must stay below threshold"
    assert rep.node(0).status == "ok"
    assert rep.node(1).max_abs_diff > 1e-3, "descendant must exceed threshold"
    assert rep.node(1).status == "precision"
    assert rep.implicated == (0, 1)

    solo = single_node_case(case, 0)
    solo_rep = run_differential(solo, pert, RefBackend("f64"), 1e-3)
    assert solo_rep.node(0).status == "ok", \
        "single-node run of the same first node with the same inputs must pass"
    assert solo_rep.classification == ()


# ---------------------------------------------------------------- criterion 7

@criterion("campaign-determinism")
def test_identical_campaigns_byte_identical_reports(tmp_path):
    def run_to(d, jobs):
        rc = cli_main([
            "run", "--backend-a", "ref-f32", "--backend-b", "ref-f64",
            "--threshold", "1e-3", "--cases", "2", "--seed", "13",
            "--patterns", str(DATA / "patterns.json"),
            "--trace", str(DATA / "trace.jsonl"),
            "--jobs", str(jobs), "--out", str(d)])
        assert rc == 0
        return ((d / "reports.jsonl").read_bytes(), (d / "stats.json").read_bytes())

    first = run_to(tmp_path / "r1", 1)
    second = run_to(tmp_path / "r2", 1)
    parallel = run_to(tmp_path / "r3", 4)
    assert first == second == parallel
    assert len(first[0]) > 0
