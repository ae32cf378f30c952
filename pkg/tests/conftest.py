import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # expose per-phase outcomes so the acceptance suite can print its verdicts
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)

DATA = Path(__file__).resolve().parent.parent / "data"

# The two Fig.-style model fragments used throughout: a 5-op residual-net
# prefix and a 4-op densely-connected-net prefix, sharing conv->bn->relu.
RESNET_FRAGMENT = {
    "id": "resnet_fragment",
    "nodes": [{"id": 0, "api": "conv2d"}, {"id": 1, "api": "batch_norm"},
              {"id": 2, "api": "relu"}, {"id": 3, "api": "conv2d"},
              {"id": 4, "api": "batch_norm"}],
    "edges": [{"src": 0, "dst": 1, "param": "input"},
              {"src": 1, "dst": 2, "param": "input"},
              {"src": 2, "dst": 3, "param": "input"},
              {"src": 3, "dst": 4, "param": "input"}],
}

DENSENET_FRAGMENT = {
    "id": "densenet_fragment",
    "nodes": [{"id": 0, "api": "conv2d"}, {"id": 1, "api": "batch_norm"},
              {"id": 2, "api": "relu"}, {"id": 3, "api": "max_pool2d"}],
    "edges": [{"src": 0, "dst": 1, "param": "input"},
              {"src": 1, "dst": 2, "param": "input"},
              {"src": 2, "dst": 3, "param": "input"}],
}

# The conv2d trace record from the worked example: 16x3x224x224 input,
# 64x3x7x7 weight, stride 1 / padding 3, values in recorded ranges.
CONV2D_RECORD = {
    "id": "conv2d-example",
    "api": "conv2d",
    "tensors": {
        "input": {"dtype": "f32", "shape": [16, 3, 224, 224],
                  "min": -102.91, "max": 152.38},
        "weight": {"dtype": "f32", "shape": [64, 3, 7, 7], "min": -0.20, "max": 0.30},
        "bias": {"dtype": "f32", "shape": [64], "min": -0.10, "max": 0.10},
    },
    "scalars": {
        "stride": {"kind": "int", "value": 1},
        "padding": {"kind": "int", "value": 3},
        "dilation": {"kind": "int", "value": 1},
        "groups": {"kind": "int", "value": 1},
    },
}

# The matching batch_norm record: input shape equals conv2d's inferred output.
BATCH_NORM_RECORD = {
    "id": "batch_norm-example",
    "api": "batch_norm",
    "tensors": {
        "input": {"dtype": "f32", "shape": [16, 64, 224, 224],
                  "min": -1.57, "max": 1.67},
        "running_mean": {"dtype": "f32", "shape": [64], "min": -0.03, "max": 0.10},
        "running_var": {"dtype": "f32", "shape": [64], "min": 0.5, "max": 1.5},
        "weight": {"dtype": "f32", "shape": [64], "min": 0.9, "max": 1.1},
        "bias": {"dtype": "f32", "shape": [64], "min": -0.1, "max": 0.1},
    },
    "scalars": {
        "training": {"kind": "bool", "value": False},
        "momentum": {"kind": "float", "value": 0.1},
        "eps": {"kind": "float", "value": 1e-5},
    },
}


def write_jsonl(path, objs):
    with open(path, "w") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")


@pytest.fixture
def fig_corpus_path(tmp_path):
    p = tmp_path / "fig_corpus.json"
    p.write_text(json.dumps([RESNET_FRAGMENT, DENSENET_FRAGMENT]))
    return p


@pytest.fixture
def example_store(tmp_path):
    from graphdiff.traces import ingest
    p = tmp_path / "trace.jsonl"
    write_jsonl(p, [CONV2D_RECORD, BATCH_NORM_RECORD])
    return ingest(str(p))


@pytest.fixture(scope="session")
def desk_corpus():
    from graphdiff.graphs import load_corpus
    return load_corpus(str(DATA / "models.json"))


@pytest.fixture(scope="session")
def desk_store():
    from graphdiff.traces import ingest
    store = ingest(str(DATA / "trace.jsonl"))
    assert not store.rejections
    return store


@pytest.fixture(scope="session")
def desk_patterns():
    from graphdiff.graphs import load_corpus
    corpus = load_corpus(str(DATA / "patterns.json"), connected=True)
    return list(corpus)
