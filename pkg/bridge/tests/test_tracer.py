import json

import numpy as np
import torch

from torchbridge.tracer import emit_trace

CONVNET_SCRIPT = """
import torch
import torch.nn.functional as F

torch.manual_seed(0)
x = torch.randn(2, 3, 16, 16)
w1 = torch.randn(8, 3, 3, 3)
w2 = torch.randn(4, 8, 3, 3)
h = F.relu(F.conv2d(x, w1, padding=1))
y = F.conv2d(h, w2, padding=1)
y = torch.flatten(y, 1)
"""

EMPTY_SCRIPT = """
values = [i * i for i in range(10)]
total = sum(values)
"""

EXTREMES_SCRIPT = """
import json
import torch
import torch.nn.functional as F

torch.manual_seed(7)
x = torch.randn(1, 3, 8, 8) * 5
w = torch.randn(2, 3, 3, 3)
F.conv2d(x, w)
with open({out!r}, "w") as fh:
    json.dump({{"min": float(x.min()), "max": float(x.max())}}, fh)
"""


def read_trace(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


class TestEmitTrace:
    def test_tiny_convnet_records_conv_layers(self, tmp_path):
        script = tmp_path / "model.py"
        script.write_text(CONVNET_SCRIPT)
        out = tmp_path / "trace.jsonl"
        count, _ = emit_trace(str(script), str(out))
        records = read_trace(out)
        assert count == len(records)
        convs = [r for r in records if r["api"] == "conv2d"]
        assert len(convs) >= 2
        shapes = {tuple(r["tensors"]["input"]["shape"]) for r in convs}
        assert (2, 3, 16, 16) in shapes
        assert (2, 8, 16, 16) in shapes
        weights = {tuple(r["tensors"]["weight"]["shape"]) for r in convs}
        assert weights == {(8, 3, 3, 3), (4, 8, 3, 3)}
        assert any(r["api"] == "relu" for r in records)
        assert any(r["api"] == "flatten" for r in records)

    def test_script_without_target_ops_gives_empty_trace(self, tmp_path):
        script = tmp_path / "plain.py"
        script.write_text(EMPTY_SCRIPT)
        out = tmp_path / "trace.jsonl"
        count, skipped = emit_trace(str(script), str(out))
        assert count == 0
        assert read_trace(out) == []

    def test_recorded_range_brackets_actual_extremes(self, tmp_path):
        extremes_file = tmp_path / "extremes.json"
        script = tmp_path / "model.py"
        script.write_text(EXTREMES_SCRIPT.format(out=str(extremes_file)))
        out = tmp_path / "trace.jsonl"
        emit_trace(str(script), str(out))
        actual = json.loads(extremes_file.read_text())
        conv = next(r for r in read_trace(out) if r["api"] == "conv2d")
        feat = conv["tensors"]["input"]
        assert feat["min"] <= actual["min"] + 1e-6
        assert feat["max"] >= actual["max"] - 1e-6
        assert abs(feat["min"] - actual["min"]) < 1e-4
        assert abs(feat["max"] - actual["max"]) < 1e-4

    def test_hooks_restored_after_trace(self, tmp_path):
        import torch.nn.functional as F
        before = F.conv2d
        script = tmp_path / "model.py"
        script.write_text(CONVNET_SCRIPT)
        emit_trace(str(script), str(tmp_path / "t.jsonl"))
        assert F.conv2d is before

    def test_tensor_dunder_arithmetic_recorded(self, tmp_path):
        script = tmp_path / "adds.py"
        script.write_text(
            "import torch\n"
            "a = torch.randn(4, 4)\n"
            "b = torch.randn(4, 4)\n"
            "c = a + b\n"
            "d = a * b\n"
            "e = a + 1.5\n"  # tensor-scalar: skipped, not recordable
        )
        out = tmp_path / "trace.jsonl"
        emit_trace(str(script), str(out))
        records = read_trace(out)
        apis = [r["api"] for r in records]
        assert apis.count("__add__") == 1
        assert apis.count("__mul__") == 1
