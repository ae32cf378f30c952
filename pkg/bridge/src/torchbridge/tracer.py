"""Runtime input-feature capture: hook the functional entry points, run a
model script, and write one trace record per invocation.

Only float32/float64 tensor parameters are recordable; invocations carrying
other dtypes (or tensor-scalar arithmetic) are skipped with a log line, and
partial traces are still valid files.
"""

from __future__ import annotations

import contextlib
import inspect
import json
import runpy
import sys
from typing import Any, Callable, Optional

import numpy as np
import torch
import torch.nn.functional as F

_DTYPE_NAMES = {torch.float32: "f32", torch.float64: "f64"}

# api -> (owner object, attribute, ordered parameter names)
_HOOK_SPECS = {
    "conv2d": (F, "conv2d",
               ["input", "weight", "bias", "stride", "padding", "dilation", "groups"]),
    "batch_norm": (F, "batch_norm",
                   ["input", "running_mean", "running_var", "weight", "bias",
                    "training", "momentum", "eps"]),
    "relu": (F, "relu", ["input"]),
    "gelu": (F, "gelu", ["input"]),
    "linear": (F, "linear", ["input", "weight", "bias"]),
    "layer_norm": (F, "layer_norm",
                   ["input", "normalized_shape", "weight", "bias", "eps"]),
    "softmax": (F, "softmax", ["input", "dim"]),
    "dropout": (F, "dropout", ["input", "p", "training"]),
    "max_pool2d": (F, "max_pool2d",
                   ["input", "kernel_size", "stride", "padding", "dilation",
                    "ceil_mode"]),
    "adaptive_avg_pool2d": (F, "adaptive_avg_pool2d", ["input", "output_size"]),
    "flatten": (torch, "flatten", ["input", "start_dim", "end_dim"]),
    "matmul": (torch, "matmul", ["input", "other"]),
    "div": (torch, "div", ["input", "other"]),
    "__add__": (torch.Tensor, "__add__", ["input", "other"]),
    "__mul__": (torch.Tensor, "__mul__", ["input", "other"]),
}


def _scalar_feature(value: Any) -> Optional[dict]:
    if value is None:
        return {"kind": "none", "value": None}
    if isinstance(value, bool):
        return {"kind": "bool", "value": value}
    if isinstance(value, int):
        return {"kind": "int", "value": value}
    if isinstance(value, float):
        return {"kind": "float", "value": value}
    if isinstance(value, str):
        return {"kind": "string", "value": value}
    if isinstance(value, (tuple, list)) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value):
        return {"kind": "int-tuple", "value": list(value)}
    if isinstance(value, torch.Size):
        return {"kind": "int-tuple", "value": list(value)}
    return None


def _tensor_feature(t: torch.Tensor) -> Optional[dict]:
    name = _DTYPE_NAMES.get(t.dtype)
    if name is None or t.numel() == 0 or t.dim() == 0:
        return None
    with torch.no_grad():
        lo = float(t.detach().min())
        hi = float(t.detach().max())
    if not (np.isfinite(lo) and np.isfinite(hi)):
        return None
    return {"dtype": name, "shape": list(t.shape), "min": lo, "max": hi}


class TraceWriter:
    def __init__(self, path: str):
        self.path = path
        self.count = 0
        self.skipped = 0
        self._fh = open(path, "w", encoding="utf-8")

    def record(self, api: str, params: dict[str, Any]) -> None:
        tensors: dict[str, dict] = {}
        scalars: dict[str, dict] = {}
        for name, value in params.items():
            if isinstance(value, torch.Tensor):
                feat = _tensor_feature(value)
                if feat is None:
                    self.skipped += 1
                    return
                tensors[name] = feat
            else:
                feat = _scalar_feature(value)
                if feat is None:
                    self.skipped += 1
                    return
                scalars[name] = feat
        self.count += 1
        self._fh.write(json.dumps({
            "id": f"{api}-{self.count:06d}",
            "api": api,
            "tensors": tensors,
            "scalars": scalars,
        }, sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.close()


def _bind(param_names: list[str], args: tuple, kwargs: dict) -> Optional[dict]:
    bound: dict[str, Any] = {}
    if len(args) > len(param_names):
        return None
    for name, value in zip(param_names, args):
        bound[name] = value
    for name, value in kwargs.items():
        if name not in param_names or name in bound:
            return None
        bound[name] = value
    return bound


@contextlib.contextmanager
def hooked(writer: TraceWriter):
    """Patch the functional entry points; restore them on exit."""
    originals: list[tuple[Any, str, Any]] = []

    def install(api: str, owner: Any, attr: str, params: list[str]) -> None:
        original = getattr(owner, attr)

        def wrapper(*args, **kwargs):
            try:
                bound = _bind(params, args, kwargs)
                if bound is not None and isinstance(bound.get("input"), torch.Tensor):
                    if api in ("__add__", "__mul__") and not isinstance(
                            bound.get("other"), torch.Tensor):
                        writer.skipped += 1
                    else:
                        writer.record(api, bound)
            except Exception as exc:
                print(f"torchbridge: hook for {api} failed: {exc}", file=sys.stderr)
            return original(*args, **kwargs)

        setattr(owner, attr, wrapper)
        originals.append((owner, attr, original))

    for api, (owner, attr, params) in _HOOK_SPECS.items():
        try:
            install(api, owner, attr, params)
        except Exception as exc:
            print(f"torchbridge: cannot hook {api}: {exc}", file=sys.stderr)
    try:
        yield
    finally:
        for owner, attr, original in reversed(originals):
            setattr(owner, attr, original)


def emit_trace(script: str, out: str) -> tuple[int, int]:
    """Run a model script with the 15 ops hooked; write records to ``out``.

    Returns (records written, invocations skipped). The script runs as
    __main__, so its usual entry-point guard executes.
    """
    writer = TraceWriter(out)
    try:
        with hooked(writer):
            runpy.run_path(script, run_name="__main__")
    finally:
        writer.close()
    return writer.count, writer.skipped
