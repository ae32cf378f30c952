"""Per-operator validity checks, shape inference, and execution.

validate() works on shape-level bindings (TensorSpec for tensors, plain
values for scalars) so it can run before any tensor is materialized; execute()
receives numpy arrays already cast to the working precision. infer() reports
the dtype/shape execute() will produce for nominal (uncast) inputs.

Numeric conventions shared by both kernel cores:
  - reductions accumulate sequentially in ascending index order at the
    working precision;
  - exp and erf evaluate through libm's double routines and round once to the
    working precision;
  - NaN/Inf are never trapped; they propagate into outputs as data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from .. import rng
from ..signatures import REGISTRY
from . import core


class ValidityError(ValueError):
    """An operator input failed the op's documented validity check."""

    def __init__(self, api: str, message: str):
        super().__init__(f"{api}: {message}")
        self.api = api
        self.reason = message


@dataclass(frozen=True)
class TensorSpec:
    dtype: str
    shape: tuple[int, ...]


Bindings = dict[str, Any]  # param -> TensorSpec | scalar | None (validate/infer)
Arrays = dict[str, Any]    # param -> np.ndarray | scalar | None (execute)


def _spec(api: str, b: Bindings, name: str) -> TensorSpec:
    v = b.get(name)
    if not isinstance(v, TensorSpec):
        raise ValidityError(api, f"parameter {name!r} must be a tensor")
    return v


def _opt_spec(api: str, b: Bindings, name: str) -> Optional[TensorSpec]:
    v = b.get(name)
    if v is None:
        return None
    if not isinstance(v, TensorSpec):
        raise ValidityError(api, f"parameter {name!r} must be a tensor or omitted")
    return v


def _int(api: str, b: Bindings, name: str) -> int:
    v = b.get(name)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidityError(api, f"parameter {name!r} must be an integer, got {v!r}")
    return v


def _number(api: str, b: Bindings, name: str) -> float:
    v = b.get(name)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidityError(api, f"parameter {name!r} must be a number, got {v!r}")
    return float(v)


def _bool(api: str, b: Bindings, name: str) -> bool:
    v = b.get(name)
    if not isinstance(v, bool):
        raise ValidityError(api, f"parameter {name!r} must be a boolean, got {v!r}")
    return v


def _pair(api: str, b: Bindings, name: str, *, minimum: int) -> tuple[int, int]:
    """int-tuple parameter: a single int or a pair, expanded to (h, w)."""
    v = b.get(name)
    if isinstance(v, bool):
        raise ValidityError(api, f"parameter {name!r} must be an int or pair of ints")
    if isinstance(v, int):
        pair = (v, v)
    elif isinstance(v, (tuple, list)) and len(v) == 2 \
            and all(isinstance(d, int) and not isinstance(d, bool) for d in v):
        pair = (int(v[0]), int(v[1]))
    else:
        raise ValidityError(api, f"parameter {name!r} must be an int or pair of ints, got {v!r}")
    if pair[0] < minimum or pair[1] < minimum:
        raise ValidityError(api, f"parameter {name!r} must be >= {minimum}, got {pair}")
    return pair


def _widest(*specs: Optional[TensorSpec]) -> str:
    return "f64" if any(s is not None and s.dtype == "f64" for s in specs) else "f32"


def _broadcast(api: str, a: TensorSpec, b: TensorSpec) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError:
        raise ValidityError(
            api, f"operand shapes {list(a.shape)} and {list(b.shape)} are not broadcastable"
        ) from None


@dataclass(frozen=True)
class OpDef:
    api: str
    validate: Callable[[Bindings], None]
    infer: Callable[[Bindings], tuple[str, tuple[int, ...]]]
    execute: Callable[[Arrays, dict], np.ndarray]


# ------------------------------------------------------- elementwise unary ops

def _v_relu(b: Bindings) -> None:
    _spec("relu", b, "input")


def _i_relu(b: Bindings):
    s = _spec("relu", b, "input")
    return s.dtype, s.shape


def _x_relu(a: Arrays, ctx: dict) -> np.ndarray:
    return np.maximum(a["input"], 0)


def _v_gelu(b: Bindings) -> None:
    _spec("gelu", b, "input")


def _i_gelu(b: Bindings):
    s = _spec("gelu", b, "input")
    return s.dtype, s.shape


def _x_gelu(a: Arrays, ctx: dict) -> np.ndarray:
    return core.gelu_core(a["input"])


# --------------------------------------------------------- binary elementwise

def _ew(api: str, fn):
    def validate(b: Bindings) -> None:
        _broadcast(api, _spec(api, b, "input"), _spec(api, b, "other"))

    def infer(b: Bindings):
        x, y = _spec(api, b, "input"), _spec(api, b, "other")
        return _widest(x, y), _broadcast(api, x, y)

    def execute(a: Arrays, ctx: dict) -> np.ndarray:
        return fn(a["input"], a["other"])

    return OpDef(api, validate, infer, execute)


# ----------------------------------------------------------------------- conv2d

def _conv_geometry(b: Bindings):
    api = "conv2d"
    x = _spec(api, b, "input")
    w = _spec(api, b, "weight")
    if len(x.shape) != 4:
        raise ValidityError(api, f"input must be 4-D (N, C, H, W), got {len(x.shape)}-D")
    if len(w.shape) != 4:
        raise ValidityError(api, f"weight must be 4-D (Cout, Cin/groups, kh, kw), got {len(w.shape)}-D")
    stride = _pair(api, b, "stride", minimum=1)
    padding = _pair(api, b, "padding", minimum=0)
    dilation = _pair(api, b, "dilation", minimum=1)
    groups = _int(api, b, "groups")
    if groups < 1:
        raise ValidityError(api, f"groups must be >= 1, got {groups}")
    n, cin, h, wd = x.shape
    cout, cig, kh, kw = w.shape
    if cin % groups != 0:
        raise ValidityError(api, f"input channels ({cin}) must be divisible by groups ({groups})")
    if cout % groups != 0:
        raise ValidityError(api, f"output channels ({cout}) must be divisible by groups ({groups})")
    if cig != cin // groups:
        raise ValidityError(
            api, f"weight expects {cig} input channels per group, input provides {cin // groups}")
    bias = _opt_spec(api, b, "bias")
    if bias is not None and bias.shape != (cout,):
        raise ValidityError(api, f"bias shape {list(bias.shape)} must be [{cout}]")
    oh = (h + 2 * padding[0] - dilation[0] * (kh - 1) - 1) // stride[0] + 1
    ow = (wd + 2 * padding[1] - dilation[1] * (kw - 1) - 1) // stride[1] + 1
    if oh < 1 or ow < 1:
        raise ValidityError(
            api, f"kernel {kh}x{kw} with stride {stride}, padding {padding}, dilation "
                 f"{dilation} does not fit input {h}x{wd} (output would be {oh}x{ow})")
    return x, w, stride, padding, dilation, groups, (n, cout, oh, ow)


def _v_conv2d(b: Bindings) -> None:
    _conv_geometry(b)


def _i_conv2d(b: Bindings):
    x, w, *_, out_shape = _conv_geometry(b)
    return _widest(x, w), out_shape


def _x_conv2d(a: Arrays, ctx: dict) -> np.ndarray:
    b = {k: (TensorSpec(_dt(v), v.shape) if isinstance(v, np.ndarray) else v)
         for k, v in a.items()}
    _, _, stride, padding, dilation, groups, out_shape = _conv_geometry(b)
    out = core.conv2d_core(a["input"], a["weight"], stride, padding, dilation,
                           groups, out_shape)
    if a.get("bias") is not None:
        out = out + a["bias"][None, :, None, None]
    return out


def _dt(arr: np.ndarray) -> str:
    return "f64" if arr.dtype == np.float64 else "f32"


# ------------------------------------------------------------------- max_pool2d

def _pool_geometry(b: Bindings):
    api = "max_pool2d"
    x = _spec(api, b, "input")
    if len(x.shape) != 4:
        raise ValidityError(api, f"input must be 4-D (N, C, H, W), got {len(x.shape)}-D")
    kernel = _pair(api, b, "kernel_size", minimum=1)
    stride = kernel if b.get("stride") is None else _pair(api, b, "stride", minimum=1)
    padding = _pair(api, b, "padding", minimum=0)
    dilation = _pair(api, b, "dilation", minimum=1)
    ceil_mode = _bool(api, b, "ceil_mode")
    if padding[0] > kernel[0] // 2 or padding[1] > kernel[1] // 2:
        raise ValidityError(
            api, f"pad should be at most half of kernel size, got padding {padding} "
                 f"for kernel {kernel}")
    n, c, h, w = x.shape

    def _extent(size: int, k: int, s: int, p: int, d: int) -> int:
        num = size + 2 * p - d * (k - 1) - 1
        o = -((-num) // s) + 1 if ceil_mode else num // s + 1
        if ceil_mode and (o - 1) * s >= size + p:
            o -= 1  # last window must start inside the (left-padded) input
        return o

    oh = _extent(h, kernel[0], stride[0], padding[0], dilation[0])
    ow = _extent(w, kernel[1], stride[1], padding[1], dilation[1])
    if oh < 1 or ow < 1:
        raise ValidityError(
            api, f"kernel {kernel} with stride {stride}, padding {padding}, dilation "
                 f"{dilation} does not fit input {h}x{w} (output would be {oh}x{ow})")
    return x, kernel, stride, padding, dilation, (n, c, oh, ow)


def _v_max_pool2d(b: Bindings) -> None:
    _pool_geometry(b)


def _i_max_pool2d(b: Bindings):
    x, *_, out_shape = _pool_geometry(b)
    return x.dtype, out_shape


def _x_max_pool2d(a: Arrays, ctx: dict) -> np.ndarray:
    b = dict(a)
    b["input"] = TensorSpec(_dt(a["input"]), a["input"].shape)
    _, kernel, stride, padding, dilation, out_shape = _pool_geometry(b)
    return core.max_pool2d_core(a["input"], kernel, stride, padding, dilation, out_shape)


# --------------------------------------------------------- adaptive_avg_pool2d

def _v_adaptive(b: Bindings) -> None:
    api = "adaptive_avg_pool2d"
    x = _spec(api, b, "input")
    if len(x.shape) != 4:
        raise ValidityError(api, f"input must be 4-D (N, C, H, W), got {len(x.shape)}-D")
    _pair(api, b, "output_size", minimum=1)


def _i_adaptive(b: Bindings):
    x = _spec("adaptive_avg_pool2d", b, "input")
    _v_adaptive(b)
    oh, ow = _pair("adaptive_avg_pool2d", b, "output_size", minimum=1)
    return x.dtype, (x.shape[0], x.shape[1], oh, ow)


def _x_adaptive(a: Arrays, ctx: dict) -> np.ndarray:
    x = a["input"]
    oh, ow = _pair("adaptive_avg_pool2d",
                   {"output_size": a["output_size"]}, "output_size", minimum=1)
    return core.adaptive_avg_pool2d_core(x, (x.shape[0], x.shape[1], oh, ow))


# ----------------------------------------------------------------------- matmul

def _v_matmul(b: Bindings) -> None:
    api = "matmul"
    x, y = _spec(api, b, "input"), _spec(api, b, "other")
    if len(x.shape) < 2 or len(y.shape) < 2:
        raise ValidityError(api, "both operands must have at least 2 dimensions")
    if x.shape[-1] != y.shape[-2]:
        raise ValidityError(
            api, f"inner dimensions must agree: {list(x.shape)} x {list(y.shape)}")
    try:
        np.broadcast_shapes(x.shape[:-2], y.shape[:-2])
    except ValueError:
        raise ValidityError(
            api, f"batch dimensions {list(x.shape[:-2])} and {list(y.shape[:-2])} "
                 f"are not broadcastable") from None


def _i_matmul(b: Bindings):
    _v_matmul(b)
    x, y = _spec("matmul", b, "input"), _spec("matmul", b, "other")
    batch = np.broadcast_shapes(x.shape[:-2], y.shape[:-2])
    return _widest(x, y), tuple(batch) + (x.shape[-2], y.shape[-1])


def _x_matmul(a: Arrays, ctx: dict) -> np.ndarray:
    x, y = a["input"], a["other"]
    batch = np.broadcast_shapes(x.shape[:-2], y.shape[:-2])
    m, k, n = x.shape[-2], x.shape[-1], y.shape[-1]
    xb = np.ascontiguousarray(np.broadcast_to(x, batch + (m, k))).reshape(-1, m, k)
    yb = np.ascontiguousarray(np.broadcast_to(y, batch + (k, n))).reshape(-1, k, n)
    out = core.matmul3_core(xb, yb)
    return out.reshape(batch + (m, n))


# ----------------------------------------------------------------------- linear

def _v_linear(b: Bindings) -> None:
    api = "linear"
    x, w = _spec(api, b, "input"), _spec(api, b, "weight")
    if len(w.shape) != 2:
        raise ValidityError(api, f"weight must be 2-D (out, in), got {len(w.shape)}-D")
    if len(x.shape) < 1 or x.shape[-1] != w.shape[1]:
        raise ValidityError(
            api, f"input features ({list(x.shape)}) do not match weight in-features "
                 f"({w.shape[1]})")
    bias = _opt_spec(api, b, "bias")
    if bias is not None and bias.shape != (w.shape[0],):
        raise ValidityError(api, f"bias shape {list(bias.shape)} must be [{w.shape[0]}]")


def _i_linear(b: Bindings):
    _v_linear(b)
    x, w = _spec("linear", b, "input"), _spec("linear", b, "weight")
    return _widest(x, w), x.shape[:-1] + (w.shape[0],)


def _x_linear(a: Arrays, ctx: dict) -> np.ndarray:
    x, w = a["input"], a["weight"]
    lead = x.shape[:-1]
    x2 = np.ascontiguousarray(x).reshape(-1, x.shape[-1])
    out = core.linear_core(x2, w)
    if a.get("bias") is not None:
        out = out + a["bias"][None, :]
    return out.reshape(lead + (w.shape[0],))


# ---------------------------------------------------------------------- softmax

def _norm_dim(api: str, dim: int, ndim: int) -> int:
    if not -ndim <= dim < ndim:
        raise ValidityError(api, f"dim {dim} out of range for {ndim}-D input")
    return dim % ndim


def _v_softmax(b: Bindings) -> None:
    x = _spec("softmax", b, "input")
    _norm_dim("softmax", _int("softmax", b, "dim"), len(x.shape))


def _i_softmax(b: Bindings):
    _v_softmax(b)
    x = _spec("softmax", b, "input")
    return x.dtype, x.shape


def _x_softmax(a: Arrays, ctx: dict) -> np.ndarray:
    x = a["input"]
    dim = _norm_dim("softmax", int(a["dim"]), x.ndim)
    moved = np.moveaxis(x, dim, -1)
    rows = np.ascontiguousarray(moved).reshape(-1, moved.shape[-1])
    out = core.softmax_rows_core(rows).reshape(moved.shape)
    return np.ascontiguousarray(np.moveaxis(out, -1, dim))


# ------------------------------------------------------------------- layer_norm

def _ln_shape(api: str, b: Bindings) -> tuple[int, ...]:
    v = b.get("normalized_shape")
    if isinstance(v, int) and not isinstance(v, bool):
        v = (v,)
    if not isinstance(v, (tuple, list)) or not v \
            or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in v):
        raise ValidityError(api, f"normalized_shape must be positive ints, got {v!r}")
    return tuple(int(d) for d in v)


def _v_layer_norm(b: Bindings) -> None:
    api = "layer_norm"
    x = _spec(api, b, "input")
    ns = _ln_shape(api, b)
    if len(ns) > len(x.shape) or tuple(x.shape[len(x.shape) - len(ns):]) != ns:
        raise ValidityError(
            api, f"normalized_shape {list(ns)} must match the trailing dimensions of "
                 f"input shape {list(x.shape)}")
    for name in ("weight", "bias"):
        t = _opt_spec(api, b, name)
        if t is not None and t.shape != ns:
            raise ValidityError(api, f"{name} shape {list(t.shape)} must equal "
                                     f"normalized_shape {list(ns)}")
    _number(api, b, "eps")


def _i_layer_norm(b: Bindings):
    _v_layer_norm(b)
    x = _spec("layer_norm", b, "input")
    return x.dtype, x.shape


def _x_layer_norm(a: Arrays, ctx: dict) -> np.ndarray:
    x = a["input"]
    ns = _ln_shape("layer_norm", {"normalized_shape": a["normalized_shape"]})
    inner = int(np.prod(ns, dtype=np.int64))
    rows = np.ascontiguousarray(x).reshape(-1, inner)
    out = core.layer_norm_rows_core(rows, float(a["eps"])).reshape(x.shape)
    if a.get("weight") is not None:
        out = out * a["weight"].reshape((1,) * (x.ndim - len(ns)) + ns)
    if a.get("bias") is not None:
        out = out + a["bias"].reshape((1,) * (x.ndim - len(ns)) + ns)
    return out


# ------------------------------------------------------------------- batch_norm

def _v_batch_norm(b: Bindings) -> None:
    api = "batch_norm"
    x = _spec(api, b, "input")
    if len(x.shape) < 2:
        raise ValidityError(api, f"input must have at least 2 dimensions, got {len(x.shape)}")
    c = x.shape[1]
    for name in ("running_mean", "running_var"):
        t = _spec(api, b, name)
        if t.shape != (c,):
            raise ValidityError(api, f"{name} shape {list(t.shape)} must be [{c}]")
    for name in ("weight", "bias"):
        t = _opt_spec(api, b, name)
        if t is not None and t.shape != (c,):
            raise ValidityError(api, f"{name} shape {list(t.shape)} must be [{c}]")
    if _bool(api, b, "training"):
        raise ValidityError(api, "training-mode batch_norm is not supported "
                                 "(inference statistics only)")
    _number(api, b, "momentum")
    _number(api, b, "eps")


def _i_batch_norm(b: Bindings):
    _v_batch_norm(b)
    x = _spec("batch_norm", b, "input")
    return x.dtype, x.shape


def _x_batch_norm(a: Arrays, ctx: dict) -> np.ndarray:
    x = a["input"]
    dt = x.dtype.type
    bc = (1, x.shape[1]) + (1,) * (x.ndim - 2)
    inv = dt(1.0) / np.sqrt(a["running_var"] + dt(a["eps"]))
    out = (x - a["running_mean"].reshape(bc)) * inv.reshape(bc)
    if a.get("weight") is not None:
        out = out * a["weight"].reshape(bc)
    if a.get("bias") is not None:
        out = out + a["bias"].reshape(bc)
    return out


# ---------------------------------------------------------------------- dropout

def _v_dropout(b: Bindings) -> None:
    api = "dropout"
    _spec(api, b, "input")
    p = _number(api, b, "p")
    if not 0.0 <= p <= 1.0:
        raise ValidityError(api, f"dropout probability has to be between 0 and 1, but got {p:g}")
    _bool(api, b, "training")


def _i_dropout(b: Bindings):
    _v_dropout(b)
    x = _spec("dropout", b, "input")
    return x.dtype, x.shape


def _x_dropout(a: Arrays, ctx: dict) -> np.ndarray:
    x = a["input"]
    if not a["training"]:
        return x.copy()
    p = float(a["p"])
    if p >= 1.0:
        return np.zeros_like(x)
    key = ctx.get("dropout_key", rng.derive_key(0, rng.CH_DROPOUT, 0))
    keep = rng.unit_stream(key, 0, x.size).reshape(x.shape) >= p
    scale = x.dtype.type(1.0 / (1.0 - p))
    return np.where(keep, x * scale, x.dtype.type(0.0))


# ---------------------------------------------------------------------- flatten

def _flatten_shape(b: Bindings) -> tuple[int, ...]:
    api = "flatten"
    x = _spec(api, b, "input")
    nd = len(x.shape)
    start = _int(api, b, "start_dim")
    end = _int(api, b, "end_dim")
    if not -nd <= start < nd:
        raise ValidityError(api, f"start_dim {start} out of range for {nd}-D input")
    if not -nd <= end < nd:
        raise ValidityError(api, f"end_dim {end} out of range for {nd}-D input")
    start %= nd
    end %= nd
    if start > end:
        raise ValidityError(api, f"start_dim {start} must not come after end_dim {end}")
    merged = int(np.prod(x.shape[start:end + 1], dtype=np.int64))
    return x.shape[:start] + (merged,) + x.shape[end + 1:]


def _v_flatten(b: Bindings) -> None:
    _flatten_shape(b)


def _i_flatten(b: Bindings):
    x = _spec("flatten", b, "input")
    return x.dtype, _flatten_shape(b)


def _x_flatten(a: Arrays, ctx: dict) -> np.ndarray:
    x = a["input"]
    shape = _flatten_shape({"input": TensorSpec(_dt(x), x.shape),
                            "start_dim": a["start_dim"], "end_dim": a["end_dim"]})
    return np.ascontiguousarray(x).reshape(shape)


# ----------------------------------------------------------------------- table

OPS: dict[str, OpDef] = {
    "relu": OpDef("relu", _v_relu, _i_relu, _x_relu),
    "gelu": OpDef("gelu", _v_gelu, _i_gelu, _x_gelu),
    "__add__": _ew("__add__", lambda x, y: x + y),
    "__mul__": _ew("__mul__", lambda x, y: x * y),
    "div": _ew("div", lambda x, y: x / y),
    "conv2d": OpDef("conv2d", _v_conv2d, _i_conv2d, _x_conv2d),
    "max_pool2d": OpDef("max_pool2d", _v_max_pool2d, _i_max_pool2d, _x_max_pool2d),
    "adaptive_avg_pool2d": OpDef("adaptive_avg_pool2d", _v_adaptive, _i_adaptive, _x_adaptive),
    "matmul": OpDef("matmul", _v_matmul, _i_matmul, _x_matmul),
    "linear": OpDef("linear", _v_linear, _i_linear, _x_linear),
    "softmax": OpDef("softmax", _v_softmax, _i_softmax, _x_softmax),
    "layer_norm": OpDef("layer_norm", _v_layer_norm, _i_layer_norm, _x_layer_norm),
    "batch_norm": OpDef("batch_norm", _v_batch_norm, _i_batch_norm, _x_batch_norm),
    "dropout": OpDef("dropout", _v_dropout, _i_dropout, _x_dropout),
    "flatten": OpDef("flatten", _v_flatten, _i_flatten, _x_flatten),
}

assert set(OPS) == set(REGISTRY), "operator table must cover the signature registry"
