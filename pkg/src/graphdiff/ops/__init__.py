"""Reference operator backend: validity checks, shape inference, execution.

The same 15 kernels run at two working precisions (f32 / f64); whichever
kernel core is active (compiled or pure Python, see .core) the values are
identical. NaN and Inf are data: execution never raises on them.
"""

from __future__ import annotations

from typing import Any, Optional

import numpy as np

from ..signatures import REGISTRY, ParamKind
from ..tensors import TensorValue, from_numpy, np_dtype
from .core import ACTIVE_CORE
from .op_defs import OPS, Bindings, TensorSpec, ValidityError

__all__ = [
    "ACTIVE_CORE", "TensorSpec", "ValidityError",
    "validate", "infer_output", "execute_node", "fill_defaults",
]


def fill_defaults(api: str, bindings: dict[str, Any]) -> dict[str, Any]:
    """Add defaults for optional parameters that are absent from bindings."""
    sig = REGISTRY[api]  # KeyError on unknown api is the right failure here
    out = dict(bindings)
    for p in sig.params:
        if p.name not in out:
            if not p.optional:
                raise ValidityError(api, f"required parameter {p.name!r} is missing")
            out[p.name] = p.default
    return out


def _to_spec(v: Any) -> Any:
    if isinstance(v, TensorValue):
        return TensorSpec(v.dtype, v.shape)
    if isinstance(v, np.ndarray):
        return TensorSpec("f64" if v.dtype == np.float64 else "f32", tuple(v.shape))
    return v


def validate(api: str, bindings: dict[str, Any]) -> None:
    """Raise ValidityError unless the op's documented input constraints hold.

    Works at the shape level: tensors may be TensorValue, numpy arrays, or
    TensorSpec; values are never inspected.
    """
    b: Bindings = {k: _to_spec(v) for k, v in fill_defaults(api, bindings).items()}
    OPS[api].validate(b)


def infer_output(api: str, bindings: dict[str, Any]) -> tuple[str, tuple[int, ...]]:
    """The exact (dtype, shape) execute_node would produce for these bindings."""
    b: Bindings = {k: _to_spec(v) for k, v in fill_defaults(api, bindings).items()}
    return OPS[api].infer(b)


def execute_node(api: str, bindings: dict[str, Any], precision: str,
                 ctx: Optional[dict] = None) -> TensorValue:
    """Run one operator at the given working precision ("f32" or "f64").

    Tensor bindings are cast to the working precision on entry; the result
    carries the working precision's dtype. ``ctx`` may carry a "dropout_key"
    (shared mask stream) so both sides of a differential run drop the same
    elements.
    """
    if precision not in ("f32", "f64"):
        raise ValueError(f"precision must be f32 or f64, not {precision!r}")
    full = fill_defaults(api, bindings)
    validate(api, full)
    target = np_dtype(precision)
    arrays: dict[str, Any] = {}
    for name, v in full.items():
        if isinstance(v, TensorValue):
            arrays[name] = np.ascontiguousarray(v.data).astype(target, copy=False)
        elif isinstance(v, np.ndarray):
            arrays[name] = np.ascontiguousarray(v).astype(target, copy=False)
        else:
            arrays[name] = v
    with np.errstate(all="ignore"):
        out = OPS[api].execute(arrays, ctx or {})
    return from_numpy(np.ascontiguousarray(out))
