"""Tensor values: dtype + shape + row-major payload, and their wire encoding.

The wire encoding (little-endian flat data, base64) is shared with case files
and the out-of-process bridge protocol.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np

DTYPES = ("f32", "f64")

_NP_DTYPE = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_NAME = {np.dtype("float32"): "f32", np.dtype("float64"): "f64"}


@dataclass(frozen=True)
class TensorValue:
    dtype: str
    shape: tuple[int, ...]
    data: np.ndarray  # C-contiguous, shaped, matching dtype

    def __post_init__(self) -> None:
        if self.dtype not in DTYPES:
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        if any(d < 1 for d in self.shape):
            raise ValueError(f"shape dims must be >= 1, got {self.shape}")
        if tuple(self.data.shape) != tuple(self.shape):
            raise ValueError(f"data shape {self.data.shape} != declared shape {self.shape}")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


def from_numpy(arr: np.ndarray) -> TensorValue:
    name = _DTYPE_NAME.get(arr.dtype)
    if name is None:
        raise ValueError(f"unsupported numpy dtype {arr.dtype}")
    return TensorValue(name, tuple(int(d) for d in arr.shape), np.ascontiguousarray(arr))


def zeros(dtype: str, shape: tuple[int, ...]) -> TensorValue:
    return TensorValue(dtype, tuple(shape), np.zeros(shape, dtype=_NP_DTYPE[dtype]))


def np_dtype(dtype: str) -> np.dtype:
    return _NP_DTYPE[dtype]


def encode_payload(t: TensorValue) -> dict:
    """Wire form: {"dtype", "shape", "b64"} with little-endian flat data."""
    flat = np.ascontiguousarray(t.data, dtype=_NP_DTYPE[t.dtype])
    return {
        "dtype": t.dtype,
        "shape": list(t.shape),
        "b64": base64.b64encode(flat.tobytes()).decode("ascii"),
    }


def decode_payload(obj: dict) -> TensorValue:
    dtype = obj["dtype"]
    if dtype not in DTYPES:
        raise ValueError(f"payload has unsupported dtype {dtype!r}")
    shape = tuple(int(d) for d in obj["shape"])
    raw = base64.b64decode(obj["b64"], validate=True)
    count = int(np.prod(shape, dtype=np.int64))
    arr = np.frombuffer(raw, dtype=_NP_DTYPE[dtype])
    if arr.size != count:
        raise ValueError(f"payload length {arr.size} does not match shape {shape}")
    return TensorValue(dtype, shape, arr.reshape(shape).copy())
