"""Wire encoding for the bridge: line-delimited JSON with base64 tensors.

Tensor payloads are {"dtype": "f32"|"f64", "shape": [...], "b64": ...} with
little-endian flat data, matching the harness's case/report formats. This
module deliberately has no dependency on the harness package: the wire format
is the contract.
"""

from __future__ import annotations

import base64

import numpy as np

PROTOCOL_VERSION = 1

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_NAMES = {np.dtype("float32"): "f32", np.dtype("float64"): "f64"}


def encode_tensor(arr: np.ndarray) -> dict:
    name = _NAMES.get(arr.dtype)
    if name is None:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    flat = np.ascontiguousarray(arr, dtype=_DTYPES[name])
    return {
        "dtype": name,
        "shape": list(arr.shape),
        "b64": base64.b64encode(flat.tobytes()).decode("ascii"),
    }


def decode_tensor(obj: dict) -> np.ndarray:
    dtype = _DTYPES.get(obj.get("dtype"))
    if dtype is None:
        raise ValueError(f"unsupported payload dtype {obj.get('dtype')!r}")
    shape = tuple(int(d) for d in obj["shape"])
    raw = base64.b64decode(obj["b64"], validate=True)
    arr = np.frombuffer(raw, dtype=dtype)
    expected = int(np.prod(shape, dtype=np.int64))
    if arr.size != expected:
        raise ValueError(f"payload holds {arr.size} values, shape wants {expected}")
    return arr.reshape(shape).copy()
