"""Pure-Python kernel cores (numpy, no compiled extension).

Every reduction here accumulates sequentially in ascending index order at the
working precision, and transcendentals (exp, erf) go through libm's double
routines with a single final rounding. The compiled core in _fastkernels.pyx
follows the exact same per-element operation order, so both cores produce
identical values and either may serve a backend.
"""

from __future__ import annotations

import math

import numpy as np

_exp_d = np.frompyfunc(math.exp, 1, 1)
_erf_d = np.frompyfunc(math.erf, 1, 1)

_INV_SQRT2 = math.sqrt(0.5)


def conv2d_core(x: np.ndarray, w: np.ndarray, stride, padding, dilation,
                groups: int, out_shape) -> np.ndarray:
    """Grouped 2-D cross-correlation, taps accumulated in (ci, kh, kw) order."""
    n, cin, _, _ = x.shape
    cout, cig, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    dh, dw = dilation
    _, _, oh, ow = out_shape
    cog = cout // groups

    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.zeros(out_shape, dtype=x.dtype)
    for g in range(groups):
        acc = out[:, g * cog:(g + 1) * cog]
        wg = w[g * cog:(g + 1) * cog]
        for ci in range(cig):
            ch = xp[:, g * cig + ci]
            for i in range(kh):
                rows = ch[:, i * dh: i * dh + (oh - 1) * sh + 1: sh]
                for j in range(kw):
                    win = rows[:, :, j * dw: j * dw + (ow - 1) * sw + 1: sw]
                    acc += win[:, None] * wg[None, :, ci, i, j, None, None]
    return out


def max_pool2d_core(x: np.ndarray, kernel, stride, padding, dilation,
                    out_shape) -> np.ndarray:
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    dh, dw = dilation
    _, _, oh, ow = out_shape
    h, w = x.shape[2], x.shape[3]

    # With ceil_mode the last window may overhang the padded input; pad far
    # enough that every tap slice is full. Overhang is -inf, the max identity.
    eh = max(0, (oh - 1) * sh + (kh - 1) * dh + 1 - (h + 2 * ph))
    ew = max(0, (ow - 1) * sw + (kw - 1) * dw + 1 - (w + 2 * pw))
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph + eh), (pw, pw + ew)),
                constant_values=-np.inf)
    out = np.full(out_shape, -np.inf, dtype=x.dtype)
    for i in range(kh):
        rows = xp[:, :, i * dh: i * dh + (oh - 1) * sh + 1: sh]
        for j in range(kw):
            win = rows[:, :, :, j * dw: j * dw + (ow - 1) * sw + 1: sw]
            out = np.maximum(out, win)
    return out


def adaptive_avg_pool2d_core(x: np.ndarray, out_shape) -> np.ndarray:
    n, c, h, w = x.shape
    _, _, oh, ow = out_shape
    out = np.zeros(out_shape, dtype=x.dtype)
    for i in range(oh):
        hs, he = (i * h) // oh, -((-(i + 1) * h) // oh)
        for j in range(ow):
            ws, we = (j * w) // ow, -((-(j + 1) * w) // ow)
            acc = np.zeros((n, c), dtype=x.dtype)
            for r in range(hs, he):
                for s in range(ws, we):
                    acc += x[:, :, r, s]
            out[:, :, i, j] = acc / x.dtype.type((he - hs) * (we - ws))
    return out


def matmul3_core(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[B, M, K] x [B, K, N], inner products accumulated in ascending k."""
    bsz, m, k = a.shape
    n = b.shape[2]
    out = np.zeros((bsz, m, n), dtype=a.dtype)
    for kk in range(k):
        out += a[:, :, kk, None] * b[:, kk, None, :]
    return out


def linear_core(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """[R, IN] x [OUT, IN]^T, accumulated in ascending input index."""
    r, cin = x.shape
    out = np.zeros((r, w.shape[0]), dtype=x.dtype)
    for kk in range(cin):
        out += x[:, kk, None] * w[None, :, kk]
    return out


def softmax_rows_core(x: np.ndarray) -> np.ndarray:
    """Row softmax: max-subtract, exp via libm double, ordered row sums."""
    m = np.max(x, axis=1)
    diff = (x - m[:, None]).astype(np.float64)
    t = _exp_d(diff).astype(np.float64).astype(x.dtype)
    s = t[:, 0].copy()
    for j in range(1, t.shape[1]):
        s += t[:, j]
    return t / s[:, None]


def layer_norm_rows_core(x: np.ndarray, eps: float) -> np.ndarray:
    """Row normalization: biased moments, ordered accumulation."""
    r, s = x.shape
    cnt = x.dtype.type(s)
    epsv = x.dtype.type(eps)
    mean = x[:, 0].copy()
    for j in range(1, s):
        mean += x[:, j]
    mean = mean / cnt
    var = np.zeros(r, dtype=x.dtype)
    for j in range(s):
        d = x[:, j] - mean
        var += d * d
    var = var / cnt
    inv = x.dtype.type(1.0) / np.sqrt(var + epsv)
    return (x - mean[:, None]) * inv[:, None]


def gelu_core(x: np.ndarray) -> np.ndarray:
    """0.5 * x * (1 + erf(x / sqrt(2))), evaluated in double, rounded once."""
    xd = x.astype(np.float64)
    y = 0.5 * xd * (1.0 + _erf_d(xd * _INV_SQRT2).astype(np.float64))
    return y.astype(x.dtype)
