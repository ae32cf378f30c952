# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel cores.

Mirrors _slowcore.py operation-for-operation: reductions accumulate in
ascending index order at the working precision, exp/erf go through libm's
double routines with one final rounding, and the build disables fp-contract
so no fused multiply-adds sneak in. Outputs are value-identical to the
pure-Python core; only speed differs.
"""

import numpy as np

from libc.math cimport INFINITY, erf, exp, isnan, sqrt, sqrtf

ctypedef fused real_t:
    float
    double

cdef double INV_SQRT2 = sqrt(0.5)


def _carr(x):
    """C-contiguous, writable view or copy (memoryviews need writable)."""
    x = np.ascontiguousarray(x)
    return x if x.flags.writeable else x.copy()



# ---------------------------------------------------------------------- conv2d

cdef void _conv2d(real_t[:, :, :, ::1] x, real_t[:, :, :, ::1] w,
                  int sh, int sw, int ph, int pw, int dh, int dw, int groups,
                  real_t[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0], cig = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = out.shape[2], ow = out.shape[3]
    cdef Py_ssize_t cog = cout // groups
    cdef Py_ssize_t b, g, co, oc, ic, oy, ox, ci, i, j, iy, ix
    cdef real_t acc
    for b in range(n):
        for g in range(groups):
            for co in range(cog):
                oc = g * cog + co
                for oy in range(oh):
                    for ox in range(ow):
                        acc = 0
                        for ci in range(cig):
                            ic = g * cig + ci
                            for i in range(kh):
                                iy = oy * sh + i * dh - ph
                                if iy < 0 or iy >= h:
                                    continue
                                for j in range(kw):
                                    ix = ox * sw + j * dw - pw
                                    if 0 <= ix < wd:
                                        acc = acc + x[b, ic, iy, ix] * w[oc, ci, i, j]
                        out[b, oc, oy, ox] = acc


def conv2d_core(x, w, stride, padding, dilation, int groups, out_shape):
    x = _carr(x)
    w = _carr(w)
    out = np.zeros(out_shape, dtype=x.dtype)
    cdef int sh = stride[0], sw = stride[1]
    cdef int ph = padding[0], pw = padding[1]
    cdef int dh = dilation[0], dw = dilation[1]
    if x.dtype == np.float32:
        _conv2d[float](x, w, sh, sw, ph, pw, dh, dw, groups, out)
    else:
        _conv2d[double](x, w, sh, sw, ph, pw, dh, dw, groups, out)
    return out


# ------------------------------------------------------------------ max_pool2d

cdef void _max_pool2d(real_t[:, :, :, ::1] x,
                      int kh, int kw, int sh, int sw, int ph, int pw,
                      int dh, int dw, real_t[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t oh = out.shape[2], ow = out.shape[3]
    cdef Py_ssize_t b, ch, oy, ox, i, j, iy, ix
    cdef real_t m, v
    cdef bint saw_nan
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    m = -INFINITY
                    saw_nan = False
                    for i in range(kh):
                        iy = oy * sh + i * dh - ph
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox * sw + j * dw - pw
                            if ix < 0 or ix >= wd:
                                continue
                            v = x[b, ch, iy, ix]
                            if isnan(v):
                                m = v
                                saw_nan = True
                                break
                            if v > m:
                                m = v
                        if saw_nan:
                            break
                    out[b, ch, oy, ox] = m


def max_pool2d_core(x, kernel, stride, padding, dilation, out_shape):
    x = _carr(x)
    out = np.empty(out_shape, dtype=x.dtype)
    cdef int kh = kernel[0], kw = kernel[1]
    cdef int sh = stride[0], sw = stride[1]
    cdef int ph = padding[0], pw = padding[1]
    cdef int dh = dilation[0], dw = dilation[1]
    if x.dtype == np.float32:
        _max_pool2d[float](x, kh, kw, sh, sw, ph, pw, dh, dw, out)
    else:
        _max_pool2d[double](x, kh, kw, sh, sw, ph, pw, dh, dw, out)
    return out


# --------------------------------------------------------- adaptive_avg_pool2d

cdef void _adaptive_avg_pool2d(real_t[:, :, :, ::1] x,
                               real_t[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t oh = out.shape[2], ow = out.shape[3]
    cdef Py_ssize_t b, ch, i, j, hs, he, ws, we, r, s
    cdef real_t acc
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                hs = (i * h) // oh
                he = ((i + 1) * h + oh - 1) // oh
                for j in range(ow):
                    ws = (j * wd) // ow
                    we = ((j + 1) * wd + ow - 1) // ow
                    acc = 0
                    for r in range(hs, he):
                        for s in range(ws, we):
                            acc = acc + x[b, ch, r, s]
                    out[b, ch, i, j] = acc / (<real_t>((he - hs) * (we - ws)))


def adaptive_avg_pool2d_core(x, out_shape):
    x = _carr(x)
    out = np.empty(out_shape, dtype=x.dtype)
    if x.dtype == np.float32:
        _adaptive_avg_pool2d[float](x, out)
    else:
        _adaptive_avg_pool2d[double](x, out)
    return out


# -------------------------------------------------------------- matmul, linear

cdef void _matmul3(real_t[:, :, ::1] a, real_t[:, :, ::1] b,
                   real_t[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t bs = a.shape[0], m = a.shape[1], k = a.shape[2], n = b.shape[2]
    cdef Py_ssize_t i, r, cc, kk
    cdef real_t acc
    for i in range(bs):
        for r in range(m):
            for cc in range(n):
                acc = 0
                for kk in range(k):
                    acc = acc + a[i, r, kk] * b[i, kk, cc]
                out[i, r, cc] = acc


def matmul3_core(a, b):
    a = _carr(a)
    b = _carr(b)
    out = np.empty((a.shape[0], a.shape[1], b.shape[2]), dtype=a.dtype)
    if a.dtype == np.float32:
        _matmul3[float](a, b, out)
    else:
        _matmul3[double](a, b, out)
    return out


cdef void _linear(real_t[:, ::1] x, real_t[:, ::1] w,
                  real_t[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t rows = x.shape[0], cin = x.shape[1], cout = w.shape[0]
    cdef Py_ssize_t r, o, kk
    cdef real_t acc
    for r in range(rows):
        for o in range(cout):
            acc = 0
            for kk in range(cin):
                acc = acc + x[r, kk] * w[o, kk]
            out[r, o] = acc


def linear_core(x, w):
    x = _carr(x)
    w = _carr(w)
    out = np.empty((x.shape[0], w.shape[0]), dtype=x.dtype)
    if x.dtype == np.float32:
        _linear[float](x, w, out)
    else:
        _linear[double](x, w, out)
    return out


# ----------------------------------------------------------- softmax (by rows)

cdef void _softmax_rows(real_t[:, ::1] x, real_t[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t rows = x.shape[0], s = x.shape[1]
    cdef Py_ssize_t r, j
    cdef real_t m, v, t, acc
    for r in range(rows):
        m = x[r, 0]
        for j in range(1, s):
            v = x[r, j]
            if isnan(v):
                m = v
                break
            if v > m:
                m = v
        acc = 0
        for j in range(s):
            t = <real_t>exp(<double>(x[r, j] - m))
            out[r, j] = t
            acc = acc + t
        for j in range(s):
            out[r, j] = out[r, j] / acc


def softmax_rows_core(x):
    x = _carr(x)
    out = np.empty_like(x)
    if x.dtype == np.float32:
        _softmax_rows[float](x, out)
    else:
        _softmax_rows[double](x, out)
    return out


# -------------------------------------------------------- layer_norm (by rows)

cdef void _layer_norm_rows(real_t[:, ::1] x, double eps,
                           real_t[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t rows = x.shape[0], s = x.shape[1]
    cdef Py_ssize_t r, j
    cdef real_t mean, var, d, inv, cnt, epsr
    cnt = <real_t>s
    epsr = <real_t>eps
    for r in range(rows):
        mean = x[r, 0]
        for j in range(1, s):
            mean = mean + x[r, j]
        mean = mean / cnt
        var = 0
        for j in range(s):
            d = x[r, j] - mean
            var = var + d * d
        var = var / cnt
        if real_t is float:
            inv = (<float>1.0) / sqrtf(var + epsr)
        else:
            inv = 1.0 / sqrt(var + epsr)
        for j in range(s):
            out[r, j] = (x[r, j] - mean) * inv


def layer_norm_rows_core(x, eps):
    x = _carr(x)
    out = np.empty_like(x)
    if x.dtype == np.float32:
        _layer_norm_rows[float](x, eps, out)
    else:
        _layer_norm_rows[double](x, eps, out)
    return out


# ------------------------------------------------------------------------ gelu

cdef void _gelu(real_t[::1] x, real_t[::1] out) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double xd
    for i in range(n):
        xd = <double>x[i]
        out[i] = <real_t>(0.5 * xd * (1.0 + erf(xd * INV_SQRT2)))


def gelu_core(x):
    x = _carr(x)
    flat = x.reshape(-1)
    out = np.empty_like(flat)
    if x.dtype == np.float32:
        _gelu[float](flat, out)
    else:
        _gelu[double](flat, out)
    return out.reshape(x.shape)
