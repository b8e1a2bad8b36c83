# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled fused kernels for the transformer hot loops.

Semantics mirror ``dpfim.kernels.reference`` exactly; see that module
for the contracts. Loops are single-threaded on purpose so summation
order is fixed and runs stay deterministic.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, tanh, INFINITY

cnp.import_array()

cdef double GELU_C0 = sqrt(2.0 / 3.14159265358979323846)
cdef double GELU_C1 = 0.044715


cdef inline object _f64(object a):
    return np.ascontiguousarray(a, dtype=np.float64)


def layernorm_fwd(x, gamma, beta, double eps=1e-5):
    cdef double[:, ::1] xv = _f64(x)
    cdef double[::1] g = _f64(gamma), b = _f64(beta)
    cdef Py_ssize_t R = xv.shape[0], D = xv.shape[1], r, d
    y_arr = np.empty((R, D), dtype=np.float64)
    mean_arr = np.empty(R, dtype=np.float64)
    rstd_arr = np.empty(R, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[::1] mean = mean_arr, rstd = rstd_arr
    cdef double mu, var, xc, rs
    with nogil:
        for r in range(R):
            mu = 0.0
            for d in range(D):
                mu += xv[r, d]
            mu /= D
            var = 0.0
            for d in range(D):
                xc = xv[r, d] - mu
                var += xc * xc
            var /= D
            rs = 1.0 / sqrt(var + eps)
            mean[r] = mu
            rstd[r] = rs
            for d in range(D):
                y[r, d] = (xv[r, d] - mu) * rs * g[d] + b[d]
    return y_arr, mean_arr, rstd_arr


def layernorm_bwd(dy, x, gamma, mean, rstd):
    cdef double[:, ::1] dyv = _f64(dy), xv = _f64(x)
    cdef double[::1] g = _f64(gamma), mu = _f64(mean), rs = _f64(rstd)
    cdef Py_ssize_t R = dyv.shape[0], D = dyv.shape[1], r, d
    dx_arr = np.empty((R, D), dtype=np.float64)
    dg_arr = np.zeros(D, dtype=np.float64)
    db_arr = np.zeros(D, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dg = dg_arr, db = db_arr
    cdef double xhat, dxh, m1, m2
    with nogil:
        for r in range(R):
            m1 = 0.0
            m2 = 0.0
            for d in range(D):
                xhat = (xv[r, d] - mu[r]) * rs[r]
                dxh = dyv[r, d] * g[d]
                dg[d] += dyv[r, d] * xhat
                db[d] += dyv[r, d]
                m1 += dxh
                m2 += dxh * xhat
            m1 /= D
            m2 /= D
            for d in range(D):
                xhat = (xv[r, d] - mu[r]) * rs[r]
                dxh = dyv[r, d] * g[d]
                dx[r, d] = (dxh - m1 - xhat * m2) * rs[r]
    return dx_arr, dg_arr, db_arr


def causal_softmax_fwd(scores):
    cdef double[:, :, ::1] sv = _f64(scores)
    cdef Py_ssize_t R = sv.shape[0], T = sv.shape[1], r, i, j
    p_arr = np.zeros((R, T, T), dtype=np.float64)
    cdef double[:, :, ::1] p = p_arr
    cdef double m, z
    with nogil:
        for r in range(R):
            for i in range(T):
                m = -INFINITY
                for j in range(i + 1):
                    if sv[r, i, j] > m:
                        m = sv[r, i, j]
                z = 0.0
                for j in range(i + 1):
                    p[r, i, j] = exp(sv[r, i, j] - m)
                    z += p[r, i, j]
                for j in range(i + 1):
                    p[r, i, j] /= z
    return p_arr


def causal_softmax_bwd(dp, p):
    cdef double[:, :, ::1] dpv = _f64(dp), pv = _f64(p)
    cdef Py_ssize_t R = dpv.shape[0], T = dpv.shape[1], r, i, j
    ds_arr = np.zeros((R, T, T), dtype=np.float64)
    cdef double[:, :, ::1] ds = ds_arr
    cdef double dot
    with nogil:
        for r in range(R):
            for i in range(T):
                dot = 0.0
                for j in range(i + 1):
                    dot += dpv[r, i, j] * pv[r, i, j]
                for j in range(i + 1):
                    ds[r, i, j] = pv[r, i, j] * (dpv[r, i, j] - dot)
    return ds_arr


def gelu_fwd(x):
    shape = np.asarray(x).shape
    x_flat = _f64(x).reshape(-1)
    y_arr = np.empty_like(x_flat)
    cdef double[::1] xv = x_flat, yv = y_arr
    cdef Py_ssize_t n = xv.shape[0], k
    cdef double u, v
    with nogil:
        for k in range(n):
            v = xv[k]
            u = GELU_C0 * (v + GELU_C1 * v * v * v)
            yv[k] = 0.5 * v * (1.0 + tanh(u))
    return y_arr.reshape(shape)


def gelu_bwd(x, dy):
    shape = np.asarray(x).shape
    x_flat = _f64(x).reshape(-1)
    dy_flat = _f64(dy).reshape(-1)
    dx_arr = np.empty_like(x_flat)
    cdef double[::1] xv = x_flat, dyv = dy_flat, dxv = dx_arr
    cdef Py_ssize_t n = xv.shape[0], k
    cdef double u, t, du, v
    with nogil:
        for k in range(n):
            v = xv[k]
            u = GELU_C0 * (v + GELU_C1 * v * v * v)
            t = tanh(u)
            du = GELU_C0 * (1.0 + 3.0 * GELU_C1 * v * v)
            dxv[k] = dyv[k] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    return dx_arr.reshape(shape)


def masked_ce(logits, targets, mask, grad_scale=None):
    cdef double[:, ::1] lg = _f64(logits)
    cdef cnp.int64_t[::1] tg = np.ascontiguousarray(targets, dtype=np.int64)
    cdef cnp.uint8_t[::1] mk = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t R = lg.shape[0], V = lg.shape[1], r, j
    nll_arr = np.zeros(R, dtype=np.float64)
    cdef double[::1] nll = nll_arr
    cdef double m, z, lse, scale
    if grad_scale is None:
        with nogil:
            for r in range(R):
                if not mk[r]:
                    continue
                m = lg[r, 0]
                for j in range(1, V):
                    if lg[r, j] > m:
                        m = lg[r, j]
                z = 0.0
                for j in range(V):
                    z += exp(lg[r, j] - m)
                nll[r] = m + log(z) - lg[r, tg[r]]
        return nll_arr, None
    dl_arr = np.zeros((R, V), dtype=np.float64)
    cdef double[:, ::1] dl = dl_arr
    cdef double[::1] gs = _f64(grad_scale)
    with nogil:
        for r in range(R):
            m = lg[r, 0]
            for j in range(1, V):
                if lg[r, j] > m:
                    m = lg[r, j]
            z = 0.0
            for j in range(V):
                dl[r, j] = exp(lg[r, j] - m)
                z += dl[r, j]
            lse = m + log(z)
            if mk[r]:
                nll[r] = lse - lg[r, tg[r]]
            scale = gs[r]
            for j in range(V):
                dl[r, j] = dl[r, j] / z * scale
            dl[r, tg[r]] -= scale
    return nll_arr, dl_arr


def embedding_bwd(tokens, dy, Py_ssize_t vocab_size):
    cdef cnp.int64_t[::1] tk = np.ascontiguousarray(tokens, dtype=np.int64)
    cdef double[:, ::1] dyv = _f64(dy)
    cdef Py_ssize_t R = dyv.shape[0], D = dyv.shape[1], r, d
    demb_arr = np.zeros((vocab_size, D), dtype=np.float64)
    cdef double[:, ::1] demb = demb_arr
    with nogil:
        for r in range(R):
            for d in range(D):
                demb[tk[r], d] += dyv[r, d]
    return demb_arr
