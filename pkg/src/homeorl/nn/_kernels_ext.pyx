# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recurrent kernels. Same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.string cimport memset
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void _mm(int m, int n, int k, double* a, int lda, bint trans_a,
                     double* b, int ldb, bint trans_b, double* c, int ldc,
                     double beta) noexcept nogil:
    # Row-major C[m, n] = op(A) @ op(B) + beta * C, via column-major dgemm on
    # the transposed problem.
    cdef char ta = b'T' if trans_b else b'N'
    cdef char tb = b'T' if trans_a else b'N'
    cdef double alpha = 1.0
    dgemm(&ta, &tb, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


def lstm_forward(xproj, w_hh, h0, c0, keep):
    cdef cnp.ndarray[double, ndim=3, mode="c"] xp = np.ascontiguousarray(xproj, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w = np.ascontiguousarray(w_hh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] kp = np.ascontiguousarray(keep, dtype=np.float64)
    cdef int T = xp.shape[0]
    cdef int B = xp.shape[1]
    cdef int G = xp.shape[2]
    cdef int H = G // 4
    if w.shape[0] != H or w.shape[1] != G:
        raise ValueError("recurrent weight shape does not match projected input")
    cdef cnp.ndarray[double, ndim=3, mode="c"] hs = np.empty((T, B, H))
    cdef cnp.ndarray[double, ndim=3, mode="c"] cs = np.empty((T, B, H))
    cdef cnp.ndarray[double, ndim=3, mode="c"] gates = np.empty((T, B, G))
    cdef cnp.ndarray[double, ndim=3, mode="c"] hp = np.empty((T, B, H))
    cdef cnp.ndarray[double, ndim=3, mode="c"] cp = np.empty((T, B, H))
    cdef cnp.ndarray[double, ndim=2, mode="c"] h = np.array(h0, dtype=np.float64, order="C")
    cdef cnp.ndarray[double, ndim=2, mode="c"] c = np.array(c0, dtype=np.float64, order="C")
    # numpy's vectorised tanh beats scalar libm calls, so the transcendental
    # part runs once per step on the whole gate block
    cdef cnp.ndarray[double, ndim=2, mode="c"] tc = np.empty((B, H))
    tanh_ = np.tanh
    cdef int t, b, j
    cdef double kk, ig, fg, gg, og, cn
    for t in range(T):
        zt = gates[t]
        with nogil:
            for b in range(B):
                kk = kp[t, b]
                for j in range(H):
                    hp[t, b, j] = h[b, j] * kk
                    cp[t, b, j] = c[b, j] * kk
                for j in range(G):
                    gates[t, b, j] = xp[t, b, j]
            # z = xproj[t] + h_prev @ W_hh, written straight into the gate buffer
            _mm(B, G, H, &hp[t, 0, 0], H, False, &w[0, 0], G, False, &gates[t, 0, 0], G, 1.0)
            # sigmoid(x) = 0.5 * (1 + tanh(x / 2))
            for b in range(B):
                for j in range(H):
                    gates[t, b, j] *= 0.5
                    gates[t, b, H + j] *= 0.5
                    gates[t, b, 3 * H + j] *= 0.5
        tanh_(zt, out=zt)
        with nogil:
            for b in range(B):
                for j in range(H):
                    ig = 0.5 * (1.0 + gates[t, b, j])
                    fg = 0.5 * (1.0 + gates[t, b, H + j])
                    gg = gates[t, b, 2 * H + j]
                    og = 0.5 * (1.0 + gates[t, b, 3 * H + j])
                    gates[t, b, j] = ig
                    gates[t, b, H + j] = fg
                    gates[t, b, 3 * H + j] = og
                    cn = fg * cp[t, b, j] + ig * gg
                    cs[t, b, j] = cn
                    c[b, j] = cn
                    tc[b, j] = cn
        tanh_(tc, out=tc)
        with nogil:
            for b in range(B):
                for j in range(H):
                    hs[t, b, j] = gates[t, b, 3 * H + j] * tc[b, j]
                    h[b, j] = hs[t, b, j]
    return hs, cs, gates, hp, cp


def lstm_backward(dhs, cs, gates, h_prev, c_prev, keep, w_hh):
    cdef cnp.ndarray[double, ndim=3, mode="c"] dh_in = np.ascontiguousarray(dhs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] cs_ = np.ascontiguousarray(cs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] gt = np.ascontiguousarray(gates, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] hp = np.ascontiguousarray(h_prev, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] cp = np.ascontiguousarray(c_prev, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] kp = np.ascontiguousarray(keep, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w = np.ascontiguousarray(w_hh, dtype=np.float64)
    cdef int T = dh_in.shape[0]
    cdef int B = dh_in.shape[1]
    cdef int H = dh_in.shape[2]
    cdef int G = 4 * H
    cdef cnp.ndarray[double, ndim=3, mode="c"] dz = np.empty((T, B, G))
    cdef cnp.ndarray[double, ndim=2, mode="c"] dw = np.zeros((H, G))
    cdef cnp.ndarray[double, ndim=2, mode="c"] dh_next = np.zeros((B, H))
    cdef cnp.ndarray[double, ndim=2, mode="c"] dc_next = np.zeros((B, H))
    cdef cnp.ndarray[double, ndim=3, mode="c"] tcs = np.tanh(cs_)
    cdef int t, b, j
    cdef double ig, fg, gg, og, tc, dh, dc, kk
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    ig = gt[t, b, j]
                    fg = gt[t, b, H + j]
                    gg = gt[t, b, 2 * H + j]
                    og = gt[t, b, 3 * H + j]
                    tc = tcs[t, b, j]
                    dh = dh_in[t, b, j] + dh_next[b, j]
                    dc = dc_next[b, j] + dh * og * (1.0 - tc * tc)
                    dz[t, b, j] = dc * gg * ig * (1.0 - ig)
                    dz[t, b, H + j] = dc * cp[t, b, j] * fg * (1.0 - fg)
                    dz[t, b, 2 * H + j] = dc * ig * (1.0 - gg * gg)
                    dz[t, b, 3 * H + j] = dh * tc * og * (1.0 - og)
                    dc_next[b, j] = dc * fg * kp[t, b]
            # dW_hh += h_prev[t].T @ dz[t]
            _mm(H, G, B, &hp[t, 0, 0], H, True, &dz[t, 0, 0], G, False, &dw[0, 0], G, 1.0)
            # dh_next = dz[t] @ W_hh.T, then masked at episode starts
            _mm(B, H, G, &dz[t, 0, 0], G, False, &w[0, 0], G, True, &dh_next[0, 0], H, 0.0)
            for b in range(B):
                kk = kp[t, b]
                if kk != 1.0:
                    for j in range(H):
                        dh_next[b, j] = dh_next[b, j] * kk
    return dz, dw


def gae(rewards, values, dones, last_value, double gamma, double lam):
    cdef cnp.ndarray[double, ndim=2, mode="c"] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] d = np.ascontiguousarray(dones, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] lv = np.ascontiguousarray(last_value, dtype=np.float64)
    cdef int T = r.shape[0]
    cdef int B = r.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] adv = np.zeros((T, B))
    cdef cnp.ndarray[double, ndim=1, mode="c"] last = np.zeros(B)
    cdef int t, b
    cdef double nv, nonterm, delta
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                nv = lv[b] if t == T - 1 else v[t + 1, b]
                nonterm = 1.0 - d[t, b]
                delta = r[t, b] + gamma * nv * nonterm - v[t, b]
                last[b] = delta + gamma * lam * nonterm * last[b]
                adv[t, b] = last[b]
    return adv
