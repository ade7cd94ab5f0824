# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ULA block kernel for the shipped potential kinds.

Same contract as ``_fallback.ula_block``; the gradient is selected by an
integer kind code instead of a callable:

    0 flat, 1 quadratic (pa = a), 2 mixture norm (pa = L_i, pb = alpha_i),
    3 linear tail (pb = alpha_i)
"""

from libc.math cimport sqrt, pow, fabs, isfinite, NAN
from libc.stdlib cimport malloc, free

import numpy as np


cdef inline void _grad(int kind, const double* y, int d,
                       const double* pa, const double* pb, int nt, double* out) noexcept nogil:
    cdef int j, i
    cdef double r2 = 0.0, r, c, q
    if kind == 0:
        for j in range(d):
            out[j] = 0.0
        return
    if kind == 1:
        for j in range(d):
            out[j] = pa[j] * y[j]
        return
    for j in range(d):
        r2 += y[j] * y[j]
    r = sqrt(r2)
    c = 0.0
    if kind == 2:
        if r > 0:
            for i in range(nt):
                c += (pa[i] * pb[i]) * pow(r, pb[i] - 2.0)
    else:
        for i in range(nt):
            q = 1.0 + pb[i]
            if r > 0:
                c += pow(1.0 + pow(r, q), -pb[i] / q) * pow(r, pb[i] - 1.0)
            elif pb[i] == 1.0:
                c += pow(1.0 + pow(r, q), -pb[i] / q)
    for j in range(d):
        out[j] = c * y[j]


cdef enum:
    TILE = 8


cdef inline double _grad1(int kind, double y, const double* pa, const double* pb, int nt) noexcept nogil:
    cdef double g
    if kind == 0:
        return 0.0
    if kind == 1:
        return pa[0] * y
    _grad(kind, &y, 1, pa, pb, nt, &g)
    return g


def ula_block(double[:, ::1] x, const double[:, :, ::1] noise, const double[:, :, ::1] xi,
              double mu, const double[::1] etas, int kind,
              const double[::1] pa, const double[::1] pb,
              long k0, long burn_in, long stride,
              double[:, ::1] tail_sum, double[:, :, ::1] tail_cross, long[::1] tail_n,
              double[:, :, ::1] rec_x, double[:, ::1] rec_g,
              long[::1] diverged, double limit,
              long[:, :, ::1] hist_counts, const double[::1] hist_lo, const double[::1] hist_width,
              long chain_offset):
    # chains advance in tiles of TILE so independent updates overlap in the
    # pipeline while noise reads stay on a handful of streams
    cdef Py_ssize_t m = noise.shape[0]
    cdef Py_ssize_t n_steps = noise.shape[1]
    cdef int d = <int> noise.shape[2]
    cdef bint use_xi = xi.shape[0] > 0
    cdef bint use_hist = hist_counts.shape[0] > 0
    cdef long n_groups = hist_counts.shape[0]
    cdef long nb0 = hist_counts.shape[1], nb1 = hist_counts.shape[2]
    cdef long rec_base = k0 // stride
    cdef Py_ssize_t c0, c1, c, t, b, j, l
    cdef long k, slot, i0, i1
    cdef double eta, s, nrm, gn, v, lim2 = limit * limit
    cdef double xv, yv, gv = 0.0
    cdef bint ok, record, in_tail
    cdef int nt = <int> pb.shape[0]
    cdef const double* pa_p = &pa[0] if pa.shape[0] > 0 else NULL
    cdef const double* pb_p = &pb[0] if pb.shape[0] > 0 else NULL
    cdef const double* nz
    cdef double* xc
    cdef double* buf = <double*> malloc(TILE * (4 * d + d * d) * sizeof(double))
    cdef Py_ssize_t tile = TILE
    cdef long n_tail[TILE]
    cdef bint live[TILE]
    cdef long* hrow[TILE]
    cdef long* hist_p = &hist_counts[0, 0, 0] if use_hist else NULL
    cdef double lo0 = hist_lo[0], w0 = hist_width[0]
    cdef double lo1 = hist_lo[1] if hist_lo.shape[0] > 1 else 0.0
    cdef double w1 = hist_width[1] if hist_width.shape[0] > 1 else 1.0
    if buf == NULL:
        raise MemoryError()
    cdef double* ys = buf
    cdef double* gs = buf + TILE * d
    cdef double* y
    cdef double* g
    cdef double* xs = buf + 2 * TILE * d
    cdef double* ts = xs + TILE * d
    cdef double* tc = ts + TILE * d
    try:
        with nogil:
            c0 = 0
            while c0 < m:
                c1 = c0 + tile if c0 + tile < m else m
                for t in range(c1 - c0):
                    c = c0 + t
                    live[t] = diverged[c] < 0
                    n_tail[t] = 0
                    if use_hist:
                        hrow[t] = hist_p + ((chain_offset + c) % n_groups) * nb0 * nb1
                    for j in range(d):
                        xs[t * d + j] = x[c, j]
                        ts[t * d + j] = 0.0
                    for j in range(d * d):
                        tc[t * d * d + j] = 0.0
                for b in range(n_steps):
                    k = k0 + b + 1
                    eta = etas[b]
                    s = sqrt(2.0 * eta)
                    record = k % stride == 0
                    slot = k // stride - rec_base - 1
                    in_tail = k > burn_in
                    if d == 1:
                        for t in range(c1 - c0):
                            c = c0 + t
                            if live[t]:
                                yv = xs[t] + mu * xi[c, b, 0] if use_xi else xs[t]
                                gv = _grad1(kind, yv, pa_p, pb_p, nt)
                                xv = xs[t] - eta * gv + s * noise[c, b, 0]
                                if not isfinite(gv) or not (xv * xv <= lim2):
                                    diverged[c] = k
                                    live[t] = False
                                else:
                                    xs[t] = xv
                                    if in_tail:
                                        ts[t] += xv
                                        tc[t] += xv * xv
                                        n_tail[t] += 1
                                        if use_hist and record:
                                            # truncation is floor for v > 0; v <= 0 clamps to bin 0 anyway
                                            v = (xv - lo0) / w0
                                            i0 = <long> v if v > 0 else 0
                                            if i0 > nb0 - 1:
                                                i0 = nb0 - 1
                                            hrow[t][i0] += 1
                            if record:
                                if live[t]:
                                    rec_x[c, slot, 0] = xs[t]
                                    rec_g[c, slot] = fabs(gv)
                                else:
                                    rec_x[c, slot, 0] = NAN
                                    rec_g[c, slot] = NAN
                        continue
                    for t in range(c1 - c0):
                        c = c0 + t
                        xc = xs + t * d
                        y = ys + t * d
                        g = gs + t * d
                        if live[t]:
                            nz = &noise[c, b, 0]
                            if use_xi:
                                for j in range(d):
                                    y[j] = xc[j] + mu * xi[c, b, j]
                                _grad(kind, y, d, pa_p, pb_p, nt, g)
                            else:
                                _grad(kind, xc, d, pa_p, pb_p, nt, g)
                            nrm = 0.0
                            gn = 0.0
                            ok = True
                            for j in range(d):
                                if not isfinite(g[j]):
                                    ok = False
                                y[j] = xc[j] - eta * g[j] + s * nz[j]
                                nrm += y[j] * y[j]
                                gn += g[j] * g[j]
                            if not ok or not (nrm <= lim2):
                                diverged[c] = k
                                live[t] = False
                            else:
                                for j in range(d):
                                    xc[j] = y[j]
                                if in_tail:
                                    for j in range(d):
                                        ts[t * d + j] += xc[j]
                                        for l in range(d):
                                            tc[(t * d + j) * d + l] += xc[j] * xc[l]
                                    n_tail[t] += 1
                                    if use_hist and record:
                                        v = (xc[0] - lo0) / w0
                                        i0 = <long> v if v > 0 else 0
                                        if i0 > nb0 - 1:
                                            i0 = nb0 - 1
                                        i1 = 0
                                        if d > 1:
                                            v = (xc[1] - lo1) / w1
                                            i1 = <long> v if v > 0 else 0
                                            if i1 > nb1 - 1:
                                                i1 = nb1 - 1
                                        hrow[t][i0 * nb1 + i1] += 1
                        if record:
                            if live[t]:
                                for j in range(d):
                                    rec_x[c, slot, j] = xc[j]
                                rec_g[c, slot] = sqrt(gn)
                            else:
                                for j in range(d):
                                    rec_x[c, slot, j] = NAN
                                rec_g[c, slot] = NAN
                for t in range(c1 - c0):
                    c = c0 + t
                    tail_n[c] += n_tail[t]
                    for j in range(d):
                        x[c, j] = xs[t * d + j]
                        tail_sum[c, j] += ts[t * d + j]
                        for l in range(d):
                            tail_cross[c, j, l] += tc[(t * d + j) * d + l]
                c0 += tile
    finally:
        free(buf)
    return np.asarray(x)
