# cython: language_level=3
"""Compiled kernels. Must stay bit-compatible with ``_fallback.py``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t i64


def flood_fill(const cnp.uint8_t[:, :] pixels, int threshold, int connectivity=4):
    cdef Py_ssize_t h = pixels.shape[0], w = pixels.shape[1]
    out_arr = np.array(pixels, dtype=np.uint8, copy=True)
    if h == 0 or w == 0:
        return out_arr
    cdef cnp.uint8_t[:, :] out = out_arr
    cdef cnp.uint8_t[:, :] seen = np.zeros((h, w), dtype=np.uint8)
    cdef Py_ssize_t n = h * w
    cdef Py_ssize_t *stack = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    if stack == NULL:
        raise MemoryError()
    cdef Py_ssize_t top = 0, pos, r, c, rr, cc, k
    cdef int nn = 8 if connectivity == 8 else 4
    cdef int dr[8]
    cdef int dc[8]
    dr[:] = [-1, 1, 0, 0, -1, -1, 1, 1]
    dc[:] = [0, 0, -1, 1, -1, 1, -1, 1]
    try:
        with nogil:
            # every edge pixel touches the implicit black border
            for r in range(h):
                for c in range(w):
                    if r == 0 or c == 0 or r == h - 1 or c == w - 1:
                        if out[r, c] <= threshold and not seen[r, c]:
                            seen[r, c] = 1
                            stack[top] = r * w + c
                            top += 1
            while top > 0:
                top -= 1
                pos = stack[top]
                r = pos // w
                c = pos - r * w
                out[r, c] = 0
                for k in range(nn):
                    rr = r + dr[k]
                    cc = c + dc[k]
                    if rr < 0 or cc < 0 or rr >= h or cc >= w:
                        continue
                    if seen[rr, cc] or out[rr, cc] > threshold:
                        continue
                    seen[rr, cc] = 1
                    stack[top] = rr * w + cc
                    top += 1
    finally:
        free(stack)
    return out_arr


cdef inline double _interp(const i64[:] kx, const double[:] ky, Py_ssize_t nk,
                           Py_ssize_t j, i64 x) noexcept nogil:
    # j: last knot with kx[j] <= x, or -1
    cdef double t
    if j < 0:
        return ky[0]
    if j >= nk - 1 or kx[j] == x:
        return ky[j]
    t = <double>(x - kx[j]) / <double>(kx[j + 1] - kx[j])
    return ky[j] + t * (ky[j + 1] - ky[j])


def interp_many(const i64[:] knot_x, const double[:] knot_y,
                const i64[:] query, double prior):
    cdef Py_ssize_t nk = knot_x.shape[0], nq = query.shape[0], i, lo, hi, mid
    out_arr = np.empty(nq, dtype=np.float64)
    cdef double[:] out = out_arr
    with nogil:
        for i in range(nq):
            if nk == 0:
                out[i] = prior
                continue
            lo = 0
            hi = nk
            while lo < hi:
                mid = (lo + hi) >> 1
                if knot_x[mid] <= query[i]:
                    lo = mid + 1
                else:
                    hi = mid
            out[i] = _interp(knot_x, knot_y, nk, lo - 1, query[i])
    return out_arr


def best_candidate(const i64[:] knot_x, const double[:] knot_y,
                   const i64[:] cand, double prior, bint maximize):
    """Position in ``cand`` (ascending) with the highest (or lowest) estimate."""
    cdef Py_ssize_t nk = knot_x.shape[0], nc = cand.shape[0], i, j = -1, best = -1
    cdef double v, bv = 0.0
    if nc == 0:
        return -1
    if nk == 0:
        return 0
    with nogil:
        for i in range(nc):
            while j + 1 < nk and knot_x[j + 1] <= cand[i]:
                j += 1
            v = _interp(knot_x, knot_y, nk, j, cand[i])
            if best < 0 or (maximize and v > bv) or (not maximize and v < bv):
                best = i
                bv = v
    return best


def farthest_candidate(const i64[:] knot_x, const i64[:] cand):
    """Position in ``cand`` (ascending) farthest from its nearest knot."""
    cdef Py_ssize_t nk = knot_x.shape[0], nc = cand.shape[0], i, j = -1, best = -1
    cdef i64 d, bd = -1, dl, dr_
    if nc == 0:
        return -1
    if nk == 0:
        return 0
    with nogil:
        for i in range(nc):
            while j + 1 < nk and knot_x[j + 1] <= cand[i]:
                j += 1
            if j < 0:
                d = knot_x[0] - cand[i]
            elif j == nk - 1:
                d = cand[i] - knot_x[j]
            else:
                dl = cand[i] - knot_x[j]
                dr_ = knot_x[j + 1] - cand[i]
                d = dl if dl < dr_ else dr_
            if d > bd:
                bd = d
                best = i
    return best
