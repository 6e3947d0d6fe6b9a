"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Same signatures, same floating-point formula, same tie-breaking, so a run
produces the same trace whichever backend is loaded.
"""

from __future__ import annotations

import numpy as np

_N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_N8 = _N4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def flood_fill(pixels, threshold: int, connectivity: int = 4) -> np.ndarray:
    arr = np.array(pixels, dtype=np.uint8, copy=True)
    h, w = arr.shape
    if h == 0 or w == 0:
        return arr
    flat = bytearray(arr.tobytes())
    seen = bytearray(h * w)
    steps = _N8 if connectivity == 8 else _N4
    stack = []
    for r in range(h):
        for c in range(w):
            if r in (0, h - 1) or c in (0, w - 1):
                p = r * w + c
                if flat[p] <= threshold and not seen[p]:
                    seen[p] = 1
                    stack.append(p)
    while stack:
        p = stack.pop()
        r, c = divmod(p, w)
        flat[p] = 0
        for dr, dc in steps:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w:
                q = rr * w + cc
                if not seen[q] and flat[q] <= threshold:
                    seen[q] = 1
                    stack.append(q)
    return np.frombuffer(bytes(flat), dtype=np.uint8).reshape(h, w).copy()


def _interp(kx, ky, j, x):
    if j < 0:
        return ky[0]
    if j >= len(kx) - 1 or kx[j] == x:
        return ky[j]
    t = float(x - kx[j]) / float(kx[j + 1] - kx[j])
    return ky[j] + t * (ky[j + 1] - ky[j])


def interp_many(knot_x, knot_y, query, prior: float) -> np.ndarray:
    kx = np.asarray(knot_x, dtype=np.int64)
    ky = np.asarray(knot_y, dtype=np.float64)
    q = np.asarray(query, dtype=np.int64)
    if len(kx) == 0:
        return np.full(len(q), float(prior))
    j = np.searchsorted(kx, q, side="right") - 1
    jl = np.clip(j, 0, len(kx) - 1)
    jr = np.clip(j + 1, 0, len(kx) - 1)
    x0 = kx[jl]
    span = (kx[jr] - x0).astype(np.float64)
    inner = (j >= 0) & (j < len(kx) - 1) & (q != x0)
    out = ky[jl].copy()
    t = (q[inner] - x0[inner]).astype(np.float64) / span[inner]
    out[inner] = ky[jl][inner] + t * (ky[jr][inner] - ky[jl][inner])
    return out


def best_candidate(knot_x, knot_y, cand, prior: float, maximize: bool) -> int:
    if len(cand) == 0:
        return -1
    if len(knot_x) == 0:
        return 0
    est = interp_many(knot_x, knot_y, cand, prior)
    # argmax/argmin return the first occurrence, i.e. the lowest index
    return int(np.argmax(est) if maximize else np.argmin(est))


def farthest_candidate(knot_x, cand) -> int:
    if len(cand) == 0:
        return -1
    if len(knot_x) == 0:
        return 0
    kx = np.asarray(knot_x, dtype=np.int64)
    c = np.asarray(cand, dtype=np.int64)
    j = np.searchsorted(kx, c, side="right") - 1
    left = np.where(j >= 0, c - kx[np.clip(j, 0, None)], np.iinfo(np.int64).max)
    nxt = np.clip(j + 1, 0, len(kx) - 1)
    right = np.where(j + 1 < len(kx), kx[nxt] - c, np.iinfo(np.int64).max)
    return int(np.argmax(np.minimum(left, right)))
