"""Online linear-spline estimate of CPU-normalized size reduction by stream index."""

from __future__ import annotations

import bisect
import csv
import io
from typing import Iterable, Optional

import numpy as np

from . import kernels


class NegativeRatio(ValueError):
    pass


class RatioSpline:
    """Piecewise-linear interpolation through observed ``(index, ratio)`` knots.

    Outside the knot range the estimate is clamped to the nearest knot; with
    no knots at all it is ``default_prior``. Observing an index twice replaces
    the earlier knot.
    """

    def __init__(self, default_prior: float = 0.0, knots: Iterable[tuple[int, float]] = ()):
        self.default_prior = float(default_prior)
        self._x: list[int] = []
        self._y: list[float] = []
        self._arrays: Optional[tuple[np.ndarray, np.ndarray]] = None
        for index, ratio in knots:
            self.observe(index, ratio)

    def __len__(self) -> int:
        return len(self._x)

    def __repr__(self) -> str:
        return f"RatioSpline(default_prior={self.default_prior!r}, knots={self.knots!r})"

    @property
    def knots(self) -> list[tuple[int, float]]:
        return list(zip(self._x, self._y))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Knot indices (int64) and ratios (float64), cached between observations."""
        if self._arrays is None:
            self._arrays = (
                np.asarray(self._x, dtype=np.int64),
                np.asarray(self._y, dtype=np.float64),
            )
        return self._arrays

    def observe(self, index: int, ratio: float) -> "RatioSpline":
        index = int(index)
        ratio = float(ratio)
        if index < 0:
            raise ValueError(f"negative index {index}")
        if not ratio >= 0:
            raise NegativeRatio(f"ratio must be >= 0, got {ratio}")
        pos = bisect.bisect_left(self._x, index)
        if pos < len(self._x) and self._x[pos] == index:
            self._y[pos] = ratio
        else:
            self._x.insert(pos, index)
            self._y.insert(pos, ratio)
        self._arrays = None
        return self

    def estimate(self, index: int) -> float:
        return float(self.estimate_many([index])[0])

    def estimate_many(self, indices) -> np.ndarray:
        kx, ky = self.arrays()
        return kernels.interp_many(kx, ky, np.asarray(indices, dtype=np.int64), self.default_prior)

    def best(self, candidates, *, maximize: bool = True) -> Optional[int]:
        """Candidate with the highest (or lowest) estimate; ties go to the lowest index.

        ``candidates`` must be sorted ascending.
        """
        cand = np.asarray(candidates, dtype=np.int64)
        kx, ky = self.arrays()
        pos = kernels.best_candidate(kx, ky, cand, self.default_prior, maximize)
        return None if pos < 0 else int(cand[pos])

    def search_target(self, candidates) -> Optional[int]:
        """Candidate lying deepest in unexplored territory.

        Picks the candidate whose distance to the nearest knot is largest,
        lowest index on ties. With no knots, the lowest candidate.
        ``candidates`` must be sorted ascending.
        """
        cand = np.asarray(candidates, dtype=np.int64)
        kx, _ = self.arrays()
        pos = kernels.farthest_candidate(kx, cand)
        return None if pos < 0 else int(cand[pos])

    def dump_knots(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "ratio"])
        for x, y in zip(self._x, self._y):
            w.writerow([x, repr(y)])
        return buf.getvalue()

    def dump_estimates(self, n: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "estimate"])
        for i, v in enumerate(self.estimate_many(np.arange(n))):
            w.writerow([i, repr(float(v))])
        return buf.getvalue()


def observe(spline: RatioSpline, index: int, ratio: float) -> RatioSpline:
    return spline.observe(index, ratio)


def estimate(spline: RatioSpline, index: int) -> float:
    return spline.estimate(index)


def search_target(spline: RatioSpline, candidates) -> Optional[int]:
    return spline.search_target(sorted(candidates))


def load_knots(text: str) -> RatioSpline:
    rows = csv.DictReader(io.StringIO(text))
    return RatioSpline(knots=((int(r["index"]), float(r["ratio"])) for r in rows))
