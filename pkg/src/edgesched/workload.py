"""Synthetic streams with locally-correlated reduction, and measured manifests.

The reduction fraction along the stream is a sum of raised-cosine bumps plus
a little Gaussian noise, clamped to ``[0, MAX_REDUCTION]``. Neighbouring
documents therefore reduce by similar amounts, which is exactly what the
spline scheduler exploits.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

MAX_REDUCTION = 0.4
MANIFEST_COLUMNS = ("index", "path", "original_size", "processed_size", "cpu_cost", "arrival_time")


class InvalidSpec(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvariantViolation(ValueError):
    def __init__(self, message: str, field_name: str, line: Optional[int] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field_name}: {message}")
        self.field = field_name
        self.line = line


@dataclass(frozen=True)
class Bump:
    center: float
    width: float
    peak: float

    def __call__(self, i: np.ndarray) -> np.ndarray:
        half = self.width / 2.0
        d = np.abs(i - self.center)
        return np.where(d < half, self.peak * 0.5 * (1.0 + np.cos(np.pi * d / half)), 0.0)


@dataclass(frozen=True)
class WorkItem:
    index: int
    arrival_time: float
    original_size: int
    processed_size: int
    cpu_cost: float
    path: str = ""

    @property
    def true_ratio(self) -> float:
        return (self.original_size - self.processed_size) / self.cpu_cost


@dataclass
class Workload:
    items: list[WorkItem]
    # reduction fraction per index before size rounding; None for manifests
    reduction: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        validate(self.items)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i) -> WorkItem:
        return self.items[i]

    def true_ratios(self) -> dict[int, float]:
        return {it.index: it.true_ratio for it in self.items}

    def offline_processed(self) -> "Workload":
        """Same stream with every document already shrunk by the operator."""
        return Workload(
            [
                WorkItem(it.index, it.arrival_time, it.processed_size, it.processed_size, it.cpu_cost, it.path)
                for it in self.items
            ],
            self.reduction,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*MANIFEST_COLUMNS, "ratio"])
        for it in self.items:
            w.writerow(
                [
                    it.index,
                    it.path,
                    it.original_size,
                    it.processed_size,
                    repr(it.cpu_cost),
                    repr(it.arrival_time),
                    repr(it.true_ratio),
                ]
            )
        return buf.getvalue()


def validate(items: Sequence[WorkItem]) -> None:
    prev_arrival = -math.inf
    for pos, it in enumerate(items):
        if it.index != pos:
            raise InvariantViolation(f"expected dense index {pos}, got {it.index}", "index")
        if not it.arrival_time >= prev_arrival:
            raise InvariantViolation("arrival times must be non-decreasing", "arrival_time")
        prev_arrival = it.arrival_time
        if it.original_size <= 0:
            raise InvariantViolation("must be > 0", "original_size")
        if not 0 < it.processed_size <= it.original_size:
            raise InvariantViolation(
                f"{it.processed_size} outside (0, original_size={it.original_size}]", "processed_size"
            )
        if not it.cpu_cost > 0:
            raise InvariantViolation("must be > 0", "cpu_cost")


@dataclass(frozen=True)
class ProfileSpec:
    n_docs: int = 759
    mean_size: float = 1_000_000.0
    size_jitter: float = 0.1
    # explicit bumps; when None, n_bumps are drawn from the seed
    bumps: Optional[tuple[Bump, ...]] = None
    n_bumps: int = 14
    bump_width: tuple[float, float] = (20.0, 80.0)
    bump_peak: tuple[float, float] = (0.3, 0.4)
    noise: float = 0.02
    cpu_base: float = 0.3
    cpu_per_byte: float = 6e-7
    cpu_jitter: float = 0.2
    arrival_period: float = 0.35
    arrival_jitter: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if self.n_docs < 1:
            raise InvalidSpec("n_docs must be >= 1")
        if not self.mean_size >= 1:
            raise InvalidSpec("mean_size must be >= 1 byte")
        for name in ("size_jitter", "cpu_jitter", "arrival_jitter"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise InvalidSpec(f"{name} must lie in [0, 1), got {v}")
        if self.noise < 0:
            raise InvalidSpec("noise must be >= 0")
        lo, hi = self.bump_peak
        if not 0 <= lo <= hi <= MAX_REDUCTION:
            raise InvalidSpec(f"bump_peak range must lie in [0, {MAX_REDUCTION}]")
        if not 0 < self.bump_width[0] <= self.bump_width[1]:
            raise InvalidSpec("bump_width range must be positive and ordered")
        if self.n_bumps < 0:
            raise InvalidSpec("n_bumps must be >= 0")
        for b in self.bumps or ():
            if not 0 <= b.peak <= MAX_REDUCTION:
                raise InvalidSpec(f"bump peak {b.peak} outside [0, {MAX_REDUCTION}]")
            if not b.width > 0:
                raise InvalidSpec("bump width must be > 0")
        if not (self.cpu_base >= 0 and self.cpu_per_byte >= 0 and self.cpu_base + self.cpu_per_byte > 0):
            raise InvalidSpec("cpu cost model must be non-negative and not identically zero")
        if self.arrival_period < 0:
            raise InvalidSpec("arrival_period must be >= 0")


def reduction_profile(spec: ProfileSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.n_docs
    idx = np.arange(n, dtype=np.float64)
    bumps = spec.bumps
    if bumps is None:
        bumps = tuple(
            Bump(
                center=float(rng.uniform(0, n)),
                width=float(rng.uniform(*spec.bump_width)),
                peak=float(rng.uniform(*spec.bump_peak)),
            )
            for _ in range(spec.n_bumps)
        )
    frac = np.zeros(n)
    for b in bumps:
        frac += b(idx)
    if spec.noise > 0:
        frac += rng.normal(0.0, spec.noise, n)
    return np.clip(frac, 0.0, MAX_REDUCTION)


def generate(spec: ProfileSpec) -> Workload:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_docs
    frac = reduction_profile(spec, rng)
    sizes = spec.mean_size * (1.0 + spec.size_jitter * rng.uniform(-1.0, 1.0, n))
    sizes = np.maximum(np.rint(sizes), 1).astype(np.int64)
    processed = np.clip(np.rint(sizes * (1.0 - frac)), 1, sizes).astype(np.int64)
    cost = (spec.cpu_base + spec.cpu_per_byte * sizes) * (1.0 + spec.cpu_jitter * rng.uniform(-1.0, 1.0, n))
    gaps = spec.arrival_period * (1.0 + spec.arrival_jitter * rng.uniform(-1.0, 1.0, n))
    gaps[0] = 0.0
    arrivals = np.cumsum(gaps)
    items = [
        WorkItem(i, float(arrivals[i]), int(sizes[i]), int(processed[i]), float(cost[i]), f"synthetic_{i:05d}")
        for i in range(n)
    ]
    return Workload(items, frac)


def load_manifest(path) -> Workload:
    text = Path(path).read_text()
    return parse_manifest(text)


def parse_manifest(text: str) -> Workload:
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    missing = [c for c in MANIFEST_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)}", 1)
    items = []
    for row in reader:
        line = reader.line_num
        try:
            item = WorkItem(
                index=int(row["index"]),
                path=row["path"] or "",
                original_size=int(row["original_size"]),
                processed_size=int(row["processed_size"]),
                cpu_cost=float(row["cpu_cost"]),
                arrival_time=float(row["arrival_time"]),
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), line) from None
        if item.original_size <= 0:
            raise InvariantViolation("must be > 0", "original_size", line)
        if not 0 < item.processed_size <= item.original_size:
            raise InvariantViolation(
                f"{item.processed_size} outside (0, original_size={item.original_size}]",
                "processed_size",
                line,
            )
        if not item.cpu_cost > 0:
            raise InvariantViolation("must be > 0", "cpu_cost", line)
        items.append(item)
    if not items:
        raise ParseError("manifest has no rows", 2)
    items.sort(key=lambda it: it.index)
    return Workload(items)
