"""Which queued document to process next, and which to upload next."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from .core import Document
from .estimator import RatioSpline


class SelectionKind(enum.Enum):
    PRIO = "prio"
    SEARCH = "search"
    RANDOM = "random"
    FIFO = "fifo"
    ORACLE = "oracle"


@dataclass
class QueueSnapshot:
    """Queued documents as the scheduler sees them at one decision point.

    ``unprocessed`` is sorted by index; ``processed`` is ordered by the time
    processing finished.
    """

    unprocessed: Sequence[int]
    processed: Sequence[int]
    docs: Mapping[int, Document]

    @classmethod
    def from_documents(cls, docs: Sequence[Document]) -> "QueueSnapshot":
        from .core import DocumentState

        unprocessed = sorted(d.index for d in docs if d.state is DocumentState.QUEUED_UNPROCESSED)
        done = [d for d in docs if d.state is DocumentState.QUEUED_PROCESSED]
        done.sort(key=lambda d: (d.timestamps.get("processing_done", 0.0), d.index))
        return cls(unprocessed, [d.index for d in done], {d.index: d for d in docs})

    def __len__(self):
        return len(self.unprocessed) + len(self.processed)

    def all_indices(self) -> list[int]:
        return sorted([*self.unprocessed, *self.processed])


def _earliest_arrival(indices, docs) -> Optional[int]:
    if not indices:
        return None
    return min(indices, key=lambda i: (docs[i].arrival_time, i))


# -- processing policies ------------------------------------------------------


@dataclass
class SplinePriority:
    """Exploit the spline estimate; every ``sampling_period``-th decision explores."""

    sampling_period: int = 5
    name = "splines"

    def __post_init__(self):
        if self.sampling_period < 1:
            raise ValueError("sampling_period must be >= 1")

    def select(self, queue: QueueSnapshot, spline: RatioSpline, counter: int):
        if not queue.unprocessed:
            return None
        if counter % self.sampling_period == self.sampling_period - 1:
            return spline.search_target(queue.unprocessed), SelectionKind.SEARCH
        return spline.best(queue.unprocessed, maximize=True), SelectionKind.PRIO


@dataclass
class RandomOrder:
    seed: int = 0
    name = "random"
    _rng: random.Random = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._rng = random.Random(self.seed)

    def select(self, queue: QueueSnapshot, spline: RatioSpline, counter: int):
        if not queue.unprocessed:
            return None
        return self._rng.choice(queue.unprocessed), SelectionKind.RANDOM


@dataclass
class Fifo:
    name = "fifo"

    def select(self, queue: QueueSnapshot, spline: RatioSpline, counter: int):
        pick = _earliest_arrival(queue.unprocessed, queue.docs)
        return None if pick is None else (pick, SelectionKind.FIFO)


@dataclass
class NoProcessing:
    name = "none"

    def select(self, queue: QueueSnapshot, spline: RatioSpline, counter: int):
        return None


@dataclass
class Clairvoyant:
    """Analysis-only: ranks by the true ratio, which no real scheduler knows."""

    true_ratio: Mapping[int, float]
    name = "oracle"
    spline: RatioSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.spline = RatioSpline(knots=self.true_ratio.items())

    def select(self, queue: QueueSnapshot, spline: RatioSpline, counter: int):
        if not queue.unprocessed:
            return None
        return self.spline.best(queue.unprocessed, maximize=True), SelectionKind.ORACLE


ProcessPolicy = Union[SplinePriority, RandomOrder, Fifo, NoProcessing, Clairvoyant]


# -- upload policies ------------------------------------------------------------


@dataclass
class InversePriority:
    """Processed documents first, then the lowest estimated ratio."""

    name = "inverse"

    def select(self, queue: QueueSnapshot, spline: RatioSpline) -> Optional[int]:
        if queue.processed:
            return queue.processed[0]
        return spline.best(queue.unprocessed, maximize=False)


@dataclass
class FifoUpload:
    name = "fifo"

    def select(self, queue: QueueSnapshot, spline: RatioSpline) -> Optional[int]:
        return _earliest_arrival([*queue.unprocessed, *queue.processed], queue.docs)


@dataclass
class RandomUpload:
    seed: int = 0
    name = "random"
    _rng: random.Random = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._rng = random.Random(self.seed)

    def select(self, queue: QueueSnapshot, spline: RatioSpline) -> Optional[int]:
        if not len(queue):
            return None
        return self._rng.choice(queue.all_indices())


UploadPolicy = Union[InversePriority, FifoUpload, RandomUpload]


def next_to_process(policy: ProcessPolicy, queue: QueueSnapshot, spline: RatioSpline, decision_counter: int):
    return policy.select(queue, spline, decision_counter)


def next_to_upload(policy: UploadPolicy, queue: QueueSnapshot, spline: RatioSpline) -> Optional[int]:
    return policy.select(queue, spline)


PROCESS_POLICY_NAMES = ("splines", "random", "fifo", "none")
UPLOAD_POLICY_NAMES = ("inverse", "fifo", "random")


def make_process_policy(name: str, seed: int = 0, sampling_period: int = 5) -> ProcessPolicy:
    if name == "splines":
        return SplinePriority(sampling_period)
    if name == "random":
        return RandomOrder(seed)
    if name == "fifo":
        return Fifo()
    if name == "none":
        return NoProcessing()
    raise ValueError(f"unknown process policy {name!r}; expected one of {PROCESS_POLICY_NAMES}")


def make_upload_policy(name: str, seed: int = 0) -> UploadPolicy:
    if name == "inverse":
        return InversePriority()
    if name == "fifo":
        return FifoUpload()
    if name == "random":
        return RandomUpload(seed)
    raise ValueError(f"unknown upload policy {name!r}; expected one of {UPLOAD_POLICY_NAMES}")
