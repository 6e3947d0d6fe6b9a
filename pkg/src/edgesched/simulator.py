"""Deterministic discrete-event simulation of the edge node.

Documents arrive, wait in the queue, optionally occupy one of ``M`` CPU slots,
then occupy one of ``N`` upload slots on a processor-sharing link. Policies
are consulted at every slot vacancy. True processed sizes and CPU costs live
in the workload but only reach the scheduler at ``proc_end``.

Events that fall on the same instant are handled in a fixed order:
processing completions, then upload completions, then upload admissions
(only with a per-upload overhead), then arrivals; index breaks remaining ties.
"""

from __future__ import annotations

import bisect
import dataclasses
import heapq
import statistics
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import Document, LifecycleEvent, normalized_reduction, transition
from .estimator import RatioSpline
from .policy import (
    NoProcessing,
    ProcessPolicy,
    QueueSnapshot,
    UploadPolicy,
    make_process_policy,
    make_upload_policy,
)
from .simlink import SharedLink
from .trace import ARRIVE, PROC_END, PROC_START, UPLOAD_END, UPLOAD_START, TraceEvent
from .workload import Workload

_PROC_DONE, _UPLOAD_DONE, _ADMIT, _ARRIVAL = range(4)


@dataclass
class SimConfig:
    num_cpu_slots: int = 1
    max_concurrent_uploads: int = 4
    link_capacity: float = 16e6  # bits per second
    process_policy: Union[str, ProcessPolicy] = "splines"
    upload_policy: Union[str, UploadPolicy] = "inverse"
    seed: int = 0
    offline_preprocessed: bool = False
    sampling_period: int = 5
    upload_overhead: float = 0.0  # seconds a slot is held before bytes flow

    def __post_init__(self):
        if self.max_concurrent_uploads < 1:
            raise ValueError("max_concurrent_uploads must be >= 1")
        if not self.link_capacity > 0:
            raise ValueError("link_capacity must be > 0")
        if self.num_cpu_slots < 0:
            raise ValueError("num_cpu_slots must be >= 0")
        if self.num_cpu_slots == 0 and not self.processing_disabled:
            raise ValueError("num_cpu_slots must be >= 1 unless processing is disabled")
        if self.upload_overhead < 0:
            raise ValueError("upload_overhead must be >= 0")

    @property
    def processing_disabled(self) -> bool:
        p = self.process_policy
        return self.offline_preprocessed or p == "none" or isinstance(p, NoProcessing)

    @property
    def capacity_bytes(self) -> float:
        return self.link_capacity / 8.0

    def with_seed(self, seed: int) -> "SimConfig":
        return dataclasses.replace(self, seed=seed)

    def policies(self) -> tuple[ProcessPolicy, UploadPolicy]:
        proc_seed, up_seed = (int(s) for s in np.random.SeedSequence(self.seed).generate_state(2))
        if self.offline_preprocessed:
            proc = NoProcessing()
        elif isinstance(self.process_policy, str):
            proc = make_process_policy(self.process_policy, proc_seed, self.sampling_period)
        else:
            proc = self.process_policy
        up = self.upload_policy
        if isinstance(up, str):
            up = make_upload_policy(up, up_seed)
        return proc, up


@dataclass
class RunMetrics:
    end_to_end_latency: float
    bytes_uploaded_total: int
    bytes_saved_total: int
    docs_processed_at_edge: int
    per_doc_latency: dict[int, float] = field(repr=False)

    def as_row(self) -> dict:
        return {
            "end_to_end_latency": self.end_to_end_latency,
            "bytes_uploaded_total": self.bytes_uploaded_total,
            "bytes_saved_total": self.bytes_saved_total,
            "docs_processed_at_edge": self.docs_processed_at_edge,
        }


@dataclass
class RunResult:
    metrics: RunMetrics
    trace: list[TraceEvent]
    spline: RatioSpline
    documents: dict[int, Document]

    def __iter__(self):
        # allows ``metrics, trace = run(...)``
        return iter((self.metrics, self.trace))


class _Engine:
    def __init__(self, config: SimConfig, workload: Workload):
        self.cfg = config
        self.source = workload
        self.wl = workload.offline_processed() if config.offline_preprocessed else workload
        self.proc_policy, self.up_policy = config.policies()
        self.spline = RatioSpline()
        oracle = getattr(self.proc_policy, "spline", None)
        self.rank_spline = self.spline if oracle is None else oracle
        self.link = SharedLink(config.capacity_bytes, config.max_concurrent_uploads)
        self.cpu_slots = 0 if config.processing_disabled else config.num_cpu_slots
        self.now = 0.0
        self.docs: dict[int, Document] = {}
        self.unprocessed: list[int] = []
        self.processed: list[int] = []
        self.queue = QueueSnapshot(self.unprocessed, self.processed, self.docs)
        self.busy_cpu = 0
        self.busy_up = 0
        self.counter = 0
        self.proc_heap: list[tuple[float, int]] = []
        self.admit_heap: list[tuple[float, int]] = []
        self.arrivals = sorted(self.wl.items, key=lambda it: (it.arrival_time, it.index))
        self.next_arrival = 0
        self.trace: list[TraceEvent] = []
        self.uploaded = 0

    def emit(self, index: int, kind: str, detail) -> None:
        self.trace.append(TraceEvent(self.now, index, kind, str(detail)))

    def _next_event(self):
        cands = []
        if self.proc_heap:
            t, i = self.proc_heap[0]
            cands.append((t, _PROC_DONE, i))
        nxt = self.link.next_completion(self.now)
        if nxt is not None:
            cands.append((nxt[1], _UPLOAD_DONE, nxt[0]))
        if self.admit_heap:
            t, i = self.admit_heap[0]
            cands.append((t, _ADMIT, i))
        if self.next_arrival < len(self.arrivals):
            it = self.arrivals[self.next_arrival]
            cands.append((it.arrival_time, _ARRIVAL, it.index))
        return min(cands)

    def run(self) -> RunResult:
        n = len(self.wl)
        if n == 0:
            raise ValueError("workload is empty")
        while self.uploaded < n:
            t, kind, index = self._next_event()
            t = max(t, self.now)
            finished = self.link.advance(self.now, t)
            self.now = t
            if kind == _PROC_DONE:
                heapq.heappop(self.proc_heap)
                self._finish_processing(index)
            elif kind == _UPLOAD_DONE and index not in finished:
                self.link.complete(index)
                finished.append(index)
            elif kind == _ADMIT:
                heapq.heappop(self.admit_heap)
                self.link.admit(index, self.docs[index].upload_size, self.now)
            elif kind == _ARRIVAL:
                self.next_arrival += 1
                self._arrive(index)
            for i in sorted(finished):
                self._finish_upload(i)
            self._schedule()
        return RunResult(self._metrics(), self.trace, self.spline, self.docs)

    def _arrive(self, index: int) -> None:
        it = self.wl[index]
        self.docs[index] = Document(index, it.arrival_time, it.original_size)
        bisect.insort(self.unprocessed, index)
        self.emit(index, ARRIVE, it.original_size)

    def _finish_processing(self, index: int) -> None:
        it = self.wl[index]
        doc = transition(
            self.docs[index],
            LifecycleEvent.PROCESSING_DONE,
            self.now,
            processed_size=it.processed_size,
            cpu_cost=it.cpu_cost,
        )
        self.docs[index] = doc
        self.busy_cpu -= 1
        self.processed.append(index)
        self.spline.observe(index, normalized_reduction(doc))
        self.emit(index, PROC_END, it.processed_size)

    def _finish_upload(self, index: int) -> None:
        doc = transition(self.docs[index], LifecycleEvent.UPLOAD_DONE, self.now)
        self.docs[index] = doc
        self.busy_up -= 1
        self.uploaded += 1
        self.emit(index, UPLOAD_END, doc.upload_size)

    def _schedule(self) -> None:
        while self.busy_cpu < self.cpu_slots and self.unprocessed:
            pick = self.proc_policy.select(self.queue, self.spline, self.counter)
            if pick is None:
                break
            index, how = pick
            self.counter += 1
            self.docs[index] = transition(self.docs[index], LifecycleEvent.START_PROCESSING, self.now)
            self.unprocessed.remove(index)
            self.busy_cpu += 1
            heapq.heappush(self.proc_heap, (self.now + self.wl[index].cpu_cost, index))
            self.emit(index, PROC_START, how.value)
        while self.busy_up < self.cfg.max_concurrent_uploads and (self.unprocessed or self.processed):
            index = self.up_policy.select(self.queue, self.rank_spline)
            if index is None:
                break
            doc = transition(self.docs[index], LifecycleEvent.START_UPLOAD, self.now)
            self.docs[index] = doc
            if doc.is_processed:
                self.processed.remove(index)
            else:
                self.unprocessed.remove(index)
            self.busy_up += 1
            self.emit(index, UPLOAD_START, doc.upload_size)
            if self.cfg.upload_overhead > 0:
                heapq.heappush(self.admit_heap, (self.now + self.cfg.upload_overhead, index))
            else:
                self.link.admit(index, doc.upload_size, self.now)

    def _metrics(self) -> RunMetrics:
        first = min(it.arrival_time for it in self.wl.items)
        ends = {}
        for ev in self.trace:
            if ev.event == UPLOAD_END:
                ends[ev.doc_index] = ev.time
        uploaded = sum(d.upload_size for d in self.docs.values())
        original = sum(it.original_size for it in self.source.items)
        return RunMetrics(
            end_to_end_latency=max(ends.values()) - first,
            bytes_uploaded_total=uploaded,
            bytes_saved_total=original - uploaded,
            docs_processed_at_edge=sum(1 for d in self.docs.values() if d.is_processed),
            per_doc_latency={i: ends[i] - self.docs[i].arrival_time for i in sorted(ends)},
        )


def run(config: SimConfig, workload: Workload) -> RunResult:
    """Simulate one stream to completion.

    The result unpacks as ``metrics, trace``; the final spline and document
    records are attributes.
    """
    return _Engine(config, workload).run()


@dataclass(frozen=True)
class LatencySummary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    latencies: tuple[float, ...] = ()

    @classmethod
    def of(cls, values: Sequence[float]) -> "LatencySummary":
        v = sorted(values)
        if not v:
            raise ValueError("no values to summarize")
        if len(v) == 1:
            q1 = med = q3 = v[0]
        else:
            q1, med, q3 = statistics.quantiles(v, n=4, method="inclusive")
        return cls(v[0], q1, med, q3, v[-1], statistics.fmean(v), tuple(values))


def repeat_seeds(seed: int, repeats: int) -> list[int]:
    """Independent per-repeat seeds derived from one base seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(repeats)]


def run_many(
    config: SimConfig,
    workload: Union[Workload, Callable[[int], Workload]],
    repeats: int,
) -> LatencySummary:
    """Box-whisker summary of end-to-end latency over ``repeats`` runs.

    ``workload`` may be a callable taking the repeat seed, so every repeat
    sees its own realization of the stream.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    latencies = []
    for s in repeat_seeds(config.seed, repeats):
        wl = workload(s) if callable(workload) else workload
        latencies.append(run(config.with_seed(s), wl).metrics.end_to_end_latency)
    return LatencySummary.of(latencies)

