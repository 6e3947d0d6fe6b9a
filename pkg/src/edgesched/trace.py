"""Life-cycle event traces: CSV round trip and state-machine validation.

Trace CSV schema is ``time,doc_index,event,detail``. The ``detail`` column
depends on the event:

=============  ==========================================
arrive         original size in bytes
proc_start     selection kind (prio, search, random, ...)
proc_end       processed size in bytes
upload_start   bytes put on the wire
upload_end     bytes put on the wire
=============  ==========================================
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .core import Document, DocumentState, LifecycleEvent, transition

ARRIVE = "arrive"
PROC_START = "proc_start"
PROC_END = "proc_end"
UPLOAD_START = "upload_start"
UPLOAD_END = "upload_end"
EVENT_KINDS = (ARRIVE, PROC_START, PROC_END, UPLOAD_START, UPLOAD_END)
TRACE_COLUMNS = ("time", "doc_index", "event", "detail")

_LIFECYCLE = {
    PROC_START: LifecycleEvent.START_PROCESSING,
    UPLOAD_START: LifecycleEvent.START_UPLOAD,
    UPLOAD_END: LifecycleEvent.UPLOAD_DONE,
}


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    time: float
    doc_index: int
    event: str
    detail: str = ""

    def __post_init__(self):
        if self.event not in EVENT_KINDS:
            raise TraceError(f"unknown event kind {self.event!r}")


def write_trace(events: Iterable[TraceEvent], fh=None) -> Optional[str]:
    own = fh is None
    if own:
        fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for ev in events:
        w.writerow([repr(float(ev.time)), ev.doc_index, ev.event, ev.detail])
    return fh.getvalue() if own else None


def read_trace(source) -> list[TraceEvent]:
    """Parse trace CSV from a string or an open text file."""
    fh = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.DictReader(fh)
    if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
        raise TraceError(f"trace header must be {','.join(TRACE_COLUMNS)}")
    out = []
    for row in reader:
        try:
            out.append(TraceEvent(float(row["time"]), int(row["doc_index"]), row["event"], row["detail"]))
        except (TypeError, ValueError) as exc:
            raise TraceError(f"line {reader.line_num}: {exc}") from None
    return out


@dataclass
class TraceSummary:
    documents: dict[int, Document]
    max_processing: int
    max_uploading: int
    uploaded_bytes: dict[int, int]


def validate_trace(
    events: Sequence[TraceEvent],
    *,
    max_processing: Optional[int] = None,
    max_uploading: Optional[int] = None,
    require_complete: bool = True,
) -> TraceSummary:
    """Replay ``events`` through the document state machine.

    Raises :class:`TraceError` (or :class:`IllegalTransition`) on the first
    violation: an illegal edge, time running backwards, a concurrency bound
    exceeded, or wrong upload byte counts.
    """
    docs: dict[int, Document] = {}
    processing = uploading = 0
    peak_p = peak_u = 0
    uploaded: dict[int, int] = {}
    last_t = float("-inf")
    for n, ev in enumerate(events):
        if ev.time < last_t:
            raise TraceError(f"event {n}: time {ev.time} precedes {last_t}")
        last_t = ev.time
        if ev.event == ARRIVE:
            if ev.doc_index in docs:
                raise TraceError(f"event {n}: document {ev.doc_index} arrived twice")
            docs[ev.doc_index] = Document(ev.doc_index, ev.time, int(ev.detail))
            continue
        doc = docs.get(ev.doc_index)
        if doc is None:
            raise TraceError(f"event {n}: document {ev.doc_index} used before arrival")
        if ev.event == PROC_END:
            size = int(ev.detail)
            cost = max(ev.time - doc.timestamps[LifecycleEvent.START_PROCESSING.value], 1e-12)
            try:
                doc = transition(doc, LifecycleEvent.PROCESSING_DONE, ev.time, processed_size=size, cpu_cost=cost)
            except ValueError as exc:
                raise TraceError(f"event {n}: {exc}") from None
            processing -= 1
        else:
            doc = transition(doc, _LIFECYCLE[ev.event], ev.time)
            if ev.event == PROC_START:
                processing += 1
            elif ev.event == UPLOAD_START:
                if int(ev.detail) != doc.upload_size:
                    raise TraceError(
                        f"event {n}: document {doc.index} uploads {ev.detail} bytes, expected {doc.upload_size}"
                    )
                uploaded[doc.index] = doc.upload_size
                uploading += 1
            else:
                uploading -= 1
        docs[ev.doc_index] = doc
        peak_p = max(peak_p, processing)
        peak_u = max(peak_u, uploading)
        if max_processing is not None and processing > max_processing:
            raise TraceError(f"event {n}: {processing} documents processing, bound {max_processing}")
        if max_uploading is not None and uploading > max_uploading:
            raise TraceError(f"event {n}: {uploading} documents uploading, bound {max_uploading}")
    if require_complete:
        stuck = sorted(i for i, d in docs.items() if d.state is not DocumentState.UPLOADED)
        if stuck:
            raise TraceError(f"documents never uploaded: {stuck[:10]}")
    return TraceSummary(docs, peak_p, peak_u, uploaded)


def inverse_priority_violations(events: Sequence[TraceEvent]) -> list[TraceEvent]:
    """Unprocessed upload starts made while a processed document sat queued."""
    state: dict[int, str] = {}
    waiting_processed: set[int] = set()
    bad = []
    for ev in events:
        i = ev.doc_index
        if ev.event == ARRIVE:
            state[i] = "raw"
        elif ev.event == PROC_START:
            state[i] = "busy"
        elif ev.event == PROC_END:
            state[i] = "done"
            waiting_processed.add(i)
        elif ev.event == UPLOAD_START:
            if state.get(i) == "raw" and waiting_processed:
                bad.append(ev)
            waiting_processed.discard(i)
            state[i] = "up"
    return bad


def selection_label(ev: TraceEvent) -> str:
    """Human label for plotting an event the way the event-trace figure does."""
    if ev.event == PROC_START:
        return f"process ({ev.detail})" if ev.detail else "process"
    if ev.event == UPLOAD_START:
        return "upload"
    return ev.event
