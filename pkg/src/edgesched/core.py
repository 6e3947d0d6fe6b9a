"""Document life cycle shared by the simulator and the edge agent.

A document moves through a small fixed state graph::

    QUEUED_UNPROCESSED --start_processing--> PROCESSING
    PROCESSING         --processing_done---> QUEUED_PROCESSED
    QUEUED_UNPROCESSED --start_upload------> UPLOADING
    QUEUED_PROCESSED   --start_upload------> UPLOADING
    UPLOADING          --upload_done-------> UPLOADED

Anything else raises :class:`IllegalTransition`.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Optional


class SchedulerError(RuntimeError):
    """Base class for errors that indicate a scheduling bug."""


class IllegalTransition(SchedulerError):
    pass


class NotYetProcessed(ValueError):
    pass


class DocumentState(enum.Enum):
    QUEUED_UNPROCESSED = "queued_unprocessed"
    PROCESSING = "processing"
    QUEUED_PROCESSED = "queued_processed"
    UPLOADING = "uploading"
    UPLOADED = "uploaded"

    @property
    def is_queued(self) -> bool:
        return self in (DocumentState.QUEUED_UNPROCESSED, DocumentState.QUEUED_PROCESSED)


class LifecycleEvent(enum.Enum):
    START_PROCESSING = "start_processing"
    PROCESSING_DONE = "processing_done"
    START_UPLOAD = "start_upload"
    UPLOAD_DONE = "upload_done"


S = DocumentState
E = LifecycleEvent

TRANSITIONS: dict[tuple[DocumentState, LifecycleEvent], DocumentState] = {
    (S.QUEUED_UNPROCESSED, E.START_PROCESSING): S.PROCESSING,
    (S.PROCESSING, E.PROCESSING_DONE): S.QUEUED_PROCESSED,
    (S.QUEUED_UNPROCESSED, E.START_UPLOAD): S.UPLOADING,
    (S.QUEUED_PROCESSED, E.START_UPLOAD): S.UPLOADING,
    (S.UPLOADING, E.UPLOAD_DONE): S.UPLOADED,
}


@dataclass(frozen=True)
class Document:
    index: int
    arrival_time: float
    original_size: int
    processed_size: Optional[int] = None
    cpu_cost: Optional[float] = None
    state: DocumentState = DocumentState.QUEUED_UNPROCESSED
    # event name -> time of the transition that produced it
    timestamps: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"negative document index {self.index}")
        if self.original_size <= 0:
            raise ValueError(f"document {self.index}: original_size must be > 0")
        if self.processed_size is not None and not 0 < self.processed_size <= self.original_size:
            raise ValueError(
                f"document {self.index}: processed_size {self.processed_size} "
                f"outside (0, {self.original_size}]"
            )
        if self.cpu_cost is not None and not self.cpu_cost > 0:
            raise ValueError(f"document {self.index}: cpu_cost must be > 0")

    @property
    def is_processed(self) -> bool:
        return self.processed_size is not None

    @property
    def upload_size(self) -> int:
        """Bytes this document puts on the wire if uploaded now."""
        return self.processed_size if self.processed_size is not None else self.original_size


def transition(
    doc: Document,
    event: LifecycleEvent,
    time: float,
    *,
    processed_size: Optional[int] = None,
    cpu_cost: Optional[float] = None,
) -> Document:
    """Apply ``event`` to ``doc`` and return the updated document.

    ``processed_size`` and ``cpu_cost`` are required for PROCESSING_DONE and
    rejected for every other event.
    """
    try:
        new_state = TRANSITIONS[(doc.state, event)]
    except KeyError:
        raise IllegalTransition(
            f"document {doc.index}: {event.value} is not legal from {doc.state.value}"
        ) from None

    changes: dict = {"state": new_state}
    if event is E.PROCESSING_DONE:
        if processed_size is None or cpu_cost is None:
            raise IllegalTransition(
                f"document {doc.index}: processing_done needs processed_size and cpu_cost"
            )
        changes["processed_size"] = processed_size
        changes["cpu_cost"] = cpu_cost
    elif processed_size is not None or cpu_cost is not None:
        raise IllegalTransition(f"document {doc.index}: measurements only accompany processing_done")

    stamps = dict(doc.timestamps)
    stamps[event.value] = time
    changes["timestamps"] = stamps
    return dataclasses.replace(doc, **changes)


def normalized_reduction(doc: Document) -> float:
    """Bytes saved by the operator per CPU-second spent on ``doc``."""
    if doc.processed_size is None or doc.cpu_cost is None:
        raise NotYetProcessed(f"document {doc.index} has not been processed")
    return (doc.original_size - doc.processed_size) / doc.cpu_cost
