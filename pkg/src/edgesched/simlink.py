"""Fluid processor-sharing model of a capped upload link.

Every active transfer drains at ``capacity / len(active)`` bytes per second.
The engine advances the link between events and asks it for the next
projected completion, which is exact as long as membership is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

BYTES_PER_MBIT = 125_000

# Residue left by float division when advancing exactly to a completion.
_DONE_EPS = 1e-6


class LinkFull(RuntimeError):
    pass


class NegativeInterval(ValueError):
    pass


def mbps_to_bytes(mbps: float) -> float:
    return mbps * BYTES_PER_MBIT


@dataclass
class Transfer:
    index: int
    remaining: float
    admit_time: float


class SharedLink:
    def __init__(self, capacity: float, max_concurrent: int):
        if not capacity > 0:
            raise ValueError("capacity must be > 0 bytes/s")
        if max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        self.capacity = float(capacity)
        self.max_concurrent = max_concurrent
        self.active: dict[int, Transfer] = {}
        self.now = 0.0
        self.bytes_delivered = 0.0

    def __len__(self):
        return len(self.active)

    @property
    def full(self) -> bool:
        return len(self.active) >= self.max_concurrent

    def rate(self) -> float:
        """Per-transfer rate right now."""
        return self.capacity / len(self.active) if self.active else 0.0

    def admit(self, index: int, size: float, now: float) -> "SharedLink":
        if self.full:
            raise LinkFull(f"link already carries {len(self.active)} transfers")
        if not size > 0:
            raise ValueError("transfer size must be > 0")
        if index in self.active:
            raise ValueError(f"document {index} already on the link")
        if now > self.now:
            nxt = self.next_completion(self.now)
            if nxt is not None and nxt[1] <= now:
                raise ValueError(f"transfer {nxt[0]} completes at {nxt[1]} before admit time {now}")
            self.advance(self.now, now)
        self.active[index] = Transfer(index, float(size), now)
        return self

    def projected_finish(self, now: float) -> dict[int, float]:
        if not self.active:
            return {}
        k = len(self.active)
        return {t.index: now + t.remaining * k / self.capacity for t in self.active.values()}

    def next_completion(self, now: float) -> Optional[tuple[int, float]]:
        if not self.active:
            return None
        first = min(self.active.values(), key=lambda t: (t.remaining, t.index))
        return first.index, now + first.remaining * len(self.active) / self.capacity

    def advance(self, start: float, end: float) -> list[int]:
        """Drain all transfers from ``start`` to ``end``; return indices that finished."""
        dt = end - start
        if dt < 0:
            raise NegativeInterval(f"cannot advance from {start} to {end}")
        self.now = end
        if dt == 0 or not self.active:
            return []
        drained = dt * self.capacity / len(self.active)
        done = []
        for t in self.active.values():
            step = min(drained, t.remaining)
            t.remaining -= drained
            self.bytes_delivered += step
            if t.remaining <= _DONE_EPS:
                done.append(t.index)
        for i in sorted(done):
            del self.active[i]
        return sorted(done)

    def complete(self, index: int) -> None:
        """Remove a transfer the engine has declared finished."""
        t = self.active.pop(index)
        self.bytes_delivered += max(t.remaining, 0.0)


def admit(link: SharedLink, doc_index: int, size: float, now: float) -> SharedLink:
    return link.admit(doc_index, size, now)


def next_completion(link: SharedLink, now: float):
    return link.next_completion(now)


def advance(link: SharedLink, start: float, end: float) -> SharedLink:
    link.advance(start, end)
    return link
