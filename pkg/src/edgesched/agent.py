"""Edge agent: watch a directory, process and upload files by priority.

One intake thread polls the watch directory, ``M`` process workers run the
flood-fill operator, ``N`` upload workers push documents to the gateway.
The queue and the spline sit behind one condition variable: every scheduling
decision, state transition and spline update happens while holding it, and
operator runs and network transfers happen outside it.
"""

from __future__ import annotations

import bisect
import json
import logging
import os
import re
import shutil
import tempfile
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .core import Document, DocumentState, LifecycleEvent, transition
from .estimator import RatioSpline
from .operator import DEFAULT_THRESHOLD, OperatorReport, process_file
from .policy import NoProcessing, QueueSnapshot, make_process_policy, make_upload_policy
from .trace import ARRIVE, PROC_END, PROC_START, UPLOAD_END, UPLOAD_START, TraceEvent, write_trace

log = logging.getLogger(__name__)

_DIGITS = re.compile(r"(\d+)")


class WatchError(RuntimeError):
    pass


class UploadError(RuntimeError):
    pass


@dataclass
class AgentConfig:
    watch_dir: Path
    gateway_url: str
    stream_id: str = "stream"
    num_process_workers: int = 1
    num_upload_workers: int = 4
    process_policy: str = "splines"
    upload_policy: str = "inverse"
    poll_interval: float = 0.25
    index_rule: str = "filename"  # or "arrival"
    threshold: int = DEFAULT_THRESHOLD
    sampling_period: int = 5
    seed: int = 0
    work_dir: Optional[Path] = None
    upload_limit: Optional[float] = None  # bytes/s shared by all upload workers
    max_process_bytes: Optional[int] = None  # larger files skip the operator
    upload_attempts: int = 3
    retry_backoff: float = 1.0
    timeout: float = 60.0

    def __post_init__(self):
        self.watch_dir = Path(self.watch_dir)
        if self.num_upload_workers < 1:
            raise ValueError("num_upload_workers must be >= 1")
        if self.num_process_workers < 0:
            raise ValueError("num_process_workers must be >= 0")
        if self.num_process_workers == 0 and self.process_policy != "none":
            raise ValueError("num_process_workers may only be 0 with process policy 'none'")
        if self.index_rule not in ("filename", "arrival"):
            raise ValueError("index_rule must be 'filename' or 'arrival'")
        if self.upload_attempts < 1:
            raise ValueError("upload_attempts must be >= 1")


# -- intake ----------------------------------------------------------------------


class DirectoryWatcher:
    """Polling watcher that reports files once their size and mtime settle.

    A file is ready when two consecutive polls see the same size and mtime.
    Names are reported once; rewriting a reported file only logs a warning.
    """

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self._pending: dict[str, tuple[int, int]] = {}
        self._reported: dict[str, tuple[int, int]] = {}
        self._warned: set[str] = set()

    def poll(self) -> list[Path]:
        try:
            entries = list(os.scandir(self.directory))
        except (FileNotFoundError, NotADirectoryError) as exc:
            raise WatchError(f"watch directory unavailable: {exc}") from exc
        ready = []
        for e in entries:
            if e.name.startswith(".") or not e.is_file(follow_symlinks=False):
                continue
            try:
                st = e.stat(follow_symlinks=False)
            except FileNotFoundError:
                continue
            sig = (st.st_size, st.st_mtime_ns)
            if e.name in self._reported:
                if sig != self._reported[e.name] and e.name not in self._warned:
                    log.warning("ignoring rewrite of already-queued file %s", e.name)
                    self._warned.add(e.name)
                continue
            if self._pending.get(e.name) == sig:
                del self._pending[e.name]
                self._reported[e.name] = sig
                ready.append((st.st_mtime_ns, e.name))
            else:
                self._pending[e.name] = sig
        ready.sort()
        return [self.directory / name for _, name in ready]


class IndexAssigner:
    def __init__(self, rule: str = "filename"):
        self.rule = rule
        self.used: set[int] = set()

    def parse(self, path: Path) -> Optional[int]:
        if self.rule != "filename":
            return None
        runs = _DIGITS.findall(Path(path).stem)
        return int(runs[-1]) if runs else None

    def assign(self, path: Path) -> int:
        idx = self.parse(path)
        if idx is None or idx in self.used:
            if idx is not None:
                log.warning("index %d of %s already taken; assigning by arrival", idx, path.name)
            idx = max(self.used, default=-1) + 1
        self.used.add(idx)
        return idx


# -- upload client ------------------------------------------------------------------


class RateLimiter:
    """Paces byte chunks so the aggregate rate stays under ``rate`` bytes/s."""

    def __init__(self, rate: float):
        if not rate > 0:
            raise ValueError("rate must be > 0")
        self.rate = rate
        self._next = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self, n: int) -> None:
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next)
            self._next = start + n / self.rate
        if start > now:
            time.sleep(start - now)


@dataclass(frozen=True)
class UploadReceipt:
    index: int
    stored_bytes: int
    replaced: bool
    sha256: str
    attempts: int


class GatewayClient:
    def __init__(
        self,
        base_url: str,
        stream_id: str,
        limiter: Optional[RateLimiter] = None,
        attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
        chunk: int = 64 * 1024,
    ):
        self.base_url = base_url.rstrip("/")
        self.stream_id = stream_id
        self.limiter = limiter
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self.chunk = chunk

    def _body(self, path: Path):
        with open(path, "rb") as fh:
            while True:
                block = fh.read(self.chunk)
                if not block:
                    return
                if self.limiter is not None:
                    self.limiter.acquire(len(block))
                yield block

    def upload(self, index: int, path: Path, original_name: str, processed: bool, original_size: int) -> UploadReceipt:
        url = f"{self.base_url}/v1/streams/{self.stream_id}/documents/{index}"
        size = os.path.getsize(path)
        last: Exception | None = None
        for attempt in range(1, self.attempts + 1):
            req = urllib.request.Request(
                url,
                data=self._body(path),
                method="POST",
                headers={
                    "Content-Length": str(size),
                    "Content-Type": "application/octet-stream",
                    "X-Original-Name": original_name,
                    "X-Processed": "1" if processed else "0",
                    "X-Original-Size": str(original_size),
                },
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    reply = json.loads(resp.read() or b"{}")
                return UploadReceipt(index, reply["stored_bytes"], reply["replaced"], reply.get("sha256", ""), attempt)
            except (urllib.error.URLError, OSError, ValueError, KeyError) as exc:
                last = exc
                log.warning("upload of %d failed (attempt %d/%d): %s", index, attempt, self.attempts, exc)
                if attempt < self.attempts:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
        raise UploadError(f"document {index}: giving up after {self.attempts} attempts: {last}")


# -- agent ------------------------------------------------------------------------


@dataclass
class _Entry:
    source: Path
    upload_path: Path
    processed_ok: bool = False


class Agent:
    def __init__(self, config: AgentConfig, client: Optional[GatewayClient] = None):
        self.config = config
        cfg = config
        self._own_work_dir = cfg.work_dir is None
        self.work_dir = Path(tempfile.mkdtemp(prefix="edgesched-")) if cfg.work_dir is None else Path(cfg.work_dir)
        self.work_dir.mkdir(parents=True, exist_ok=True)
        limiter = RateLimiter(cfg.upload_limit) if cfg.upload_limit else None
        self.client = client or GatewayClient(
            cfg.gateway_url, cfg.stream_id, limiter, cfg.upload_attempts, cfg.retry_backoff, cfg.timeout
        )
        self.watcher = DirectoryWatcher(cfg.watch_dir)
        self.indexer = IndexAssigner(cfg.index_rule)
        self.process_policy = make_process_policy(cfg.process_policy, cfg.seed, cfg.sampling_period)
        self.upload_policy = make_upload_policy(cfg.upload_policy, cfg.seed + 1)
        self.spline = RatioSpline()

        self._cond = threading.Condition()
        self.docs: dict[int, Document] = {}
        self.entries: dict[int, _Entry] = {}
        self._unprocessed: list[int] = []
        self._processed: list[int] = []
        self._queue = QueueSnapshot(self._unprocessed, self._processed, self.docs)
        self._counter = 0
        self._uploaded = 0
        self.trace: list[TraceEvent] = []
        self.receipts: dict[int, UploadReceipt] = {}
        self.error: Optional[BaseException] = None
        self._stopping = False
        self._threads: list[threading.Thread] = []
        self._t0 = time.monotonic()
        self._last_intake = self._t0

    # all _emit calls happen with self._cond held
    def _emit(self, index: int, kind: str, detail) -> float:
        t = time.monotonic() - self._t0
        self.trace.append(TraceEvent(t, index, kind, str(detail)))
        return t

    @property
    def uploaded_count(self) -> int:
        with self._cond:
            return self._uploaded

    def enqueue(self, path: Path) -> int:
        path = Path(path)
        size = path.stat().st_size
        with self._cond:
            index = self.indexer.assign(path)
            t = self._emit(index, ARRIVE, size)
            self.docs[index] = Document(index, t, size)
            self.entries[index] = _Entry(path, path)
            bisect.insort(self._unprocessed, index)
            self._last_intake = time.monotonic()
            self._cond.notify_all()
        log.info("queued %s as %d (%d bytes)", path.name, index, size)
        return index

    def intake_once(self) -> list[int]:
        return [self.enqueue(p) for p in self._order_batch(self.watcher.poll())]

    def _order_batch(self, paths: list[Path]) -> list[Path]:
        # a batch found together (notably the startup scan) goes in index order
        if self.config.index_rule == "filename" and len(paths) > 1:
            return sorted(paths, key=lambda p: (self.indexer.parse(p) is None, self.indexer.parse(p) or 0, p.name))
        return paths

    # -- workers ------------------------------------------------------------------

    def _claim_for_processing(self, block: bool) -> Optional[int]:
        with self._cond:
            while True:
                if self._stopping:
                    return None
                if self._unprocessed and not isinstance(self.process_policy, NoProcessing):
                    pick = self.process_policy.select(self._eligible(), self.spline, self._counter)
                    if pick is not None:
                        index, how = pick
                        self._counter += 1
                        t = self._emit(index, PROC_START, how.value)
                        self.docs[index] = transition(self.docs[index], LifecycleEvent.START_PROCESSING, t)
                        self._unprocessed.remove(index)
                        return index
                if not block:
                    return None
                self._cond.wait()

    def _eligible(self) -> QueueSnapshot:
        limit = self.config.max_process_bytes
        if limit is None:
            return self._queue
        keep = [i for i in self._unprocessed if self.docs[i].original_size <= limit]
        return QueueSnapshot(keep, self._processed, self.docs)

    def process_worker_step(self, block: bool = True) -> Optional[OperatorReport]:
        index = self._claim_for_processing(block)
        if index is None:
            return None
        entry = self.entries[index]
        out = self.work_dir / f"{index}{entry.source.suffix or '.png'}"
        original = self.docs[index].original_size
        report = None
        try:
            report = process_file(entry.source, out, self.config.threshold)
        except Exception as exc:  # noqa: BLE001 - any operator failure falls back to the original
            log.warning("operator failed on %s; uploading original: %s", entry.source.name, exc)
        with self._cond:
            if report is not None and report.processed_size < original:
                size, cost = report.processed_size, report.cpu_seconds
                entry.upload_path, entry.processed_ok = out, True
            else:
                size, cost = original, report.cpu_seconds if report is not None else 1e-6
            t = self._emit(index, PROC_END, size)
            self.docs[index] = transition(
                self.docs[index], LifecycleEvent.PROCESSING_DONE, t, processed_size=size, cpu_cost=cost
            )
            if report is not None:
                self.spline.observe(index, (original - size) / cost)
            self._processed.append(index)
            self._cond.notify_all()
        return report

    def _claim_for_upload(self, block: bool) -> Optional[int]:
        with self._cond:
            while True:
                if self._stopping:
                    return None
                if self._unprocessed or self._processed:
                    index = self.upload_policy.select(self._queue, self.spline)
                    if index is not None:
                        doc = self.docs[index]
                        t = self._emit(index, UPLOAD_START, doc.upload_size)
                        self.docs[index] = transition(doc, LifecycleEvent.START_UPLOAD, t)
                        if doc.is_processed:
                            self._processed.remove(index)
                        else:
                            self._unprocessed.remove(index)
                        return index
                if not block:
                    return None
                self._cond.wait()

    def upload_worker_step(self, block: bool = True) -> Optional[UploadReceipt]:
        index = self._claim_for_upload(block)
        if index is None:
            return None
        entry = self.entries[index]
        doc = self.docs[index]
        receipt = self.client.upload(index, entry.upload_path, entry.source.name, entry.processed_ok, doc.original_size)
        with self._cond:
            t = self._emit(index, UPLOAD_END, doc.upload_size)
            self.docs[index] = transition(self.docs[index], LifecycleEvent.UPLOAD_DONE, t)
            self.receipts[index] = receipt
            self._uploaded += 1
            self._cond.notify_all()
        return receipt

    # -- threads -------------------------------------------------------------------

    def _guard(self, fn: Callable[[], None]) -> Callable[[], None]:
        def run():
            try:
                fn()
            except BaseException as exc:  # noqa: BLE001 - surfaced through self.error
                log.error("%s failed: %s", threading.current_thread().name, exc)
                with self._cond:
                    if self.error is None:
                        self.error = exc
                    self._stopping = True
                    self._cond.notify_all()

        return run

    def _intake_loop(self):
        while not self._stopping:
            self.intake_once()
            with self._cond:
                self._cond.wait_for(lambda: self._stopping, timeout=self.config.poll_interval)

    def _process_loop(self):
        while not self._stopping:
            self.process_worker_step()

    def _upload_loop(self):
        while not self._stopping:
            self.upload_worker_step()

    def start(self) -> "Agent":
        if not self.config.watch_dir.is_dir():
            raise WatchError(f"{self.config.watch_dir} is not a readable directory")
        specs = [("intake", self._intake_loop)]
        if not isinstance(self.process_policy, NoProcessing):
            specs += [(f"process-{i}", self._process_loop) for i in range(self.config.num_process_workers)]
        specs += [(f"upload-{i}", self._upload_loop) for i in range(self.config.num_upload_workers)]
        for name, fn in specs:
            t = threading.Thread(target=self._guard(fn), name=name, daemon=True)
            self._threads.append(t)
            t.start()
        return self

    def stop(self, timeout: Optional[float] = None) -> None:
        with self._cond:
            self._stopping = True
            self._cond.notify_all()
        for t in self._threads:
            t.join(timeout)
        if self._own_work_dir:
            shutil.rmtree(self.work_dir, ignore_errors=True)

    def drained(self) -> bool:
        with self._cond:
            return bool(self.docs) and self._uploaded == len(self.docs)

    def wait_until(self, uploaded: Optional[int] = None, idle: Optional[float] = None, timeout: float = 60.0) -> bool:
        """Block until ``uploaded`` documents are done, or everything is
        uploaded and nothing new arrived for ``idle`` seconds."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                if self.error is not None:
                    return False
                done = bool(self.docs) and self._uploaded == len(self.docs)
                if uploaded is not None and self._uploaded >= uploaded:
                    return True
                if uploaded is None and done and time.monotonic() - self._last_intake >= (idle or 0.0):
                    return True
                left = deadline - time.monotonic()
                if left <= 0:
                    return False
                self._cond.wait(min(left, 0.05))

    def write_trace(self, path) -> None:
        with self._cond:
            events = list(self.trace)
        Path(path).write_text(write_trace(events))

    def snapshot_states(self) -> dict[int, DocumentState]:
        with self._cond:
            return {i: d.state for i, d in self.docs.items()}


# -- step functions -----------------------------------------------------------


def watch_and_enqueue(agent: Agent) -> list[int]:
    """Run one intake poll; returns the indices enqueued by it."""
    return agent.intake_once()


def process_worker_step(agent: Agent, block: bool = False) -> Optional[OperatorReport]:
    return agent.process_worker_step(block)


def upload_worker_step(agent: Agent, block: bool = False) -> Optional[UploadReceipt]:
    return agent.upload_worker_step(block)
