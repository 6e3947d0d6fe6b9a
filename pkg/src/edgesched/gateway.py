"""Cloud-side HTTP gateway that receives documents and persists them.

Wire protocol::

    POST /v1/streams/{stream_id}/documents/{index}
    X-Original-Name: img_0042.png
    X-Processed: 0 | 1
    X-Original-Size: <decimal bytes>
    Content-Length: <body bytes>

    <raw document bytes>

A stored document lands at ``{storage_dir}/{stream_id}/{index}{ext}`` where
``ext`` comes from the original name. The reply is ``201`` with JSON
``{"stored_bytes": n, "replaced": bool, "sha256": hex}``. Re-sending the same
``(stream_id, index)`` overwrites the earlier file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
from dataclasses import dataclass
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

log = logging.getLogger(__name__)

ROUTE = re.compile(r"^/v1/streams/(?P<stream>[A-Za-z0-9._-]{1,128})/documents/(?P<index>\d{1,18})$")
_EXT = re.compile(r"^\.[A-Za-z0-9]{1,16}$")
CHUNK = 1 << 16


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    storage_dir: Path = Path("gateway-storage")
    max_body: int = 256 * 1024 * 1024

    def __post_init__(self):
        self.storage_dir = Path(self.storage_dir)
        if self.max_body <= 0:
            raise ValueError("max_body must be > 0")


def parse_listen(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected ADDR:PORT, got {text!r}")
    return host, int(port)


class _Handler(BaseHTTPRequestHandler):
    server_version = "edgesched-gateway/0.1"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _reply(self, status: HTTPStatus, payload: dict, close: bool = False) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        if close:
            self.send_header("Connection", "close")
            self.close_connection = True
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/healthz":
            self._reply(HTTPStatus.OK, {"status": "ok"})
        else:
            self._reply(HTTPStatus.NOT_FOUND, {"error": "not found"})

    def do_POST(self):
        cfg: GatewayConfig = self.server.config
        m = ROUTE.match(self.path)
        if not m:
            self._reply(HTTPStatus.NOT_FOUND, {"error": "unknown route"}, close=True)
            return
        stream, index = m["stream"], int(m["index"])

        name = self.headers.get("X-Original-Name")
        processed = self.headers.get("X-Processed")
        orig_size = self.headers.get("X-Original-Size")
        length = self.headers.get("Content-Length")
        problems = []
        if not name:
            problems.append("X-Original-Name missing")
        if processed not in ("0", "1"):
            problems.append("X-Processed must be 0 or 1")
        if orig_size is None or not orig_size.isdigit():
            problems.append("X-Original-Size must be a decimal byte count")
        if length is None or not length.isdigit():
            problems.append("Content-Length required")
        if problems:
            self._reply(HTTPStatus.BAD_REQUEST, {"error": "; ".join(problems)}, close=True)
            return
        length = int(length)
        if length > cfg.max_body:
            self._reply(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, {"error": f"body exceeds {cfg.max_body} bytes"}, close=True)
            return

        ext = Path(name).suffix
        if not _EXT.match(ext):
            ext = ".bin"
        target_dir = cfg.storage_dir / stream
        target = target_dir / f"{index}{ext}"
        digest = hashlib.sha256()
        tmp = None
        try:
            target_dir.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=target_dir, prefix=f".{index}.", suffix=".part")
            left = length
            with os.fdopen(fd, "wb") as fh:
                while left:
                    chunk = self.rfile.read(min(CHUNK, left))
                    if not chunk:
                        break
                    fh.write(chunk)
                    digest.update(chunk)
                    left -= len(chunk)
            if left:
                os.unlink(tmp)
                self._reply(HTTPStatus.BAD_REQUEST, {"error": "body shorter than Content-Length"}, close=True)
                return
            replaced = target.exists()
            os.replace(tmp, target)
            tmp = None
        except OSError as exc:
            log.error("storage failure for %s/%s: %s", stream, index, exc)
            if tmp is not None and os.path.exists(tmp):
                os.unlink(tmp)
            self._reply(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": "storage failure"}, close=True)
            return
        log.info("stored %s/%s%s (%d bytes%s)", stream, index, ext, length, ", replaced" if replaced else "")
        self._reply(HTTPStatus.CREATED, {"stored_bytes": length, "replaced": replaced, "sha256": digest.hexdigest()})


class Gateway:
    """Threaded HTTP server; ``start()`` runs it in the background."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self._server = ThreadingHTTPServer((config.host, config.port), _Handler)
        self._server.daemon_threads = True
        self._server.config = config
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "Gateway":
        self._thread = threading.Thread(target=self.serve_forever, name="gateway", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever(poll_interval=0.05)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
