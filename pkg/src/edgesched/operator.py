"""Border-seeded threshold flood fill for 8-bit grayscale images.

Dark, noisy regions that touch the image edge are flattened to black, which
makes them far more compressible under lossless PNG. Conceptually the image
is framed by a 1-pixel black border, flood-filled from that border through
pixels at or below the threshold, and the border is cropped again.
"""

from __future__ import annotations

import io
import logging
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels

DEFAULT_THRESHOLD = 30
# fixed so output sizes are reproducible on one machine
PNG_OPTIONS = {"format": "PNG", "optimize": True, "compress_level": 9}

log = logging.getLogger(__name__)


class DecodeError(ValueError):
    pass


class WriteError(OSError):
    pass


@dataclass(frozen=True)
class OperatorReport:
    original_size: int
    processed_size: int
    cpu_seconds: float

    @property
    def ratio(self) -> float:
        """Bytes saved per CPU-second."""
        return max(self.original_size - self.processed_size, 0) / max(self.cpu_seconds, 1e-9)


def threshold_flood_fill(img, threshold: int = DEFAULT_THRESHOLD, connectivity: int = 4) -> np.ndarray:
    pixels = np.ascontiguousarray(img, dtype=np.uint8)
    if pixels.ndim != 2 or pixels.size == 0:
        raise ValueError("expected a non-empty 2-D grayscale image")
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    return kernels.flood_fill(pixels, int(threshold), connectivity)


def read_gray(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode != "L":
                raise DecodeError(f"{path}: expected 8-bit grayscale, got mode {im.mode}")
            return np.asarray(im, dtype=np.uint8).copy()
    except DecodeError:
        raise
    except (OSError, ValueError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def encode_png(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(buf, **PNG_OPTIONS)
    return buf.getvalue()


def write_atomic(path, data: bytes) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise WriteError(f"{path}: {exc}") from exc


def process_file(path_in, path_out, threshold: int = DEFAULT_THRESHOLD, connectivity: int = 4) -> OperatorReport:
    """Decode, fill, re-encode; report byte sizes and the CPU time spent.

    CPU time is this thread's, so concurrent workers don't bill each other.
    """
    original = os.path.getsize(path_in)
    t0 = time.thread_time()
    pixels = read_gray(path_in)
    data = encode_png(threshold_flood_fill(pixels, threshold, connectivity))
    cpu = time.thread_time() - t0
    write_atomic(path_out, data)
    log.debug("processed %s: %d -> %d bytes in %.3fs cpu", path_in, original, len(data), cpu)
    return OperatorReport(original, len(data), max(cpu, 1e-6))


def noisy_grid(shape=(256, 256), dark_fraction: float = 0.5, seed: int = 0, threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Synthetic microscopy-like frame: a bright noisy grid of cells centred
    on a dark noisy background that touches every edge.

    ``dark_fraction`` is roughly the share of the frame the fill can flatten,
    so it steers how much a frame shrinks.
    """
    if not 0.0 <= dark_fraction < 1.0:
        raise ValueError("dark_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    h, w = shape
    img = rng.integers(0, threshold + 1, size=(h, w), dtype=np.uint8)
    side = np.sqrt(1.0 - dark_fraction)
    bh, bw = max(1, int(round(h * side))), max(1, int(round(w * side)))
    top, left = (h - bh) // 2, (w - bw) // 2
    block = rng.integers(120, 256, size=(bh, bw), dtype=np.uint8)
    block[::8, :] = 255
    block[:, ::8] = 255
    img[top : top + bh, left : left + bw] = block
    return img


def save_png(path, pixels: np.ndarray) -> None:
    write_atomic(path, encode_png(pixels))
