"""Netpbm image files and sweep CSVs."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

CSV_HEADER = ("quality", "variant", "psnr_db", "ssim", "grad_q_norm", "grad_qt_norm")
_MAGIC_CHANNELS = {b"P6": 3, b"P5": 1}


class PPMError(ValueError):
    pass


def _header_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last one.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PPMError("malformed header: unexpected end of file")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos : pos + 1].isspace():
        raise PPMError("malformed header: missing whitespace before pixel data")
    return tokens, pos + 1


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode P6 (RGB) or P5 (gray) bytes into a (C, H, W) float64 array."""
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in _MAGIC_CHANNELS:
        raise PPMError(f"unsupported format {magic!r}; expected P6 or P5")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PPMError("malformed header: non-integer field") from exc
    if width <= 0 or height <= 0:
        raise PPMError("malformed header: zero-sized image")
    if maxval != 255:
        raise PPMError(f"unsupported maxval {maxval}; only 255 is supported")
    channels = _MAGIC_CHANNELS[magic]
    size = width * height * channels
    payload = data[offset : offset + size]
    if len(payload) < size:
        raise PPMError(f"truncated pixel data: expected {size} bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return np.ascontiguousarray(arr.transpose(2, 0, 1), dtype=np.float64)


def encode_ppm(img) -> bytes:
    """Encode a (3, H, W) or (1, H, W) array; values are clamped and rounded."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected shape (3, H, W) or (1, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    c, h, w = arr.shape
    # half-up rounding is fine here: values are non-negative after the clamp
    pixels = np.floor(np.clip(arr, 0.0, 255.0) + 0.5).astype(np.uint8)
    magic = b"P6" if c == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (w, h)
    return header + pixels.transpose(1, 2, 0).tobytes()


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def write_ppm(path, img) -> None:
    data = encode_ppm(img)
    with open(path, "wb") as fh:
        fh.write(data)


@dataclass(frozen=True)
class SweepRecord:
    quality: float
    variant: str
    psnr_db: float
    ssim: float
    grad_q_norm: float = float("nan")
    grad_qt_norm: float = float("nan")


def format_float(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.6g}"


def format_quality(q) -> str:
    q = float(q)
    return str(int(q)) if q.is_integer() else format_float(q)


def csv_rows(records) -> list:
    rows = [list(CSV_HEADER)]
    for r in records:
        rows.append(
            [format_quality(r.quality), r.variant, format_float(r.psnr_db),
             format_float(r.ssim), format_float(r.grad_q_norm), format_float(r.grad_qt_norm)]
        )
    return rows


def write_table(path, rows, meta: str | None = None) -> None:
    """Write rows as CSV; ``meta`` becomes a leading ``#`` comment line."""
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write(f"# {meta}\n")
        csv.writer(fh, lineterminator="\n").writerows(rows)


def write_csv(path, records, meta: str | None = None) -> None:
    write_table(path, csv_rows(records), meta)


def list_images(directory) -> list:
    """Sorted paths of the .ppm/.pgm files in ``directory``."""
    names = sorted(
        n for n in os.listdir(directory) if n.lower().endswith((".ppm", ".pgm"))
    )
    return [os.path.join(directory, n) for n in names]
