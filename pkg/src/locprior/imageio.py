"""Minimal binary PPM (P6) / PGM (P5) reader and writer."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ValidationError


def _tokens(raw: bytes, n: int) -> tuple[list[int], int]:
    """Read ``n`` whitespace-separated header integers, skipping ``#`` comments."""
    out: list[int] = []
    i = 2
    while len(out) < n:
        while i < len(raw) and raw[i:i + 1].isspace():
            i += 1
        if i < len(raw) and raw[i:i + 1] == b"#":
            while i < len(raw) and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(raw) and raw[j:j + 1].isdigit():
            j += 1
        if j == i:
            raise ValidationError("malformed PNM header")
        out.append(int(raw[i:j]))
        i = j
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def _read_pnm(path, magic: bytes, channels: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:2] != magic:
        raise ValidationError(f"{path}: expected {magic.decode()} image, found {raw[:2]!r}")
    (w, h, maxval), offset = _tokens(raw, 3)
    if maxval != 255:
        raise ValidationError(f"{path}: only 8-bit images are supported (maxval={maxval})")
    n = w * h * channels
    if len(raw) - offset < n:
        raise ValidationError(f"{path}: raster truncated ({len(raw) - offset} of {n} bytes)")
    data = np.frombuffer(raw, dtype=np.uint8, count=n, offset=offset)
    return data.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_ppm(path) -> np.ndarray:
    """Return an ``H x W x 3`` uint8 array."""
    return _read_pnm(path, b"P6", 3)


def read_pgm(path) -> np.ndarray:
    return _read_pnm(path, b"P5", 1)


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"PPM needs an H x W x 3 uint8 array, got {img.dtype} {img.shape}")
    h, w, _ = img.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes())


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValidationError(f"PGM needs an H x W uint8 array, got {img.dtype} {img.shape}")
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes())


def heatmap_to_gray(m: np.ndarray) -> np.ndarray:
    """Min-max scale a real-valued map to uint8; a constant map becomes all zeros."""
    m = np.asarray(m, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi <= lo:
        return np.zeros(m.shape, dtype=np.uint8)
    return np.round((m - lo) / (hi - lo) * 255.0).astype(np.uint8)
