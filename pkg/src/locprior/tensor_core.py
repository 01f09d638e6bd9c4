"""Dense float32 tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 laid out as
``C x H x W`` (rank 3) or ``H x W`` (rank 2, read as ``C = 1``).  Every
function here is pure: inputs are never modified.
"""
from __future__ import annotations

import struct
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError, ValidationError
from .instrument import add_macs

LPT1_MAGIC = b"LPT1"


def as_chw(t) -> np.ndarray:
    """View ``t`` as a rank-3 float32 tensor (a rank-2 input gains a unit channel axis)."""
    a = np.asarray(t, dtype=np.float32)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise DimensionError(f"expected rank 2 or 3 tensor, got shape {a.shape}")
    if min(a.shape) < 1:
        raise DimensionError(f"all dims must be >= 1, got {a.shape}")
    return a


def _same_pads(k: int) -> tuple[int, int]:
    before = (k - 1) // 2
    return before, k - 1 - before


def _pad_query(q: np.ndarray, kh: int, kw: int, padding: str) -> np.ndarray:
    if padding == "valid":
        return q
    if padding != "same":
        raise ParameterError(f"padding must be 'valid' or 'same', got {padding!r}")
    return np.pad(q, ((0, 0), _same_pads(kh), _same_pads(kw)))


def _windows(q: np.ndarray, kh: int, kw: int) -> np.ndarray:
    c = q.shape[0]
    win = sliding_window_view(q, (kh, kw), axis=(1, 2))  # C, Ho, Wo, kh, kw
    ho, wo = win.shape[1:3]
    return win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * kh * kw), (ho, wo)


def cross_correlate(query, kernel, padding: str = "same") -> np.ndarray:
    """Sliding dot product of ``kernel`` over ``query`` (no kernel flip).

    Returns a ``1 x H_o x W_o`` map.  ``same`` zero-pads so the output matches
    the query's spatial dims; for even kernel sides the extra padding row/column
    goes after the data, so output cell ``i`` sees rows ``i - (k-1)//2 ...``.
    """
    return cross_correlate_batch(query, [kernel], padding)[0]


def cross_correlate_batch(query, kernels: Sequence, padding: str = "same") -> list[np.ndarray]:
    """Correlate one query against many kernels; kernels of equal shape share one matmul.

    Result order follows ``kernels``.  Accumulation is float64.
    """
    q = as_chw(query)
    ks = [as_chw(k) for k in kernels]
    out: list[np.ndarray | None] = [None] * len(ks)
    groups: dict[tuple[int, int, int], list[int]] = {}
    for i, k in enumerate(ks):
        if k.shape[0] != q.shape[0]:
            raise DimensionError(f"channel mismatch: query {q.shape[0]} vs kernel {k.shape[0]}")
        groups.setdefault(k.shape, []).append(i)

    q64 = q.astype(np.float64)
    for (c, kh, kw), idx in groups.items():
        qp = _pad_query(q64, kh, kw, padding)
        if kh > qp.shape[1] or kw > qp.shape[2]:
            raise DimensionError(f"kernel {kh}x{kw} larger than padded query {qp.shape[1]}x{qp.shape[2]}")
        cols, (ho, wo) = _windows(qp, kh, kw)
        weights = np.stack([ks[i].reshape(-1) for i in idx], axis=1).astype(np.float64)
        res = cols @ weights
        for j, i in enumerate(idx):
            out[i] = res[:, j].reshape(1, ho, wo).astype(np.float32)
            add_macs("correlation", ho * wo * c * kh * kw)
    return out  # type: ignore[return-value]


@lru_cache(maxsize=256)
def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Corner-aligned linear interpolation weights, shape ``n_out x n_in`` (cached, read-only)."""
    m = np.zeros((n_out, n_in))
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    if n_out == 1:
        pos = np.array([(n_in - 1) / 2.0])
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.clip(np.floor(pos).astype(int), 0, n_in - 2)
    frac = pos - lo
    rows = np.arange(n_out)
    m[rows, lo] = 1.0 - frac
    m[rows, lo + 1] += frac
    m.setflags(write=False)
    return m


def resize_bilinear(t, new_h: int, new_w: int, *, category: str = "correlation") -> np.ndarray:
    """Channel-wise bilinear resize with corner-aligned sampling.

    Resizing to the input's own dims returns an exact copy.
    """
    if new_h < 1 or new_w < 1:
        raise DimensionError(f"target dims must be positive, got {new_h}x{new_w}")
    a = as_chw(t)
    c, h, w = a.shape
    if (h, w) == (new_h, new_w):
        return a.copy()
    ay = _interp_matrix(h, new_h)
    ax = _interp_matrix(w, new_w)
    out = ay @ a.astype(np.float64) @ ax.T
    add_macs(category, 4 * c * new_h * new_w)
    return out.astype(np.float32)


def pyramid_pool(kernel, rate: int) -> np.ndarray:
    """Average-pool with non-overlapping ``rate x rate`` cells; the last cell may be ragged."""
    if rate < 1:
        raise ParameterError(f"pool rate must be >= 1, got {rate}")
    a = as_chw(kernel)
    if rate == 1:
        return a.copy()
    c, h, w = a.shape
    ys = np.arange(0, h, rate)
    xs = np.arange(0, w, rate)
    sums = np.add.reduceat(np.add.reduceat(a.astype(np.float64), ys, axis=1), xs, axis=2)
    counts = np.outer(np.diff(np.append(ys, h)), np.diff(np.append(xs, w)))
    add_macs("correlation", c * h * w)
    return (sums / counts).astype(np.float32)


def dilate_kernel(kernel, rate: int) -> np.ndarray:
    """Spread kernel taps ``rate`` cells apart, filling the gaps with zeros."""
    if rate < 1:
        raise ParameterError(f"dilation rate must be >= 1, got {rate}")
    a = as_chw(kernel)
    if rate == 1:
        return a.copy()
    c, h, w = a.shape
    out = np.zeros((c, h * rate - rate + 1, w * rate - rate + 1), dtype=np.float32)
    out[:, ::rate, ::rate] = a
    return out


def stack_maps(maps: Sequence) -> np.ndarray:
    """Concatenate ``1 x H x W`` (or ``H x W``) maps along a new leading channel axis."""
    if len(maps) == 0:
        raise DimensionError("cannot stack an empty list of maps")
    arrs = [as_chw(m) for m in maps]
    shape = arrs[0].shape
    for m in arrs:
        if m.shape[0] != 1 or m.shape[1:] != shape[1:]:
            raise DimensionError(f"map shape {m.shape} does not match {shape}")
    return np.concatenate(arrs, axis=0)


def write_lpt1(path, tensor) -> None:
    a = np.ascontiguousarray(tensor, dtype="<f4")
    if a.ndim < 1:
        raise DimensionError("LPT1 tensors need rank >= 1")
    header = LPT1_MAGIC + struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape)
    Path(path).write_bytes(header + a.tobytes())


def read_lpt1(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != LPT1_MAGIC or len(raw) < 8:
        raise ValidationError(f"{path}: not an LPT1 tensor file")
    (rank,) = struct.unpack_from("<I", raw, 4)
    end = 8 + 4 * rank
    if rank < 1 or len(raw) < end:
        raise ValidationError(f"{path}: truncated LPT1 header")
    dims = struct.unpack_from(f"<{rank}I", raw, 8)
    n = int(np.prod(dims))
    if len(raw) != end + 4 * n:
        raise ValidationError(f"{path}: payload has {len(raw) - end} bytes, expected {4 * n}")
    return np.frombuffer(raw, dtype="<f4", offset=end).reshape(dims).astype(np.float32)
