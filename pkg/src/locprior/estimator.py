"""Decoupled location estimator.

The object centre comes from a *scale-robust* fusion of the correlation stack:
each map is standardized, weighted by how far its peak stands above the rest,
and softmax-combined.  The object size comes from the *scale-aware* raw stack:
channels whose kernels fit the object best dominate a softmax over their
scale factors.  Evidence is pooled across references with nearby poses.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .features import FeatureMap
from .geometry import pairwise_geodesic
from .multiscale import CorrelationStack, KernelDistributionConfig, correlate_multiscale_many
from .synthetic import ReferenceSet

SIGMA_EPS = 1e-8
SIZE_TEMPERATURE = 0.3
SIZE_WINDOW = 1.5  # size softmax only sees channels within this scale ratio of the best one


@dataclass(frozen=True)
class FusedMap:
    map: np.ndarray  # H x W
    weights: np.ndarray  # N_c


@dataclass(frozen=True)
class LocationPrior:
    center: tuple[float, float]
    size: float
    confidence: float
    best_reference: int

    def to_json(self) -> dict:
        return {"center": [float(self.center[0]), float(self.center[1])], "size": float(self.size),
                "confidence": float(self.confidence), "best_reference": int(self.best_reference)}

    @classmethod
    def from_json(cls, d: dict) -> "LocationPrior":
        return cls((float(d["center"][0]), float(d["center"][1])), float(d["size"]),
                   float(d["confidence"]), int(d["best_reference"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _as_map(c) -> np.ndarray:
    a = np.asarray(c, dtype=np.float64)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    return a


def normalize_map(c, eps: float = SIGMA_EPS) -> np.ndarray:
    """``(c - mean) / max(std, eps)`` with the population standard deviation."""
    a = _as_map(c)
    mu = a.mean()
    sd = a.std()
    return ((a - mu) / max(sd, eps)).astype(np.float32)


def _normalize_stack(t: np.ndarray, eps: float = SIGMA_EPS) -> np.ndarray:
    """:func:`normalize_map` applied to every channel of ``N x H x W`` at once (float64)."""
    t = np.asarray(t, dtype=np.float64)
    mu = t.mean(axis=(1, 2), keepdims=True)
    sd = t.std(axis=(1, 2), keepdims=True)
    return (t - mu) / np.maximum(sd, eps)


def map_weight(c_norm) -> float:
    """Mean gap between the map maximum and each element.

    On a zero-mean map this equals the maximum itself.
    """
    a = _as_map(c_norm)
    return float(np.mean(a.max() - a))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max())
    return z / z.sum()


def fuse_maps(stack: CorrelationStack | np.ndarray) -> FusedMap:
    """Softmax-weighted sum of the standardized maps of a stack.

    Channels from even-sided kernels are first re-centred by half a cell so all
    maps share one pixel grid.
    """
    t = stack.aligned() if isinstance(stack, CorrelationStack) else np.asarray(stack)
    if t.ndim == 2:
        t = t[None]
    if t.shape[0] < 1:
        raise ParameterError("cannot fuse an empty stack")
    norm = _normalize_stack(t)
    w = (norm.max(axis=(1, 2), keepdims=True) - norm).mean(axis=(1, 2))
    sw = _softmax(w)
    fused = np.tensordot(sw, norm, axes=1)
    return FusedMap(fused.astype(np.float32), sw)


def estimate_center(fused, stride: int) -> tuple[tuple[float, float], float]:
    """Argmax cell refined by the weighted centroid of its 3x3 neighbourhood, in pixels.

    Weights are the neighbourhood values minus their minimum, so the result is
    invariant to adding a constant.  Returns ``((u, v), peak_value)``.
    """
    m = fused.map if isinstance(fused, FusedMap) else _as_map(fused)
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        raise ParameterError("empty map")
    r, c = np.unravel_index(int(np.argmax(m)), m.shape)
    r0, r1 = max(r - 1, 0), min(r + 2, m.shape[0])
    c0, c1 = max(c - 1, 0), min(c + 2, m.shape[1])
    patch = m[r0:r1, c0:c1]
    wts = patch - patch.min()
    tot = wts.sum()
    if tot > 0:
        rr, cc = np.mgrid[r0:r1, c0:c1]
        r_ref = float((wts * rr).sum() / tot)
        c_ref = float((wts * cc).sum() / tot)
    else:
        r_ref, c_ref = float(r), float(c)
    return ((c_ref + 0.5) * stride, (r_ref + 0.5) * stride), float(m[r, c])


def channel_responses(stack: CorrelationStack, at=None, radius: int = 1) -> np.ndarray:
    """Per-channel peak of the standardized maps; restricted to a window around cell ``at`` if given.

    Uses the un-recentred maps: averaging neighbours would flatten the peaks of
    even-sided kernels and bias the comparison toward odd sides.
    """
    n = _normalize_stack(stack.tensor)
    if at is not None:
        r, c = at
        n = n[:, max(r - radius, 0):r + radius + 1, max(c - radius, 0):c + radius + 1]
    return n.max(axis=(1, 2))


def estimate_size(stack: CorrelationStack, s_r: float, tau: float = SIZE_TEMPERATURE, at=None,
                  window: float = SIZE_WINDOW) -> float:
    """``s_r`` times the softmax(response / tau)-weighted mean of the channel scale factors.

    Only channels whose scale factor is within a ratio ``window`` of the
    strongest channel's take part, so weak far-off scales cannot drag the
    estimate toward the middle of the ladder.  ``window=inf`` uses every channel.
    """
    if tau <= 0:
        raise ParameterError("temperature must be positive")
    if window < 1:
        raise ParameterError("window must be >= 1")
    resp = channel_responses(stack, at)
    sf = np.asarray(stack.scale_factors, dtype=np.float64)
    best = sf[int(np.argmax(resp))]
    keep = (sf * window >= best * (1 - 1e-12)) & (sf <= best * window * (1 + 1e-12))
    p = _softmax(resp[keep] / tau)
    return float(s_r * np.dot(p, sf[keep]))


KNN_TIE_DECIMALS = 12


def knn_references(rotations: Sequence, k: int) -> list[list[int]]:
    """For each rotation, the ``k`` others closest in geodesic distance.

    Distances equal to ``KNN_TIE_DECIMALS`` places count as ties, broken by
    lower index; otherwise symmetric neighbours of evenly spaced poses would
    be ordered by rounding noise.
    """
    n = len(rotations)
    if k < 0 or k >= max(n, 1):
        raise ParameterError(f"k={k} must satisfy 0 <= k < N_r={n}")
    if k == 0:
        return [[] for _ in range(n)]
    d = np.round(pairwise_geodesic(rotations), KNN_TIE_DECIMALS)
    out = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        others.sort(key=lambda j: (d[i, j], j))
        out.append(others[:k])
    return out


def aggregate_neighbors(fused_maps: Sequence[np.ndarray], neighbors: list[list[int]]) -> list[np.ndarray]:
    """Mean of each reference's fused map with those of its neighbours.

    Values are summed in sorted order per cell, so the result does not depend
    on how the references are numbered.
    """
    out = []
    for i, nb in enumerate(neighbors):
        members = np.sort(np.stack([np.asarray(fused_maps[j], dtype=np.float64) for j in [i, *nb]]), axis=0)
        out.append((members.sum(axis=0) / len(members)).astype(np.float32))
    return out


def localize(query: FeatureMap, refs: ReferenceSet, cfg: KernelDistributionConfig = KernelDistributionConfig(),
             k: int = 3, tau: float = SIZE_TEMPERATURE, normalize: str = "cosine", return_maps: bool = False):
    """Location prior for one query from a reference set.

    Each reference's stack is fused, then averaged with the fused maps of its
    ``k`` nearest references in pose.  The reference whose averaged map peaks
    highest wins (references sharing a neighbourhood tie exactly; their own
    fused peaks then decide); the centre comes from that averaged map and the
    size from its own raw stack, read around the centre cell.

    With ``return_maps`` the result is ``(prior, aggregated_map_of_best_reference)``.
    """
    n = len(refs)
    if n == 0:
        raise ParameterError("reference set is empty")
    if not 0 <= k < n:
        raise ParameterError(f"k={k} must satisfy 0 <= k < N_r={n}")
    stacks = correlate_multiscale_many(query, refs.kernels, cfg, normalize)
    fused = [fuse_maps(s).map for s in stacks]
    agg = aggregate_neighbors(fused, knn_references(refs.rotations, k))
    peaks = np.array([float(a.max()) for a in agg])
    tied = np.flatnonzero(peaks == peaks.max())
    best = int(tied[np.argmax([float(fused[i].max()) for i in tied])])
    (u, v), conf = estimate_center(agg[best], query.stride)
    h, w = query.image_shape
    u = min(max(u, 0.0), float(w))
    v = min(max(v, 0.0), float(h))
    cell = np.unravel_index(int(np.argmax(agg[best])), agg[best].shape)
    size = estimate_size(stacks[best], refs.s_r, tau, at=cell)
    prior = LocationPrior((u, v), size, conf, best)
    return (prior, agg[best]) if return_maps else prior
