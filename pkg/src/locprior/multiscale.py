"""Multi-scale correlation by distributing one reference kernel over several resolutions.

A reference kernel is re-interpolated at a few side lengths (the *candidates*),
and every candidate is additionally shrunk by pyramid pooling and expanded by
dilation.  Correlating the query feature map with all of these kernels yields a
stack of equally sized maps whose receptive fields differ, from a single
feature-extraction pass over the query.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError
from .features import FeatureConfig, FeatureMap, extract_features
from .instrument import add_macs
from .tensor_core import (as_chw, cross_correlate_batch, dilate_kernel, pyramid_pool, read_lpt1,
                          resize_bilinear, write_lpt1)

PROVENANCE_ORDER = {"offset": 0, "pooled": 1, "dilated": 2}


@dataclass(frozen=True)
class KernelDistributionConfig:
    offsets: tuple[int, ...] = (-2, -1, 0, 1, 2)
    pool_rates: tuple[int, ...] = (2,)
    dilation_rates: tuple[int, ...] = (2,)

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        object.__setattr__(self, "pool_rates", tuple(int(t) for t in self.pool_rates))
        object.__setattr__(self, "dilation_rates", tuple(int(t) for t in self.dilation_rates))
        if not self.offsets:
            raise ParameterError("at least one offset is required")
        if any(t < 1 for t in self.pool_rates + self.dilation_rates):
            raise ParameterError("pool and dilation rates must be >= 1")

    def validate_for(self, kernel_side: int) -> None:
        if kernel_side + min(self.offsets) < 2:
            raise ParameterError(
                f"offset {min(self.offsets)} shrinks a {kernel_side}-cell kernel below 2 cells")

    @property
    def n_channels(self) -> int:
        extra = sum(t > 1 for t in set(self.pool_rates)) + sum(t > 1 for t in set(self.dilation_rates))
        return len(set(self.offsets)) * (1 + extra)

    def to_json(self) -> dict:
        return {"offsets": list(self.offsets), "pool_rates": list(self.pool_rates),
                "dilation_rates": list(self.dilation_rates)}

    @classmethod
    def from_json(cls, d: dict) -> "KernelDistributionConfig":
        return cls(tuple(d.get("offsets", (0,))), tuple(d.get("pool_rates", ())),
                   tuple(d.get("dilation_rates", ())))

    @classmethod
    def identity(cls) -> "KernelDistributionConfig":
        return cls((0,), (), ())


@dataclass(frozen=True)
class DistributedKernel:
    tensor: np.ndarray
    scale_factor: float
    provenance: str  # "offset", "pooled" or "dilated"
    rate: int = 1
    candidate_side: int = 0


@dataclass
class CorrelationStack:
    """Maps of one reference against the query, one channel per distributed kernel.

    ``half_shift[i]`` flags the (row, col) axes on which channel ``i`` came
    from an even kernel side, whose window centre sits half a cell after the
    output cell; :func:`aligned` resamples those channels onto window centres.
    """

    tensor: np.ndarray  # N_c x H_q x W_q
    scale_factors: list[float]
    provenance: list[str] = field(default_factory=list)
    half_shift: list[tuple[bool, bool]] = field(default_factory=list)

    def __post_init__(self):
        if self.tensor.ndim != 3 or self.tensor.shape[0] != len(self.scale_factors):
            raise DimensionError(
                f"stack {self.tensor.shape} does not match {len(self.scale_factors)} scale factors")
        if not self.half_shift:
            self.half_shift = [(False, False)] * len(self.scale_factors)

    @property
    def n_channels(self) -> int:
        return self.tensor.shape[0]

    def aligned(self) -> np.ndarray:
        return np.stack([center_align(m, 2 if sy else 1, 2 if sx else 1)
                         for m, (sy, sx) in zip(self.tensor, self.half_shift)])

    def scaled(self, a: float) -> "CorrelationStack":
        return CorrelationStack((self.tensor * np.float32(a)).astype(np.float32), list(self.scale_factors),
                                list(self.provenance), list(self.half_shift))

    def save(self, path) -> None:
        path = Path(path)
        write_lpt1(path, self.tensor)
        meta = {"scale_factors": self.scale_factors, "provenance": self.provenance,
                "half_shift": [list(h) for h in self.half_shift]}
        path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, path) -> "CorrelationStack":
        path = Path(path)
        meta = json.loads(path.with_name(path.name + ".json").read_text())
        return cls(read_lpt1(path), [float(s) for s in meta["scale_factors"]], list(meta.get("provenance", [])),
                   [tuple(bool(x) for x in h) for h in meta.get("half_shift", [])])


def scale_factor(candidate_side: int, ref_side: int, provenance: str, rate: int = 1) -> float:
    """Query/reference object-size ratio at which a distributed kernel lines up best.

    A candidate of side ``H_c`` covers ``H_c / H_r`` of the reference extent;
    pooling at rate ``t`` divides that by ``t``; a dilated kernel spans
    ``H_c * t - t + 1`` query cells.
    """
    if provenance == "pooled":
        return candidate_side / (ref_side * rate)
    if provenance == "dilated":
        return (candidate_side * rate - rate + 1) / ref_side
    return candidate_side / ref_side


def distribute_kernel(ref_kernel, cfg: KernelDistributionConfig = KernelDistributionConfig()) -> list[DistributedKernel]:
    """Build the candidate, pooled and dilated kernels for every offset, sorted by scale factor."""
    ref = as_chw(ref_kernel)
    _, h_r, w_r = ref.shape
    cfg.validate_for(min(h_r, w_r))
    out: list[DistributedKernel] = []
    for off in sorted(set(cfg.offsets)):
        hc, wc = h_r + off, w_r + off
        if hc < 1 or wc < 1:
            raise ParameterError(f"offset {off} gives an empty candidate")
        cand = resize_bilinear(ref, hc, wc)
        out.append(DistributedKernel(cand, scale_factor(hc, h_r, "offset"), "offset", 1, hc))
        for t in sorted(set(cfg.pool_rates)):
            if t > 1:
                out.append(DistributedKernel(pyramid_pool(cand, t), scale_factor(hc, h_r, "pooled", t), "pooled", t, hc))
        for t in sorted(set(cfg.dilation_rates)):
            if t > 1:
                out.append(DistributedKernel(dilate_kernel(cand, t), scale_factor(hc, h_r, "dilated", t), "dilated", t, hc))

    unique: list[DistributedKernel] = []
    for k in out:
        if not any(u.tensor.shape == k.tensor.shape and np.array_equal(u.tensor, k.tensor) for u in unique):
            unique.append(k)
    unique.sort(key=lambda k: (k.scale_factor, PROVENANCE_ORDER[k.provenance], k.tensor.shape[1]))
    return unique


def unit_norm(kernel: np.ndarray) -> np.ndarray:
    k = kernel.astype(np.float64)
    n = np.sqrt((k ** 2).sum())
    return (k / n).astype(np.float32) if n > 0 else kernel.astype(np.float32)


def center_align(m: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Shift a same-padded map of an even-sided kernel by half a cell so cell ``i`` is the window centre.

    With ``(k-1)//2`` leading pad rows, an even kernel's window centre sits at
    ``i + 0.5``; averaging neighbours moves it back to ``i``.
    """
    out = m.astype(np.float64)
    if kh % 2 == 0:
        out[..., 1:, :] = 0.5 * (out[..., 1:, :] + out[..., :-1, :])
        add_macs("correlation", out[..., 1:, :].size)
    if kw % 2 == 0:
        out[..., :, 1:] = 0.5 * (out[..., :, 1:] + out[..., :, :-1])
        add_macs("correlation", out[..., :, 1:].size)
    return out.astype(np.float32)


def _query_tensor(query) -> np.ndarray:
    return query.tensor if isinstance(query, FeatureMap) else as_chw(query)


def support_mask(k: DistributedKernel) -> np.ndarray:
    """``1 x H' x W'`` indicator of the taps a kernel actually reads (dilation gaps excluded)."""
    h, w = k.tensor.shape[1:]
    if k.provenance == "dilated":
        return dilate_kernel(np.ones((1, k.candidate_side, (w - 1) // k.rate + 1), np.float32), k.rate)
    return np.ones((1, h, w), np.float32)


def window_norms(q: np.ndarray, masks: Sequence[np.ndarray]) -> list[np.ndarray]:
    """L2 norm of the query values under each mask placed at every output cell."""
    energy = (q.astype(np.float64) ** 2).sum(axis=0)
    add_macs("correlation", q.size)
    return [np.sqrt(np.maximum(m[0].astype(np.float64), 0.0))
            for m in cross_correlate_batch(energy, masks, "same")]


def correlate_multiscale_many(query, ref_kernels: Sequence, cfg: KernelDistributionConfig = KernelDistributionConfig(),
                              normalize: str = "cosine", eps: float = 1e-6) -> list[CorrelationStack]:
    """One correlation stack per reference kernel; kernels of equal shape share one matmul.

    ``normalize="kernel"`` scales every distributed kernel to unit Frobenius
    norm; ``"cosine"`` additionally divides each output by the norm of the
    query window under the kernel's taps, giving cosine similarities in
    ``[-1, 1]`` (windows with norm below ``eps`` score 0).
    """
    if normalize not in ("kernel", "cosine"):
        raise ParameterError(f"normalize must be 'kernel' or 'cosine', got {normalize!r}")
    q = _query_tensor(query)
    per_ref: list[list[DistributedKernel]] = []
    flat: list[np.ndarray] = []
    for ref in ref_kernels:
        ref = as_chw(ref)
        if ref.shape[0] != q.shape[0]:
            raise DimensionError(f"channel mismatch: query {q.shape[0]} vs kernel {ref.shape[0]}")
        dks = distribute_kernel(ref, cfg)
        per_ref.append(dks)
        flat.extend(unit_norm(k.tensor) for k in dks)
    maps = cross_correlate_batch(q, flat, "same")

    norms: dict[tuple, np.ndarray] = {}
    if normalize == "cosine":
        masks: dict[tuple, np.ndarray] = {}
        for dks in per_ref:
            for k in dks:
                masks.setdefault(_mask_key(k), support_mask(k))
        norms = dict(zip(masks, window_norms(q, list(masks.values()))))

    stacks = []
    i = 0
    for dks in per_ref:
        chans = []
        for k in dks:
            m = maps[i][0].astype(np.float64)
            i += 1
            if normalize == "cosine":
                n = norms[_mask_key(k)]
                m = np.where(n > eps, m / np.maximum(n, eps), 0.0)
            chans.append(m.astype(np.float32))
        stacks.append(CorrelationStack(
            np.stack(chans), [k.scale_factor for k in dks], [k.provenance for k in dks],
            [(k.tensor.shape[1] % 2 == 0, k.tensor.shape[2] % 2 == 0) for k in dks]))
    return stacks


def _mask_key(k: DistributedKernel) -> tuple:
    return (k.provenance == "dilated", k.rate if k.provenance == "dilated" else 1) + k.tensor.shape[1:]


def correlate_multiscale(query, ref_kernel, cfg: KernelDistributionConfig = KernelDistributionConfig(),
                         normalize: str = "cosine") -> CorrelationStack:
    """Correlate the query feature map with every distributed version of ``ref_kernel``.

    Channels are ordered by increasing scale factor.  See
    :func:`correlate_multiscale_many` for ``normalize``.
    """
    return correlate_multiscale_many(query, [ref_kernel], cfg, normalize)[0]


def scale_ladder(n_scales: int) -> KernelDistributionConfig:
    """Kernel-distribution config producing exactly ``n_scales`` channels (1..5) for the efficiency study."""
    order = (0, 1, 2, -1, 3)
    if not 1 <= n_scales <= len(order):
        raise ParameterError(f"n_scales must be in 1..{len(order)}, got {n_scales}")
    return KernelDistributionConfig(tuple(sorted(order[:n_scales])), (), ())


def correlate_by_query_resizing(query_img: np.ndarray, ref_kernel, scales: Sequence[float],
                                fx: FeatureConfig = FeatureConfig(),
                                extractor: Callable[[np.ndarray, FeatureConfig], FeatureMap] = extract_features,
                                normalize: str = "cosine") -> CorrelationStack:
    """Baseline: rescale the query image once per scale and re-extract features each time.

    ``scales`` are query/reference object-size ratios, the same meaning as
    ``CorrelationStack.scale_factors``: an object ``s`` times the reference
    size is brought to reference size by resizing the image by ``1/s``.  Each
    map is resampled back to the unscaled feature grid so channels align.
    """
    img = np.asarray(query_img)
    h, w = img.shape[:2]
    if len(scales) == 0 or any(not s > 0 for s in scales):
        raise ParameterError("scales must be a non-empty list of positive numbers")
    ref = as_chw(ref_kernel)
    base_h, base_w = -(-h // fx.stride), -(-w // fx.stride)
    chans = []
    for s in scales:
        nh, nw = max(1, round(h / s)), max(1, round(w / s))
        if nh < fx.stride or nw < fx.stride:
            raise DimensionError(f"scale {s} shrinks the image to {nh}x{nw}, below the stride")
        scaled = img if (nh, nw) == (h, w) else resize_image(img, nh, nw)
        fm = extractor(scaled, fx)
        m = correlate_multiscale(fm, ref, KernelDistributionConfig.identity(), normalize)
        m = m.aligned()
        chans.append(resize_bilinear(m, base_h, base_w)[0])
    return CorrelationStack(np.stack(chans), [float(s) for s in scales], ["resized"] * len(scales))


def resize_image(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize of an ``H x W x 3`` uint8 image (costed as backbone input preparation)."""
    chw = resize_bilinear(img.transpose(2, 0, 1).astype(np.float32), new_h, new_w, category="backbone")
    return np.clip(np.round(chw.transpose(1, 2, 0)), 0, 255).astype(np.uint8)
