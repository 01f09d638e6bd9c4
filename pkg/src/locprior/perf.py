"""Operation counts and timing for two ways of getting multi-scale correlation maps.

``kernel_distribution`` extracts query features once and correlates distributed
reference kernels.  ``query_resizing`` resizes the query image once per scale
and re-runs the extractor each time.  Both produce maps for the same set of
scale factors.

MAC figures describe the surrogate extractor defined in :mod:`features`, not a
learned backbone, so only the relative trend between strategies is meaningful.
"""
from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DimensionError, ParameterError
from .features import FeatureConfig, backbone_macs, extract_features
from .instrument import counting
from .multiscale import correlate_by_query_resizing, correlate_multiscale, distribute_kernel, scale_ladder
from .synthetic import BenchConfig, generate_reference_set, generate_scene, sample_scene

STRATEGIES = ("kernel_distribution", "query_resizing")
REPORT_NOTE = ("MACs are counted for the hand-crafted surrogate extractor and numpy correlation; "
               "absolute values are not comparable to a learned backbone, only the trend is.")


def count_macs_correlation(query_dims, kernel_dims, padding: str = "same") -> int:
    """``H_o * W_o * C * H_k * W_k`` for one cross-correlation."""
    c, h, w = query_dims
    kc, kh, kw = kernel_dims
    if c != kc:
        raise DimensionError(f"channel mismatch: query {c} vs kernel {kc}")
    if min(c, h, w, kh, kw) < 1:
        raise DimensionError("dims must be positive")
    if padding == "same":
        ho, wo = h, w
    elif padding == "valid":
        ho, wo = h - kh + 1, w - kw + 1
        if ho < 1 or wo < 1:
            raise DimensionError(f"kernel {kh}x{kw} exceeds query {h}x{w} under valid padding")
    else:
        raise ParameterError(f"padding must be 'valid' or 'same', got {padding!r}")
    return ho * wo * c * kh * kw


def count_macs_backbone(image_dims, fx: FeatureConfig = FeatureConfig()) -> int:
    """MACs of one extractor pass over an ``H x W`` image."""
    h, w = image_dims[:2]
    if h < fx.stride or w < fx.stride:
        raise DimensionError(f"image {h}x{w} is smaller than the stride {fx.stride}")
    return backbone_macs((h, w), fx)


@dataclass(frozen=True)
class MacReport:
    strategy: str
    n_scales: int
    backbone_macs: int
    correlation_macs: int
    total_macs: int
    wall_ns: int
    backbone_passes: int  # extractor invocations per query image

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"unknown strategy {self.strategy!r}")
        if self.total_macs != self.backbone_macs + self.correlation_macs:
            raise ParameterError("total_macs must equal backbone + correlation")
        if self.n_scales < 1 or self.wall_ns <= 0:
            raise ParameterError("n_scales must be >= 1 and wall_ns > 0")


@dataclass
class PerfFixture:
    images: list[np.ndarray]
    ref_kernel: np.ndarray
    fx: FeatureConfig = FeatureConfig()


def default_fixture(n_images: int = 3, bench: BenchConfig = BenchConfig(), fx: FeatureConfig = FeatureConfig()) -> PerfFixture:
    """First ``n_images`` benchmark scenes of object 0 and its first reference kernel."""
    refs = generate_reference_set(0, 1, bench.s_r, fx)[0]
    images = [generate_scene(sample_scene(bench, 0, i))[0] for i in range(n_images)]
    return PerfFixture(images, refs.kernels[0], fx)


def run_kernel_distribution(img, ref_kernel, n_scales: int, fx: FeatureConfig = FeatureConfig()):
    return correlate_multiscale(extract_features(img, fx), ref_kernel, scale_ladder(n_scales))


def run_query_resizing(img, ref_kernel, n_scales: int, fx: FeatureConfig = FeatureConfig()):
    return correlate_by_query_resizing(img, ref_kernel, ladder_scales(ref_kernel, n_scales), fx)


def ladder_scales(ref_kernel, n_scales: int) -> list[float]:
    """The scale factors the distributed kernels cover, reused as resize ratios for the baseline."""
    return [k.scale_factor for k in distribute_kernel(ref_kernel, scale_ladder(n_scales))]


RUNNERS: dict[str, Callable] = {"kernel_distribution": run_kernel_distribution,
                                "query_resizing": run_query_resizing}


def _measure(strategy: str, n_scales: int, fixture: PerfFixture, repeats: int, warmup: int) -> MacReport:
    run = RUNNERS[strategy]
    with counting() as ctr:
        for img in fixture.images:
            run(img, fixture.ref_kernel, n_scales, fixture.fx)
    passes, rem = divmod(ctr.calls["extract_features"], len(fixture.images))
    assert rem == 0
    for _ in range(warmup):
        for img in fixture.images:
            run(img, fixture.ref_kernel, n_scales, fixture.fx)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        for img in fixture.images:
            run(img, fixture.ref_kernel, n_scales, fixture.fx)
        times.append(time.perf_counter_ns() - t0)
    bb, corr = ctr.total("backbone"), ctr.total("correlation")
    return MacReport(strategy, n_scales, bb, corr, bb + corr, max(1, int(statistics.median(times))), passes)


def compare_strategies(n_scales: Sequence[int] = (1, 2, 3, 4, 5), fixture: PerfFixture | None = None,
                       repeats: int = 9, warmup: int = 2, threads: int | None = 1) -> list[tuple[MacReport, MacReport]]:
    """``(kernel_distribution, query_resizing)`` reports per scale count.

    MACs are summed over all fixture images.  ``threads=1`` pins BLAS to one
    thread for the timing; ``None`` leaves the thread pools alone.
    """
    if repeats < 1 or warmup < 0:
        raise ParameterError("repeats must be >= 1 and warmup >= 0")
    fixture = fixture or default_fixture()
    if not fixture.images:
        raise ParameterError("fixture has no images")
    out = []
    with threadpool_limits(limits=threads):
        for n in n_scales:
            out.append(tuple(_measure(s, n, fixture, repeats, warmup) for s in STRATEGIES))
    return out


def report_json(pairs, config: dict) -> str:
    reports = [asdict(r) for pair in pairs for r in pair]
    return json.dumps({"note": REPORT_NOTE, "config": config, "reports": reports}, indent=2, sort_keys=True)


def report_csv(pairs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_scales", "strategy", "total_macs", "wall_ns"])
    for pair in pairs:
        for r in pair:
            w.writerow([r.n_scales, r.strategy, r.total_macs, r.wall_ns])
    return buf.getvalue()
