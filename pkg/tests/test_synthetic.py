import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locprior.errors import ParameterError
from locprior.geometry import SquareBox, geodesic_distance
from locprior.imageio import read_ppm, write_ppm
from locprior.metrics import EvalRecord, IOU_THRESHOLDS, average_precision, box_iou, map_50_95, per_threshold_ap
from locprior.synthetic import (REFERENCE_GRAY, BenchConfig, SceneSpec, benchmark_specs, composite,
                                generate_reference_set, generate_scene, render_background, render_sprite,
                                sample_scene, to_uint8)


def brute_ap(ious, confs, thr):
    """Precision envelope evaluated at every recall level, one ground truth per record."""
    n = len(ious)
    ranked = sorted(range(n), key=lambda i: (-confs[i], i))
    tp, pts = 0, []
    for rank, i in enumerate(ranked, 1):
        tp += ious[i] >= thr - 1e-12
        pts.append((tp / n, tp / rank))
    ap, prev = 0.0, 0.0
    for r, _ in pts:
        if r > prev:
            ap += (r - prev) * max(p for rr, p in pts if rr >= r)
            prev = r
    return ap


def brute_map(records):
    ious = [r.iou for r in records]
    confs = [r.confidence for r in records]
    return 100.0 * sum(brute_ap(ious, confs, t) for t in IOU_THRESHOLDS) / len(IOU_THRESHOLDS)


def make_records(rng, n):
    recs = []
    for _ in range(n):
        truth = SquareBox(*rng.uniform(30, 70, 2), rng.uniform(10, 40))
        pred = SquareBox(truth.u + rng.normal(0, 4), truth.v + rng.normal(0, 4), truth.size * rng.uniform(0.7, 1.3))
        recs.append(EvalRecord.make(pred, float(rng.choice([rng.uniform(), 0.5])), truth))
    return recs


class TestScenes:
    def test_deterministic(self):
        spec = sample_scene(BenchConfig(), 1, 7)
        a, ta = generate_scene(spec)
        b, tb = generate_scene(spec)
        assert a.tobytes() == b.tobytes() and ta == tb

    def test_ppm_bit_identical(self, tmp_path):
        spec = sample_scene(BenchConfig(), 3, 2)
        write_ppm(tmp_path / "a.ppm", generate_scene(spec)[0])
        write_ppm(tmp_path / "b.ppm", generate_scene(spec)[0])
        assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()
        np.testing.assert_array_equal(read_ppm(tmp_path / "a.ppm"), generate_scene(spec)[0])

    def test_clean_composite_is_sprite(self):
        spec = SceneSpec(seed=0, object_id=2, center=(64.0, 60.0), size=50.0, rotation_deg=30.0,
                         background_id=-1, illumination_gain=1.0, noise_sigma=0.0, frame=(128, 128))
        img, truth = generate_scene(spec)
        vv, uu = np.mgrid[0:128, 0:128] + 0.5
        col, alpha = render_sprite(2, 50.0, 30.0, uu, vv, (64.0, 60.0))
        inside = alpha == 1.0
        np.testing.assert_array_equal(img[inside], to_uint8(col)[inside])
        assert np.all(img[alpha == 0] == REFERENCE_GRAY)
        assert truth == SquareBox(64.0, 60.0, 50.0)

    def test_sizes_span_range(self):
        cfg = BenchConfig(n_objects=1, n_queries=100)
        sizes = np.array([s.size for s in benchmark_specs(cfg)])
        lo, hi = cfg.size_range
        assert sizes.min() >= lo and sizes.max() <= hi
        # uniform: every fifth of the range is populated in roughly equal measure
        counts = np.histogram(sizes, bins=5, range=(lo, hi))[0]
        assert counts.min() >= 10 and counts.max() <= 30

    def test_objects_inside_frame(self):
        for spec in benchmark_specs(BenchConfig(n_queries=40), scale_ratio=2.0):
            spec.validate()
            assert spec.size >= 8

    @pytest.mark.parametrize("kw", [{"center": (5.0, 50.0)}, {"size": 6.0}, {"illumination_gain": 2.5},
                                    {"noise_sigma": -1.0}])
    def test_invalid_specs(self, kw):
        base = dict(seed=0, object_id=0, center=(64.0, 64.0), size=40.0, frame=(128, 128))
        with pytest.raises(ParameterError):
            generate_scene(SceneSpec(**{**base, **kw}))

    def test_spec_json_round_trip(self):
        spec = sample_scene(BenchConfig(), 4, 11, 1.6)
        assert SceneSpec.from_json(spec.to_json()) == spec

    def test_objects_differ(self):
        vv, uu = np.mgrid[0:32, 0:32] + 0.5
        cols = [render_sprite(o, 30, 0, uu, vv, (16, 16))[0] for o in range(5)]
        for a in range(5):
            for b in range(a + 1, 5):
                assert np.abs(cols[a] - cols[b]).mean() > 0.02

    def test_backgrounds_seeded(self):
        np.testing.assert_array_equal(render_background(5, 32, 40), render_background(5, 32, 40))
        assert np.abs(render_background(5, 32, 40) - render_background(6, 32, 40)).mean() > 0.01

    def test_sweep_ratio_one_is_base(self):
        cfg = BenchConfig(n_queries=10)
        assert benchmark_specs(cfg, 1.0) == benchmark_specs(cfg)
        wide = benchmark_specs(cfg, 2.0)
        assert [s.seed for s in wide] == [s.seed for s in benchmark_specs(cfg)]
        assert all(s.size != w.size for s, w in zip(benchmark_specs(cfg), wide))


class TestReferenceSet:
    def test_four_views(self):
        refs, images, boxes = generate_reference_set(0, 4, 40.0)
        assert len(refs) == 4 == len(images)
        for i in range(4):
            assert geodesic_distance(refs.rotations[i], refs.rotations[(i + 1) % 4]) == pytest.approx(0.5)
        assert {b.size for b in boxes} == {40.0}

    def test_default_count(self):
        refs, _, boxes = generate_reference_set(1)
        assert len(refs) == 32
        assert len({k.shape for k in refs.kernels}) == 1
        assert all(b == boxes[0] for b in boxes)

    def test_explicit_angles(self):
        refs, _, _ = generate_reference_set(1, angles=[0.0, 33.0])
        assert geodesic_distance(refs.rotations[0], refs.rotations[1]) == pytest.approx(33 / 180)

    def test_permuted(self):
        refs = generate_reference_set(0, 5, 40.0)[0]
        p = refs.permuted([4, 2, 0, 1, 3])
        np.testing.assert_array_equal(p.kernels[0], refs.kernels[4])
        np.testing.assert_array_equal(p.rotations[1], refs.rotations[2])

    def test_bad_count(self):
        with pytest.raises(ParameterError):
            generate_reference_set(0, 0)


class TestBoxIou:
    def test_identical(self):
        assert box_iou(SquareBox(3, 4, 5), SquareBox(3, 4, 5)) == 1.0

    def test_disjoint(self):
        assert box_iou(SquareBox(0, 0, 2), SquareBox(10, 0, 2)) == 0.0

    def test_offset_third(self):
        assert box_iou(SquareBox(0, 0, 2), SquareBox(1, 0, 2)) == pytest.approx(1 / 3)

    @given(st.tuples(*[st.floats(-50, 50)] * 2, st.floats(0.1, 30)), st.tuples(*[st.floats(-50, 50)] * 2, st.floats(0.1, 30)),
           st.floats(0.01, 100))
    def test_symmetric_and_scale_invariant(self, a, b, lam):
        a, b = SquareBox(*a), SquareBox(*b)
        iou = box_iou(a, b)
        assert 0.0 <= iou <= 1.0
        assert iou == box_iou(b, a)
        scaled = box_iou(SquareBox(*(lam * x for x in a)), SquareBox(*(lam * x for x in b)))
        assert scaled == pytest.approx(iou, abs=1e-9)

    def test_non_positive(self):
        with pytest.raises(ParameterError):
            box_iou(SquareBox(0, 0, 0), SquareBox(0, 0, 1))


class TestMap:
    def test_perfect(self):
        b = SquareBox(10, 10, 5)
        assert map_50_95([EvalRecord.make(b, 0.3, b)] * 4) == 100.0

    def test_disjoint(self):
        recs = [EvalRecord.make(SquareBox(100, 100, 5), 0.9, SquareBox(10, 10, 5))] * 3
        assert map_50_95(recs) == 0.0

    def test_hand_fixture(self):
        ious = [0.95, 0.3, 0.72, 0.5, 0.88, 0.61, 0.0, 0.97, 0.55, 0.8]
        confs = [0.9, 0.85, 0.8, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2]
        recs = [EvalRecord(SquareBox(0, 0, 1), c, SquareBox(0, 0, 1), i) for i, c in zip(ious, confs)]
        assert map_50_95(recs) == pytest.approx(brute_map(recs), abs=1e-9)

    def test_random_fixtures(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            recs = make_records(rng, int(rng.integers(1, 30)))
            assert map_50_95(recs) == pytest.approx(brute_map(recs), abs=1e-9)

    def test_ap_ranks_by_confidence(self):
        assert average_precision([True, False], [0.9, 0.1], 2) == pytest.approx(0.5)
        assert average_precision([False, True], [0.9, 0.1], 2) == pytest.approx(0.25)

    def test_threshold_edges(self):
        recs = [EvalRecord(SquareBox(0, 0, 1), 1.0, SquareBox(0, 0, 1), 0.75)]
        ap = per_threshold_ap(recs)
        assert ap[:6] == [100.0] * 6 and ap[6:] == [0.0] * 4

    def test_empty(self):
        with pytest.raises(ParameterError):
            map_50_95([])
