import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locprior.errors import DimensionError, ParameterError
from locprior.estimator import localize
from locprior.features import FeatureConfig, extract_features
from locprior.instrument import counting
from locprior.multiscale import (CorrelationStack, KernelDistributionConfig, correlate_by_query_resizing,
                                 correlate_multiscale, distribute_kernel, scale_factor, scale_ladder, unit_norm)
from locprior.synthetic import composite, generate_reference_set, render_background, to_uint8
from locprior.tensor_core import cross_correlate

from planting import PLANT_CONFIG, nearest_mask, planted_pair


@pytest.fixture
def ref5(rng):
    return rng.normal(size=(9, 5, 5)).astype(np.float32)


class TestDistributeKernel:
    def test_identity_config(self, ref5):
        ks = distribute_kernel(ref5, KernelDistributionConfig((0,), (1,), (1,)))
        assert len(ks) == 1
        np.testing.assert_array_equal(ks[0].tensor, ref5)
        assert ks[0].scale_factor == 1.0

    def test_pooled_side(self, ref5):
        ks = distribute_kernel(ref5, KernelDistributionConfig((1,), (2,), ()))
        pooled = [k for k in ks if k.provenance == "pooled"]
        assert pooled[0].tensor.shape == (9, 3, 3)
        assert pooled[0].scale_factor == pytest.approx(6 / 10)

    def test_dilated_side(self, ref5):
        ks = distribute_kernel(ref5, KernelDistributionConfig((1,), (), (2,)))
        dil = [k for k in ks if k.provenance == "dilated"]
        assert dil[0].tensor.shape == (9, 11, 11)
        assert dil[0].scale_factor == pytest.approx(11 / 5)

    def test_scale_factor_bookkeeping(self):
        assert scale_factor(7, 5, "offset") == pytest.approx(1.4)
        assert scale_factor(7, 5, "pooled", 2) == pytest.approx(0.7)
        assert scale_factor(7, 5, "dilated", 2) == pytest.approx(13 / 5)

    def test_default_channels(self, ref5):
        ks = distribute_kernel(ref5)
        sf = [k.scale_factor for k in ks]
        assert len(ks) == 15 == KernelDistributionConfig().n_channels
        assert sf == sorted(sf)
        assert min(sf) < 1 < max(sf)

    @pytest.mark.parametrize("cfg", [
        KernelDistributionConfig((0,), (), ()),
        KernelDistributionConfig((-1, 0, 1), (2,), ()),
        KernelDistributionConfig((-2, 0, 2), (2, 3), (2,)),
        KernelDistributionConfig((0, 1), (1, 2), (1, 2, 3)),
        KernelDistributionConfig((0, 0, 1), (2, 2), ()),
    ])
    def test_channel_count(self, ref5, cfg):
        pools = len({t for t in cfg.pool_rates if t > 1})
        dils = len({t for t in cfg.dilation_rates if t > 1})
        expected = len(set(cfg.offsets)) * (1 + pools + dils)
        assert len(distribute_kernel(ref5, cfg)) == cfg.n_channels == expected

    def test_dims_follow_provenance(self, ref5):
        for k in distribute_kernel(ref5, KernelDistributionConfig((-2, -1, 0, 1, 2), (2, 3), (2, 3))):
            hc = k.candidate_side
            side = {"offset": hc, "pooled": -(-hc // k.rate), "dilated": hc * k.rate - k.rate + 1}[k.provenance]
            assert k.tensor.shape[1:] == (side, side)
            assert k.scale_factor > 0

    def test_offset_too_small(self, ref5):
        with pytest.raises(ParameterError):
            distribute_kernel(ref5, KernelDistributionConfig((-4,), (), ()))

    def test_bad_rates(self):
        with pytest.raises(ParameterError):
            KernelDistributionConfig((0,), (0,), ())
        with pytest.raises(ParameterError):
            KernelDistributionConfig((), (), ())

    def test_config_json_round_trip(self):
        cfg = KernelDistributionConfig((-1, 0, 3), (2,), (2, 3))
        assert KernelDistributionConfig.from_json(cfg.to_json()) == cfg


class TestCorrelateMultiscale:
    def test_identity_reduces_to_cross_correlate(self, rng, ref5):
        q = rng.normal(size=(9, 12, 14)).astype(np.float32)
        ref = unit_norm(ref5)
        stack = correlate_multiscale(q, ref, KernelDistributionConfig.identity(), normalize="kernel")
        assert stack.n_channels == 1 and stack.scale_factors == [1.0]
        np.testing.assert_allclose(stack.tensor[0], cross_correlate(q, ref)[0], rtol=1e-5, atol=1e-6)

    def test_exact_copy_recovered(self, rng):
        for _ in range(10):
            q = rng.normal(size=(9, 16, 16)).astype(np.float32)
            r, c = rng.integers(2, 14, 2)
            ref = q[:, r - 2:r + 3, c - 2:c + 3].copy()
            m = correlate_multiscale(q, ref, KernelDistributionConfig.identity()).tensor[0]
            assert np.unravel_index(np.argmax(m), m.shape) == (r, c)
            assert m.max() == pytest.approx(1.0, abs=1e-5)

    def test_cosine_bounded(self, rng, ref5):
        q = rng.normal(size=(9, 10, 10)).astype(np.float32)
        t = correlate_multiscale(q, ref5).tensor
        assert t.shape == (15, 10, 10)
        assert np.all(np.abs(t) <= 1 + 1e-5)

    @pytest.mark.parametrize("scale", [0.5, 1.0, 2.0])
    def test_planted_scale_peak(self, scale):
        hits = 0
        for seed in range(20):
            q, ref, _ = planted_pair(seed, scale)
            stack = correlate_multiscale(q, ref, PLANT_CONFIG)
            peaks = stack.tensor.reshape(stack.n_channels, -1).max(axis=1)
            hits += bool(nearest_mask(stack.scale_factors, scale)[np.argmax(peaks)])
        assert hits >= 18

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError):
            correlate_multiscale(rng.normal(size=(9, 8, 8)), rng.normal(size=(3, 5, 5)))

    def test_bad_normalize(self, ref5):
        with pytest.raises(ParameterError):
            correlate_multiscale(np.zeros((9, 8, 8)), ref5, normalize="zncc")

    def test_stack_save_load(self, tmp_path, rng, ref5):
        stack = correlate_multiscale(rng.normal(size=(9, 8, 8)), ref5)
        stack.save(tmp_path / "c.lpt1")
        back = CorrelationStack.load(tmp_path / "c.lpt1")
        np.testing.assert_array_equal(back.tensor, stack.tensor)
        assert back.scale_factors == stack.scale_factors
        assert back.half_shift == stack.half_shift

    def test_stack_shape_checked(self):
        with pytest.raises(DimensionError):
            CorrelationStack(np.zeros((2, 3, 3), np.float32), [1.0])


@pytest.fixture(scope="module")
def sprite_scene():
    refs = generate_reference_set(0, 1, 48.0)[0]
    img = to_uint8(composite(render_background(-1, 128, 128), 0, (60.0, 70.0), 48.0, 0.0))
    return img, refs.kernels[0]


class TestQueryResizing:
    def test_scale_one_matches_kernel_distribution(self, sprite_scene):
        img, ref = sprite_scene
        qr = correlate_by_query_resizing(img, ref, [1.0])
        kd = correlate_multiscale(extract_features(img), ref, KernelDistributionConfig.identity())
        np.testing.assert_allclose(qr.tensor, kd.tensor, atol=1e-4)

    def test_one_pass_per_scale(self, sprite_scene):
        img, ref = sprite_scene
        for scales in ([1.0], [0.8, 1.0, 1.25], [0.5, 0.7, 1.0, 1.4, 2.0]):
            with counting() as ctr:
                stack = correlate_by_query_resizing(img, ref, scales)
            assert ctr.calls["extract_features"] == len(scales)
            assert stack.tensor.shape == (len(scales), 16, 16)

    def test_planted_half_scale(self):
        refs = generate_reference_set(0, 1, 48.0)[0]
        for seed in range(10):
            g = np.random.default_rng(seed)
            img = to_uint8(composite(render_background(-1, 128, 128), 0, g.uniform(30, 98, 2), 24.0, 0.0))
            stack = correlate_by_query_resizing(img, refs.kernels[0], [0.5, 1.0, 2.0])
            assert np.argmax(stack.tensor.reshape(3, -1).max(axis=1)) == 0

    def test_bad_scales(self, sprite_scene):
        img, ref = sprite_scene
        with pytest.raises(ParameterError):
            correlate_by_query_resizing(img, ref, [])
        with pytest.raises(ParameterError):
            correlate_by_query_resizing(img, ref, [1.0, -2.0])
        with pytest.raises(DimensionError):
            correlate_by_query_resizing(img, ref, [40.0])


class TestSinglePass:
    def test_localize_extracts_query_once(self, sprite_scene):
        img, _ = sprite_scene
        refs = generate_reference_set(0, 8, 48.0)[0]
        with counting() as ctr:
            localize(extract_features(img), refs)
        assert ctr.calls["extract_features"] == 1

    @settings(max_examples=5, deadline=None)
    @given(st.integers(1, 5))
    def test_ladder_channels(self, n):
        assert len(distribute_kernel(np.ones((1, 5, 5), np.float32), scale_ladder(n))) == n

    def test_ladder_bounds(self):
        for n in (0, 6):
            with pytest.raises(ParameterError):
                scale_ladder(n)
