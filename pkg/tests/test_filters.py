"""Tests for the weighting functions and the weighted-mean reduction."""

from __future__ import annotations

import numpy as np
import pytest

from scenespace.filters import (
    ApertureSpec,
    BoxShutter,
    DecayTailShutter,
    ImpulseTrainShutter,
    Sigmas,
    filter_set,
    mean_reference,
    sharpness_table,
    w_action,
    w_aperture,
    w_deblur,
    w_denoise,
    w_inpaint,
    w_shutter,
    w_superres,
)
from scenespace.geometry import Frame
from scenespace.sampling import Sample, SampleSet

EXP_HALF = 0.6065306597126334  # exp(-1/2)


def random_set(rng, n=10, with_area=False) -> SampleSet:
    return SampleSet(
        rgb=rng.uniform(0, 255, size=(n, 3)),
        xyz=rng.uniform(-5, 5, size=(n, 3)),
        f=rng.integers(0, 30, size=n).astype(float),
        src_frame=rng.integers(0, 30, size=n),
        src_px=rng.integers(0, 64, size=(n, 2)),
        area=rng.uniform(0.0, 0.05, size=n) if with_area else None,
    )


def sample_at(rgb=(0, 0, 0), xyz=(0, 0, 0), f=0.0) -> Sample:
    return Sample(rgb=np.asarray(rgb, float), xyz=np.asarray(xyz, float), f=f)


class TestFilterSet:
    def test_uniform_weights_is_mean(self, rng):
        s = random_set(rng, n=17)
        out = filter_set(s, np.ones(17), fallback=np.zeros(3))
        assert np.allclose(out.color, s.rgb.mean(axis=0), atol=1e-9)
        assert out.weight_fraction == pytest.approx(1.0)

    def test_indicator_selects_single_sample(self, rng):
        s = random_set(rng, n=9)
        w = np.zeros(9)
        w[4] = 1.0
        out = filter_set(s, w, fallback=np.zeros(3))
        assert np.allclose(out.color, s.rgb[4])

    def test_fallback_on_empty_and_zero(self, rng):
        fallback = np.array([9.0, 8.0, 7.0])
        out = filter_set(SampleSet.empty(), np.empty(0), fallback)
        assert np.array_equal(out.color, fallback)
        assert out.weight_fraction == 0.0
        s = random_set(rng, n=5)
        out = filter_set(s, np.zeros(5), fallback)
        assert np.array_equal(out.color, fallback)

    def test_weight_scaling_invariance(self, rng):
        s = random_set(rng, n=8)
        w = rng.uniform(0.1, 1.0, size=8)
        a = filter_set(s, w, np.zeros(3)).color
        b = filter_set(s, 37.5 * w, np.zeros(3)).color
        assert np.allclose(a, b, atol=1e-12)

    def test_callable_weights(self, rng):
        s = random_set(rng, n=6)
        out = filter_set(s, lambda ss: np.ones(len(ss)), np.zeros(3))
        assert np.allclose(out.color, s.rgb.mean(axis=0))

    def test_convex_combination_bound(self, rng):
        s = random_set(rng, n=12)
        w = rng.uniform(0, 1, size=12)
        out = filter_set(s, w, np.zeros(3))
        assert np.all(out.color >= s.rgb.min(axis=0) - 1e-9)
        assert np.all(out.color <= s.rgb.max(axis=0) + 1e-9)


class TestDenoise:
    def test_ref_gets_unit_weight(self):
        ref = sample_at(rgb=(10, 20, 30), xyz=(1, 2, 3), f=5.0)
        s = SampleSet.from_samples([Sample(ref.rgb, ref.xyz, ref.f)])
        sig = Sigmas(rgb=40, xyz=10, f=6)
        assert w_denoise(s, ref, sig)[0] == pytest.approx(1.0)

    def test_one_sigma_color_offset(self):
        ref = sample_at()
        s = SampleSet.from_samples([sample_at(rgb=(40, 0, 0))])
        sig = Sigmas(rgb=40, xyz=10, f=6)
        assert w_denoise(s, ref, sig)[0] == pytest.approx(EXP_HALF)

    def test_symmetry_in_ref_and_sample(self, rng):
        a = sample_at(rgb=rng.uniform(0, 255, 3), xyz=rng.normal(size=3), f=3.0)
        b = sample_at(rgb=rng.uniform(0, 255, 3), xyz=rng.normal(size=3), f=7.0)
        sig = Sigmas(rgb=40, xyz=10, f=6)
        w_ab = w_denoise(SampleSet.from_samples([Sample(a.rgb, a.xyz, a.f)]), b, sig)
        w_ba = w_denoise(SampleSet.from_samples([Sample(b.rgb, b.xyz, b.f)]), a, sig)
        assert w_ab[0] == pytest.approx(w_ba[0], rel=1e-12)

    def test_channel_permutation_invariance(self, rng):
        ref = sample_at(rgb=(10, 60, 200))
        s = SampleSet.from_samples([sample_at(rgb=(30, 90, 150))])
        sig = Sigmas(rgb=40)
        w0 = w_denoise(s, ref, sig)[0]
        perm = [2, 0, 1]
        s2 = SampleSet.from_samples([sample_at(rgb=np.array([30, 90, 150])[perm])])
        ref2 = sample_at(rgb=np.array([10, 60, 200])[perm])
        assert w_denoise(s2, ref2, sig)[0] == pytest.approx(w0, rel=1e-12)

    def test_absent_dims_skipped(self):
        ref = sample_at()
        s = SampleSet.from_samples([sample_at(xyz=(100, 100, 100), f=50)])
        assert w_denoise(s, ref, Sigmas(rgb=40))[0] == pytest.approx(1.0)


class TestDeblur:
    def test_sharpest_frame_peak(self, rng):
        ref = sample_at()
        s = SampleSet(
            rgb=np.zeros((1, 3)), xyz=np.zeros((1, 3)), f=np.array([2.0]),
            src_frame=np.array([2]), src_px=np.zeros((1, 2), dtype=int),
        )
        sharp = {2: 1.0, 3: 0.25}
        sig = Sigmas(rgb=200, xyz=10, f=20)
        w = w_deblur(s, ref, sig, sharp)
        assert w[0] == pytest.approx(np.exp(-4.0 / (2 * 400.0)))  # f term only

    def test_missing_table_entry(self, rng):
        s = random_set(rng, n=3)
        with pytest.raises(ValueError):
            w_deblur(s, sample_at(), Sigmas(rgb=200), {})

    def test_constant_frame_sharpness_zero(self):
        frames = [
            Frame(np.full((8, 8, 3), 80.0), 0),
            Frame(np.tile(np.linspace(0, 255, 8)[None, :, None], (8, 1, 3)), 1),
        ]
        table = sharpness_table(frames)
        assert table[0] == 0.0
        assert table[1] == 1.0


class TestSuperres:
    def test_peak_at_zero_area(self):
        ref = sample_at()
        s = SampleSet(
            rgb=np.zeros((1, 3)), xyz=np.zeros((1, 3)), f=np.zeros(1),
            src_frame=np.zeros(1, dtype=int), src_px=np.zeros((1, 2), dtype=int),
            area=np.array([0.0]),
        )
        sig = Sigmas(rgb=50, area=0.02)
        assert w_superres(s, ref, sig)[0] == pytest.approx(1.0)

    def test_area_equal_sigma(self):
        ref = sample_at()
        s = SampleSet(
            rgb=np.zeros((1, 3)), xyz=np.zeros((1, 3)), f=np.zeros(1),
            src_frame=np.zeros(1, dtype=int), src_px=np.zeros((1, 2), dtype=int),
            area=np.array([0.02]),
        )
        sig = Sigmas(rgb=50, area=0.02)
        assert w_superres(s, ref, sig)[0] == pytest.approx(EXP_HALF)

    def test_missing_area_raises(self, rng):
        s = random_set(rng, n=2, with_area=False)
        with pytest.raises(ValueError):
            w_superres(s, sample_at(), Sigmas(rgb=50, area=0.02))


class TestMeanReference:
    def test_singleton(self, rng):
        s = random_set(rng, n=1)
        m = mean_reference(s)
        assert np.allclose(m.rgb, s.rgb[0])
        assert np.allclose(m.xyz, s.xyz[0])
        assert m.f == pytest.approx(float(s.f[0]))

    def test_two_sample_midpoint(self):
        a = sample_at(rgb=(0, 0, 0), xyz=(0, 0, 0), f=0)
        b = sample_at(rgb=(10, 20, 30), xyz=(2, 4, 6), f=8)
        s = SampleSet.from_samples([Sample(a.rgb, a.xyz, a.f), Sample(b.rgb, b.xyz, b.f)])
        m = mean_reference(s)
        assert np.allclose(m.rgb, [5, 10, 15])
        assert np.allclose(m.xyz, [1, 2, 3])
        assert m.f == pytest.approx(4.0)

    def test_matches_per_dimension_oracle(self, rng):
        s = random_set(rng, n=23)
        m = mean_reference(s)
        for c in range(3):
            assert m.rgb[c] == pytest.approx(sum(s.rgb[:, c]) / 23)
            assert m.xyz[c] == pytest.approx(sum(s.xyz[:, c]) / 23)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            mean_reference(SampleSet.empty())


class TestInpaint:
    def test_masked_zero_unmasked_peak(self):
        ref = sample_at()
        s = SampleSet.from_samples([sample_at(), sample_at()])
        w = w_inpaint(s, ref, Sigmas(rgb=55), masked=np.array([True, False]))
        assert w[0] == 0.0
        assert w[1] == pytest.approx(1.0)


class TestShutters:
    def test_box_whole_video_is_mean(self, rng):
        s = random_set(rng, n=20)
        shutter = BoxShutter(-1e9, 1e9)
        out = filter_set(s, w_shutter(s, shutter), np.zeros(3))
        assert np.allclose(out.color, s.rgb.mean(axis=0), atol=1e-9)

    def test_impulse_train_miss(self):
        shutter = ImpulseTrainShutter(instants=(10.0, 20.0))
        assert shutter.weights(np.array([15.0]))[0] == 0.0
        assert shutter.weights(np.array([10.4]))[0] == 1.0

    def test_decay_tail_closed_form(self):
        shutter = DecayTailShutter(t_peak=50.0, tau=10.0)
        assert shutter.weights(np.array([40.0]))[0] == pytest.approx(np.exp(-1.0))
        assert shutter.weights(np.array([50.0]))[0] == pytest.approx(1.0)
        assert shutter.weights(np.array([51.0]))[0] == 0.0


class TestAction:
    def test_nearest_in_window_is_one(self):
        s = SampleSet(
            rgb=np.zeros((3, 3)),
            xyz=np.array([[0, 0, 1.0], [0, 0, 2.0], [0, 0, 3.0]]),
            f=np.array([10.0, 10.0, 11.0]),
            src_frame=np.array([10, 10, 11]),
            src_px=np.zeros((3, 2), dtype=int),
        )
        shutter = ImpulseTrainShutter(instants=(10.0,))
        w = w_action(s, shutter, Sigmas(ord=10), cam_center=np.zeros(3))
        assert w[0] == pytest.approx(1.0)
        assert w[2] == 0.0  # outside the impulse

    def test_order_ten_with_sigma_ten(self):
        xyz = np.zeros((11, 3))
        xyz[:, 2] = np.arange(1, 12)
        s = SampleSet(
            rgb=np.zeros((11, 3)), xyz=xyz, f=np.zeros(11),
            src_frame=np.zeros(11, dtype=int), src_px=np.zeros((11, 2), dtype=int),
        )
        w = w_action(s, BoxShutter(-1, 1), Sigmas(ord=10), np.zeros(3))
        assert w[10] == pytest.approx(EXP_HALF)


class TestAperture:
    def _one(self, xyz, area):
        return SampleSet(
            rgb=np.zeros((1, 3)), xyz=np.asarray([xyz], float), f=np.zeros(1),
            src_frame=np.zeros(1, dtype=int), src_px=np.zeros((1, 2), dtype=int),
            area=np.array([area]),
        )

    def test_focal_point_on_ray(self):
        ap = ApertureSpec(a0=0.5, z0=4.0, slope=0.2)
        s = self._one([0, 0, 4.0], area=0.01)
        w = w_aperture(s, np.zeros(3), np.array([0, 0, 1.0]), ap)
        assert w[0] == pytest.approx(0.01 / (np.pi * 0.25))

    def test_outside_cone_zero(self):
        ap = ApertureSpec(a0=0.5, z0=4.0, slope=0.2)
        s = self._one([1.0, 0, 4.0], area=0.01)  # q = 1 >= a(4) = 0.5
        w = w_aperture(s, np.zeros(3), np.array([0, 0, 1.0]), ap)
        assert w[0] == 0.0

    def test_cone_linearity(self):
        ap = ApertureSpec(a0=0.5, z0=4.0, slope=0.2)
        for delta in (-1.0, 2.0):
            assert ap.radius_at(4.0 + delta) == pytest.approx(0.5 + abs(delta) * 0.2)

    def test_degenerate_pinhole_zero(self):
        ap = ApertureSpec(a0=0.0, z0=4.0, slope=0.0)
        s = self._one([0, 0, 4.0], area=0.01)
        w = w_aperture(s, np.zeros(3), np.array([0, 0, 1.0]), ap)
        assert w[0] == 0.0

    def test_behind_origin_zero(self):
        ap = ApertureSpec(a0=1.0, z0=4.0, slope=0.0)
        s = self._one([0, 0, -2.0], area=0.01)
        w = w_aperture(s, np.zeros(3), np.array([0, 0, 1.0]), ap)
        assert w[0] == 0.0


class TestWeightProperties:
    def test_all_weights_finite_nonnegative(self, rng):
        # Property sweep across every weighting function on random sets.
        for _ in range(50):
            n = int(rng.integers(1, 16))
            s = random_set(rng, n=n, with_area=True)
            ref = sample_at(rgb=rng.uniform(0, 255, 3), xyz=rng.normal(size=3),
                            f=float(rng.integers(0, 30)))
            sig = Sigmas(rgb=40, xyz=10, f=6, area=0.02, ord=10)
            sharp = {i: float(rng.uniform(0, 1)) for i in range(30)}
            shutter = BoxShutter(5, 25)
            ap = ApertureSpec(a0=0.5, z0=3.0, slope=0.1)
            masked = rng.random(n) > 0.5
            for w in (
                w_denoise(s, ref, sig),
                w_deblur(s, ref, sig, sharp),
                w_superres(s, ref, sig),
                w_inpaint(s, ref, sig, masked),
                w_shutter(s, shutter),
                w_action(s, shutter, sig, rng.normal(size=3)),
                w_aperture(s, rng.normal(size=3),
                           np.array([0, 0, 1.0]), ap),
            ):
                assert np.all(np.isfinite(w))
                assert np.all(w >= 0)
