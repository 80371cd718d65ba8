"""Frame construction, polarization decomposition and layer averaging."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvscope import fieldcore as fc


def random_phasor(rng, scale=1.0):
    re = rng.normal(size=3)
    im = rng.normal(size=3)
    return (re + 1j * im) * scale


def brute_circular(b, frame):
    """Independent evaluation of the circular amplitudes.

    Projects the phasor on the complex circular basis vectors
    (e1 -+ i e2)/sqrt(2) and rescales; no shared code with the package
    implementation beyond the frame itself.
    """
    u = complex(np.dot(b, frame.e1))
    v = complex(np.dot(b, frame.e2))
    return abs(u - 1j * v) / 2.0, abs(u + 1j * v) / 2.0


class TestNvFrame:
    def test_zero_tilt_is_vertical(self):
        f = fc.nv_frame_from_tilt(0.0, "xz")
        np.testing.assert_allclose(f.axis, [0, 0, 1], atol=1e-15)

    def test_quarter_turn(self):
        f = fc.nv_frame_from_tilt(90.0, "xz")
        np.testing.assert_allclose(f.axis, [1, 0, 0], atol=1e-15)

    def test_tilt_29p5_xz(self):
        # sin/cos of 29.5 degrees evaluated independently
        f = fc.nv_frame_from_tilt(29.5, "xz")
        np.testing.assert_allclose(
            f.axis, [0.49242356010346716, 0.0, 0.8703556959398997], rtol=1e-12)

    def test_frame_orthonormal_right_handed(self):
        for deg in (0.0, 12.5, 29.5, 45.0, 90.0):
            for plane in ("xz", "zx", "yz", "zy"):
                f = fc.nv_frame_from_tilt(deg, plane)
                for v in (f.axis, f.e1, f.e2):
                    assert abs(np.dot(v, v) - 1) < 1e-12
                assert abs(np.dot(f.axis, f.e1)) < 1e-12
                assert abs(np.dot(f.axis, f.e2)) < 1e-12
                assert abs(np.dot(f.e1, f.e2)) < 1e-12
                np.testing.assert_allclose(np.cross(f.e1, f.e2), f.axis,
                                           atol=1e-12)

    def test_tilt_out_of_range(self):
        with pytest.raises(ValueError):
            fc.nv_frame_from_tilt(-5.0, "xz")
        with pytest.raises(ValueError):
            fc.nv_frame_from_tilt(95.0, "xz")

    def test_bad_plane(self):
        with pytest.raises(ValueError):
            fc.nv_frame_from_tilt(10.0, "xx")
        with pytest.raises(ValueError):
            fc.nv_frame_from_tilt(10.0, "xy")
        with pytest.raises(ValueError):
            fc.nv_frame_from_tilt(10.0, "q")

    def test_invalid_frame_rejected(self):
        with pytest.raises(ValueError):
            fc.NvFrame(axis=[0, 0, 2.0], e1=[1, 0, 0], e2=[0, 1, 0])
        with pytest.raises(ValueError):
            # left-handed
            fc.NvFrame(axis=[0, 0, 1.0], e1=[0, 1, 0], e2=[1, 0, 0])


class TestDecomposePolarization:
    def setup_method(self):
        self.frame = fc.nv_frame_from_tilt(29.5, "xz")

    def test_linear_transverse_splits_equally(self):
        beta = 3.2e-4
        b = beta * self.frame.e1.astype(complex)
        b_par, b_plus, b_minus = fc.decompose_polarization(b, self.frame)
        assert b_par == pytest.approx(0.0, abs=1e-18)
        assert b_plus == pytest.approx(beta / 2, rel=1e-12)
        assert b_minus == pytest.approx(beta / 2, rel=1e-12)

    def test_circular_is_single_component(self):
        beta = 1.7e-4
        b = beta * (self.frame.e1 + 1j * self.frame.e2)
        _, b_plus, b_minus = fc.decompose_polarization(b, self.frame)
        assert b_plus == pytest.approx(beta, rel=1e-12)
        assert b_minus == pytest.approx(0.0, abs=1e-16)

    def test_axial_drives_nothing(self):
        beta = 5e-4
        b = beta * self.frame.axis.astype(complex)
        b_par, b_plus, b_minus = fc.decompose_polarization(b, self.frame)
        assert b_par == pytest.approx(beta, rel=1e-12)
        assert b_plus == pytest.approx(0.0, abs=1e-16)
        assert b_minus == pytest.approx(0.0, abs=1e-16)

    def test_completeness(self):
        # |b.axis|^2 + |u|^2 + |v|^2 == |b|^2 for random phasors
        rng = np.random.default_rng(11)
        for _ in range(300):
            b = random_phasor(rng, 1e-4)
            u = b @ self.frame.e1
            v = b @ self.frame.e2
            w = b @ self.frame.axis
            total = abs(u) ** 2 + abs(v) ** 2 + abs(w) ** 2
            assert total == pytest.approx(np.sum(np.abs(b) ** 2), rel=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(12)
        for _ in range(300):
            b = random_phasor(rng, 1e-4)
            _, b_plus, b_minus = fc.decompose_polarization(b, self.frame)
            ref_plus, ref_minus = brute_circular(b, self.frame)
            assert b_plus == pytest.approx(ref_plus, rel=1e-12, abs=1e-20)
            assert b_minus == pytest.approx(ref_minus, rel=1e-12, abs=1e-20)

    def test_component_sum_bounds_transverse(self):
        # b_plus + b_minus >= max(|u|, |v|); 2(b+^2 + b-^2) == |u|^2+|v|^2
        rng = np.random.default_rng(13)
        for _ in range(300):
            b = random_phasor(rng)
            u = b @ self.frame.e1
            v = b @ self.frame.e2
            _, b_plus, b_minus = fc.decompose_polarization(b, self.frame)
            assert b_plus + b_minus >= max(abs(u), abs(v)) * (1 - 1e-12)
            assert 2 * (b_plus ** 2 + b_minus ** 2) == pytest.approx(
                abs(u) ** 2 + abs(v) ** 2, rel=1e-12)

    def test_rotation_invariance(self):
        # rotating (e1, e2) about the axis leaves |u -+ iv| unchanged
        rng = np.random.default_rng(14)
        for _ in range(100):
            b = random_phasor(rng)
            ang = rng.uniform(0, 2 * math.pi)
            c, s = math.cos(ang), math.sin(ang)
            e1r = c * self.frame.e1 + s * self.frame.e2
            e2r = -s * self.frame.e1 + c * self.frame.e2
            rotated = fc.NvFrame(axis=self.frame.axis.copy(), e1=e1r, e2=e2r)
            _, p0, m0 = fc.decompose_polarization(b, self.frame)
            _, p1, m1 = fc.decompose_polarization(b, rotated)
            assert p1 == pytest.approx(p0, rel=1e-10, abs=1e-15)
            assert m1 == pytest.approx(m0, rel=1e-10, abs=1e-15)

    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_flip_swaps_components(self, seed):
        rng = np.random.default_rng(seed)
        b = random_phasor(rng)
        frame = fc.nv_frame_from_tilt(rng.uniform(0, 90), "xz")
        flipped = fc.flip_axis(frame)
        _, p0, m0 = fc.decompose_polarization(b, frame)
        _, p1, m1 = fc.decompose_polarization(b, flipped)
        assert p1 == m0 and m1 == p0

    def test_flip_is_involution(self):
        frame = fc.nv_frame_from_tilt(29.5, "xz")
        twice = fc.flip_axis(fc.flip_axis(frame))
        np.testing.assert_array_equal(twice.axis, frame.axis)
        np.testing.assert_array_equal(twice.e1, frame.e1)
        np.testing.assert_array_equal(twice.e2, frame.e2)


class TestBiasField:
    def test_zero_detuning(self):
        cfg = fc.BiasConfig()
        assert fc.bias_field_for_frequency(cfg.d_zfs, "sigma+", cfg) == 0.0
        assert fc.bias_field_for_frequency(cfg.d_zfs, "sigma-", cfg) == 0.0

    def test_sigma_minus_2p77_ghz(self):
        # (2.87 GHz - 2.77 GHz) / (28 kHz/uT) = 3571.43 uT
        b = fc.bias_field_for_frequency(2.77e9, "sigma-")
        assert b == pytest.approx(3.5714285714285714e-3, rel=1e-12)

    def test_sigma_plus_2p9674_ghz(self):
        # (2.9674 GHz - 2.87 GHz) / (28 kHz/uT) = 3478.57 uT
        b = fc.bias_field_for_frequency(2.9674e9, "sigma+")
        assert b == pytest.approx(3.4785714285714286e-3, rel=1e-10)

    def test_unreachable_names_other_transition(self):
        with pytest.raises(ValueError, match="sigma\\+"):
            fc.bias_field_for_frequency(2.9674e9, "sigma-")
        with pytest.raises(ValueError, match="sigma-"):
            fc.bias_field_for_frequency(2.77e9, "sigma+")

    def test_round_trip(self):
        cfg = fc.BiasConfig()
        for f in (2.7e9, 2.85e9, 2.87e9, 2.9e9, 2.9674e9):
            tr = "sigma+" if f >= cfg.d_zfs else "sigma-"
            b = fc.bias_field_for_frequency(f, tr, cfg)
            sign = 1.0 if tr == "sigma+" else -1.0
            assert cfg.d_zfs + sign * cfg.gamma_nv * b == pytest.approx(f, rel=1e-12)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            fc.BiasConfig(d_zfs=-1.0)
        with pytest.raises(ValueError):
            fc.BiasConfig(sign=0)


class TestLayerAverage:
    def test_zero_thickness(self):
        layer = fc.SensingLayer(h=12e-6, d=0.0)
        assert fc.layer_average(lambda x, y, z: z * 2.0, layer, 0, 0) == 24e-6

    def test_constant(self):
        layer = fc.SensingLayer(h=12e-6, d=14e-6, n_samples=7)
        assert fc.layer_average(lambda x, y, z: 3.5, layer, 1, 2) == pytest.approx(3.5)

    def test_linear_midpoint_symmetry(self):
        # f(z) = z over h = 12 um, d = 14 um averages to exactly h
        layer = fc.SensingLayer(h=12e-6, d=14e-6, n_samples=15)
        avg = fc.layer_average(lambda x, y, z: z, layer, 0, 0)
        assert avg == pytest.approx(12e-6, rel=1e-12)

    def test_heights_span_and_order(self):
        layer = fc.SensingLayer(h=12e-6, d=14e-6, n_samples=8)
        zs = layer.heights()
        assert len(zs) == 8
        assert np.all(np.diff(zs) > 0)
        assert zs[0] > 5e-6 and zs[-1] < 19e-6

    def test_convergence_order(self):
        # midpoint rule error is O(1/n^2) on smooth integrands
        layer_n = lambda n: fc.SensingLayer(h=12e-6, d=14e-6, n_samples=n)
        f = lambda x, y, z: (z * 1e6) ** 2
        exact = fc.layer_average(f, layer_n(20001), 0, 0)
        errs = [abs(fc.layer_average(f, layer_n(n), 0, 0) - exact)
                for n in (4, 8, 16, 32)]
        rates = [errs[i] / errs[i + 1] for i in range(3)]
        for r in rates:
            assert 2.0 < r < 8.0  # within a factor of 2 of the n^-2 rate

    def test_invalid_layers(self):
        with pytest.raises(ValueError):
            fc.SensingLayer(h=5e-6, d=14e-6)  # extends below device
        with pytest.raises(ValueError):
            fc.SensingLayer(h=12e-6, d=-1e-6)
        with pytest.raises(ValueError):
            fc.SensingLayer(h=12e-6, d=1e-6, n_samples=0)
