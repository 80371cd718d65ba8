"""Contrast generator, shot noise statistics, camera timing."""

import math

import numpy as np
import pytest

from nvscope import acquisition as acq
from nvscope import fieldcore as fc
from nvscope import nearfield as nf

NO_DECAY = acq.DecayParams(tau_fast_ns=math.inf, tau_slow_ns=math.inf,
                           weight_fast=0.5)


def uniform_bmap(b, nx=10, ny=8, pitch=4e-6):
    grid = nf.GridSpec(origin=np.zeros(3),
                       axes=(np.array([1.0, 0, 0]), np.array([0, 1.0, 0])),
                       nx=nx, ny=ny, pitch=pitch)
    return nf.PolarizedFieldMap(grid=grid, component="sigma-",
                                values=np.full((nx, ny), float(b)))


def field_for_half_period(dt_ns):
    """b such that Omega * dt = pi."""
    return 1.0 / (2.0 * fc.GAMMA_NV * dt_ns * 1e-9)


class TestContrastAt:
    def test_zero_field(self):
        dts = np.linspace(0, 2000, 40)
        c = acq.contrast_at(0.0, dts, acq.DecayParams(), c0=0.05)
        np.testing.assert_array_equal(c, 0.0)

    def test_half_period_full_transfer(self):
        dt = 100.0
        b = field_for_half_period(dt)
        c = acq.contrast_at(b, dt, NO_DECAY, c0=0.05)
        assert c == pytest.approx(0.05, rel=1e-12)

    def test_full_period_returns_bright(self):
        dt = 100.0
        b = 2.0 * field_for_half_period(dt)
        c = acq.contrast_at(b, dt, NO_DECAY, c0=0.05)
        assert c == pytest.approx(0.0, abs=1e-15)

    def test_bounded_by_c0(self):
        rng = np.random.default_rng(41)
        b = rng.uniform(0, 1e-3, 500)
        dt = rng.uniform(0, 3000, 500)
        c = acq.contrast_at(b, dt, acq.DecayParams(), c0=0.05)
        assert np.all(c >= 0) and np.all(c <= 0.05)

    def test_periodic_up_to_envelope(self):
        b = 2e-4
        omega = acq.rabi_omega(b)
        period = 2 * math.pi / omega
        decay = acq.DecayParams()
        dts = np.linspace(0, 4 * period, 64)
        c1 = acq.contrast_at(b, dts, decay, c0=0.05) / decay.envelope(dts)
        c2 = acq.contrast_at(b, dts + period, decay, c0=0.05) \
            / decay.envelope(dts + period)
        np.testing.assert_allclose(c2, c1, rtol=1e-9, atol=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            acq.contrast_at(-1e-4, 100.0, NO_DECAY, c0=0.05)
        with pytest.raises(ValueError):
            acq.contrast_at(1e-4, -5.0, NO_DECAY, c0=0.05)


class TestShotNoise:
    def test_noiseless_zero_field(self):
        bmap = uniform_bmap(0.0)
        img = acq.simulate_contrast_image(bmap, 100.0, acq.PulseParams(),
                                          acq.DecayParams())
        np.testing.assert_array_equal(img, 0.0)

    def test_uniform_half_period(self):
        dt = 100.0
        bmap = uniform_bmap(field_for_half_period(dt))
        img = acq.simulate_contrast_image(bmap, dt, acq.PulseParams(),
                                          NO_DECAY)
        np.testing.assert_allclose(img, 0.05, rtol=1e-12)

    def test_contrast_sigma_matches_poisson_propagation(self):
        # var(1 - D/R) ~ 2/counts_ref at zero contrast
        bmap = uniform_bmap(0.0, nx=120, ny=100)
        img = acq.simulate_contrast_image(bmap, 100.0, acq.PulseParams(),
                                          acq.DecayParams(), noise_seed=7)
        sigma = np.std(img)
        assert sigma == pytest.approx(math.sqrt(2) / 100.0, rel=0.10)

    def test_seeded_runs_identical(self):
        bmap = uniform_bmap(1e-4)
        a = acq.simulate_contrast_image(bmap, 300.0, acq.PulseParams(),
                                        acq.DecayParams(), noise_seed=5)
        b = acq.simulate_contrast_image(bmap, 300.0, acq.PulseParams(),
                                        acq.DecayParams(), noise_seed=5)
        np.testing.assert_array_equal(a, b)

    def test_frames_have_independent_streams(self):
        bmap = uniform_bmap(1e-4)
        a = acq.simulate_contrast_image(bmap, 300.0, acq.PulseParams(),
                                        acq.DecayParams(), noise_seed=5,
                                        frame_index=0)
        b = acq.simulate_contrast_image(bmap, 300.0, acq.PulseParams(),
                                        acq.DecayParams(), noise_seed=5,
                                        frame_index=1)
        assert not np.array_equal(a, b)

    def test_noise_averages_out(self):
        # mean of N frames approaches the ideal as 1/sqrt(N)
        bmap = uniform_bmap(2e-4, nx=40, ny=40)
        pulse = acq.PulseParams()
        decay = acq.DecayParams()
        ideal = acq.simulate_contrast_image(bmap, 250.0, pulse, decay)

        def rms_err(n):
            acc = np.zeros_like(ideal)
            for k in range(n):
                acc += acq.simulate_contrast_image(bmap, 250.0, pulse, decay,
                                                   noise_seed=11,
                                                   frame_index=k)
            return np.sqrt(np.mean((acc / n - ideal) ** 2))

        ratio = rms_err(4) / rms_err(64)
        assert ratio == pytest.approx(4.0, rel=0.20)


class TestSimulateCube:
    def test_zero_duration_frame(self):
        bmap = uniform_bmap(3e-4)
        cube = acq.simulate_cube(bmap, [0.0], acq.PulseParams(),
                                 acq.DecayParams())
        np.testing.assert_array_equal(cube.frames, 0.0)

    def test_uniform_field_uniform_traces(self):
        bmap = uniform_bmap(1.5e-4)
        dts = np.arange(100) * 20.0
        cube = acq.simulate_cube(bmap, dts, acq.PulseParams(),
                                 acq.DecayParams())
        assert cube.n_frames == 100
        ref = cube.trace(0, 0)
        for i in (0, 3, 9):
            for j in (0, 4, 7):
                np.testing.assert_array_equal(cube.trace(i, j), ref)

    def test_stronger_field_oscillates_faster(self):
        # spectral peak of the signal-line pixel sits above the gap pixel
        from nvscope import currents as cur
        spec = cur.CpwSpec(120e-6, 54e-6, 200e-6, 2e-3, 0.05)
        model = cur.build_cpw(spec, n_filaments=16)
        grid = nf.GridSpec(origin=np.array([-160e-6, -20e-6, 0.0]),
                           axes=(np.array([1.0, 0, 0]), np.array([0, 1.0, 0])),
                           nx=16, ny=2, pitch=20e-6)
        fmap = nf.evaluate_phasor_map(model, grid,
                                      fc.SensingLayer(h=12e-6, d=0.0))
        frame = fc.nv_frame_from_tilt(29.5, "xz")
        bmap = nf.project_polarization(fmap, frame, "sigma-")
        dts = np.arange(1, 101) * 20.0
        cube = acq.simulate_cube(bmap, dts, acq.PulseParams(),
                                 acq.DecayParams())

        def peak_bin(i, j):
            y = cube.trace(i, j) - np.mean(cube.trace(i, j))
            return np.argmax(np.abs(np.fft.rfft(y, 8 * len(y))[1:]))

        i_signal = 8   # over the strip center
        i_gap = 4      # over the left gap
        assert bmap.values[i_signal, 0] > bmap.values[i_gap, 0]
        assert peak_bin(i_signal, 0) > peak_bin(i_gap, 0)

    def test_cube_determinism(self):
        bmap = uniform_bmap(1e-4)
        dts = np.arange(1, 30) * 50.0
        a = acq.simulate_cube(bmap, dts, acq.PulseParams(), acq.DecayParams(),
                              seed=77)
        b = acq.simulate_cube(bmap, dts, acq.PulseParams(), acq.DecayParams(),
                              seed=77)
        np.testing.assert_array_equal(a.frames, b.frames)

    def test_cube_validation(self):
        bmap = uniform_bmap(1e-4)
        with pytest.raises(ValueError, match="strictly increasing"):
            acq.ImageCube(grid=bmap.grid, dt_ns=[10.0, 10.0],
                          frames=np.zeros((2, 10, 8)))
        with pytest.raises(ValueError, match="shape"):
            acq.ImageCube(grid=bmap.grid, dt_ns=[10.0],
                          frames=np.zeros((1, 3, 3)))


class TestFrameTime:
    def timing(self):
        return acq.CameraTiming(row_time_us=10.0, overhead_us=200.0)

    def pulse(self):
        return acq.PulseParams(laser_ns=700.0, wait_ns=500.0, n_shots=50)

    def test_reference_points(self):
        # 200 rows -> 2.2 ms, 50 rows -> 0.7 ms at 50 shots of 1230 ns
        t = self.timing()
        p = self.pulse()
        assert acq.frame_time_ms(t, 200, p, 30.0) == pytest.approx(2.2, rel=1e-12)
        assert acq.frame_time_ms(t, 50, p, 30.0) == pytest.approx(0.7, rel=1e-12)

    def test_exposure_limited_branch(self):
        t = self.timing()
        p = acq.PulseParams(laser_ns=700.0, wait_ns=500.0, n_shots=100000)
        expect = (100000 * 1230.0 * 1e-3 + 200.0) * 1e-3
        assert acq.frame_time_ms(t, 1, p, 30.0) == pytest.approx(expect, rel=1e-12)

    def test_monotonicity(self):
        t = self.timing()
        p = self.pulse()
        base = acq.frame_time_ms(t, 100, p, 30.0)
        assert acq.frame_time_ms(t, 150, p, 30.0) >= base
        assert acq.frame_time_ms(t, 100, p, 5000.0) >= base
        bigger = acq.PulseParams(laser_ns=700.0, wait_ns=500.0, n_shots=500)
        assert acq.frame_time_ms(t, 100, bigger, 30.0) >= base

    def test_two_point_calibration(self):
        timing = acq.camera_timing_from_points((200, 2.2), (50, 0.7),
                                               self.pulse(), 30.0)
        assert timing.row_time_us == pytest.approx(10.0, rel=1e-9)
        assert timing.overhead_us == pytest.approx(200.0, rel=1e-9)

    def test_calibration_rejects_exposure_limited(self):
        p = acq.PulseParams(laser_ns=700.0, wait_ns=500.0, n_shots=5000)
        with pytest.raises(ValueError, match="exposure-limited"):
            acq.camera_timing_from_points((200, 2.2), (50, 0.7), p, 30.0)


class TestSimulateStream:
    def setup(self):
        self.timing = acq.CameraTiming()
        self.pulse = acq.PulseParams(laser_ns=700.0, wait_ns=500.0, n_shots=50)
        self.bmap = uniform_bmap(field_for_half_period(30.0))

    def test_all_off(self):
        self.setup()
        frames = acq.simulate_stream(self.bmap, 30.0, self.pulse,
                                     [(5.0, "off")], self.timing, rows=200)
        assert len(frames) > 0
        for _, img in frames:
            np.testing.assert_array_equal(img, 0.0)

    def test_5ms_cycle_resolved_at_2p2ms(self):
        self.setup()
        schedule = [(5.0, "on"), (5.0, "off"), (5.0, "on"), (5.0, "off")]
        frames = acq.simulate_stream(self.bmap, 30.0, self.pulse, schedule,
                                     self.timing, rows=200)
        # classify each frame, count frames per half-cycle
        for h in range(4):
            lo, hi = 5.0 * h, 5.0 * (h + 1)
            inside = [img for ts, img in frames if lo <= ts < hi]
            assert len(inside) >= 2
            want_on = h % 2 == 0
            for img in inside[:2]:
                assert (np.max(img) > 0.04) == want_on

    def test_0p5ms_pulse_in_at_most_one_frame_at_0p7ms(self):
        self.setup()
        schedule = [(3.3, "off"), (0.5, "on"), (3.2, "off")]
        frames = acq.simulate_stream(self.bmap, 30.0, self.pulse, schedule,
                                     self.timing, rows=50)
        on_frames = [ts for ts, img in frames if np.max(img) > 0.04]
        assert len(on_frames) <= 1

    def test_timestamps_are_frame_starts(self):
        self.setup()
        frames = acq.simulate_stream(self.bmap, 30.0, self.pulse,
                                     [(3.0, "on")], self.timing, rows=200)
        period = acq.frame_time_ms(self.timing, 200, self.pulse, 30.0)
        for k, (ts, _) in enumerate(frames):
            assert ts == pytest.approx(k * period, rel=1e-12)

    def test_stream_determinism(self):
        self.setup()
        a = acq.simulate_stream(self.bmap, 30.0, self.pulse, [(2.0, "on")],
                                self.timing, rows=200, seed=3)
        b = acq.simulate_stream(self.bmap, 30.0, self.pulse, [(2.0, "on")],
                                self.timing, rows=200, seed=3)
        for (ta, fa), (tb, fb) in zip(a, b):
            assert ta == tb
            np.testing.assert_array_equal(fa, fb)
