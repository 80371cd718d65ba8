"""Synthetic widefield acquisition: Rabi contrast, shot noise, timing.

Each camera exposure accumulates n_shots repetitions of
laser pulse / wait / microwave pulse; the recorded quantity per pixel is
the contrast C = 1 - N_data/N_ref between exposures with and without
the microwave pulse. The noiseless generator is the resonant two-level
population transfer c0 * env(dt) * sin^2(Omega dt / 2), with a
double-exponential coherence envelope.

Randomness uses the counter-based Philox generator keyed by
(seed, frame index) with a fixed draw order inside each frame
(N_ref first, then N_data), so cubes are bit-reproducible no matter
how frames are scheduled or parallelized.
"""

import math
from dataclasses import dataclass

import numpy as np

from nvscope.fieldcore import GAMMA_NV


@dataclass
class PulseParams:
    """Per-exposure pulse train and photon budget."""

    laser_ns: float = 700.0
    wait_ns: float = 1500.0
    n_shots: int = 100
    c0: float = 0.05
    counts_ref: float = 1e4

    def __post_init__(self):
        if self.laser_ns < 0 or self.wait_ns < 0:
            raise ValueError("pulse durations must be non-negative")
        if self.n_shots < 1:
            raise ValueError("n_shots must be >= 1")
        if not 0 < self.c0 <= 1:
            raise ValueError("c0 must be in (0, 1]")
        if self.counts_ref <= 0:
            raise ValueError("counts_ref must be positive")

    def exposure_ns(self, dt_mw_ns):
        return self.n_shots * (self.laser_ns + self.wait_ns + dt_mw_ns)


@dataclass
class DecayParams:
    """Double-exponential Rabi envelope; taus in ns (inf allowed)."""

    tau_fast_ns: float = 300.0
    tau_slow_ns: float = 3000.0
    weight_fast: float = 0.5

    def __post_init__(self):
        if not (self.tau_fast_ns > 0 and self.tau_slow_ns > 0):
            raise ValueError("decay times must be positive")
        if self.tau_fast_ns > self.tau_slow_ns:
            raise ValueError("tau_fast must not exceed tau_slow")
        if not 0 <= self.weight_fast <= 1:
            raise ValueError("weight_fast must be in [0, 1]")

    def envelope(self, dt_ns):
        dt_ns = np.asarray(dt_ns, dtype=float)
        w = self.weight_fast
        return w * np.exp(-dt_ns / self.tau_fast_ns) \
            + (1.0 - w) * np.exp(-dt_ns / self.tau_slow_ns)


def rabi_omega(b_polarized, gamma_nv=GAMMA_NV):
    """Angular Rabi frequency in rad/ns for a field amplitude in teslas."""
    return 2.0 * math.pi * gamma_nv * 1e-9 * np.asarray(b_polarized, dtype=float)


def contrast_at(b_polarized, dt_mw_ns, decay, c0, gamma_nv=GAMMA_NV):
    """Noiseless contrast for field b (T) after a dt_mw pulse (ns).

    Broadcasts over b and dt.
    """
    b = np.asarray(b_polarized, dtype=float)
    dt = np.asarray(dt_mw_ns, dtype=float)
    if np.any(b < 0):
        raise ValueError("field amplitudes must be non-negative")
    if np.any(dt < 0):
        raise ValueError("pulse durations must be non-negative")
    omega = rabi_omega(b, gamma_nv)
    return c0 * decay.envelope(dt) * np.sin(omega * dt / 2.0) ** 2


def _frame_rng(seed, frame_index):
    key = np.array([int(seed) % 2 ** 64, int(frame_index) % 2 ** 64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _apply_shot_noise(ideal, counts_ref, rng):
    # fixed draw order: reference exposure first, then data exposure
    n_ref = rng.poisson(counts_ref, size=ideal.shape)
    n_data = rng.poisson(counts_ref * (1.0 - ideal), size=ideal.shape)
    n_ref = np.maximum(n_ref, 1)  # a dead reference pixel still divides
    return 1.0 - n_data / n_ref


def simulate_contrast_image(bmap, dt_mw_ns, pulse, decay, noise_seed=None,
                            frame_index=0, gamma_nv=GAMMA_NV):
    """One contrast frame for a polarized field map.

    noise_seed None returns the ideal (noiseless) contrast; otherwise
    Poisson photon noise is applied with the (seed, frame_index) stream.
    """
    ideal = contrast_at(bmap.values, dt_mw_ns, decay, pulse.c0, gamma_nv)
    if noise_seed is None:
        return ideal
    rng = _frame_rng(noise_seed, frame_index)
    return _apply_shot_noise(ideal, pulse.counts_ref, rng)


@dataclass
class ImageCube:
    """Contrast frames over a scan of microwave pulse durations."""

    grid: object
    dt_ns: np.ndarray
    frames: np.ndarray
    pulse: PulseParams = None
    seed: int = None

    def __post_init__(self):
        self.dt_ns = np.asarray(self.dt_ns, dtype=float)
        self.frames = np.asarray(self.frames, dtype=float)
        if self.dt_ns.ndim != 1 or len(self.dt_ns) == 0:
            raise ValueError("dt_ns must be a non-empty 1D array")
        if np.any(self.dt_ns < 0) or np.any(np.diff(self.dt_ns) <= 0):
            raise ValueError("dt_ns must be non-negative and strictly increasing")
        expected = (len(self.dt_ns), self.grid.nx, self.grid.ny)
        if self.frames.shape != expected:
            raise ValueError(
                f"frames shape {self.frames.shape} does not match {expected}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("cube contains non-finite contrast values")
        if np.any(self.frames > 1.0):
            raise ValueError("contrast cannot exceed 1")

    @property
    def n_frames(self):
        return len(self.dt_ns)

    def trace(self, i, j):
        return self.frames[:, i, j]


def simulate_cube(bmap, dt_list_ns, pulse, decay, seed=None,
                  gamma_nv=GAMMA_NV):
    """Scan dt_mw and stack contrast frames; independent noise per frame."""
    dt_list_ns = np.asarray(dt_list_ns, dtype=float)
    frames = np.empty((len(dt_list_ns), bmap.grid.nx, bmap.grid.ny))
    for k, dt in enumerate(dt_list_ns):
        frames[k] = simulate_contrast_image(bmap, dt, pulse, decay,
                                            noise_seed=seed, frame_index=k,
                                            gamma_nv=gamma_nv)
    return ImageCube(grid=bmap.grid, dt_ns=dt_list_ns, frames=frames,
                     pulse=pulse, seed=seed)


@dataclass
class CameraTiming:
    """Rolling readout budget: frame time = max(readout, exposure) + overhead."""

    row_time_us: float = 10.0
    overhead_us: float = 200.0

    def __post_init__(self):
        if self.row_time_us <= 0:
            raise ValueError("row_time_us must be positive")
        if self.overhead_us < 0:
            raise ValueError("overhead_us must be non-negative")


def frame_time_ms(timing, rows, pulse, dt_mw_ns):
    """Time per frame in ms for a given readout height and pulse train."""
    if rows < 1:
        raise ValueError("rows must be >= 1")
    readout_us = rows * timing.row_time_us
    exposure_us = pulse.exposure_ns(dt_mw_ns) * 1e-3
    return (max(readout_us, exposure_us) + timing.overhead_us) * 1e-3


def camera_timing_from_points(point_a, point_b, pulse, dt_mw_ns):
    """Calibrate (row_time, overhead) from two (rows, frame_ms) pairs.

    Both points must be readout-limited, i.e. exposure below readout,
    or the linear model does not apply.
    """
    (rows_a, ms_a), (rows_b, ms_b) = point_a, point_b
    if rows_a == rows_b:
        raise ValueError("calibration points need distinct row counts")
    row_time_us = (ms_a - ms_b) * 1e3 / (rows_a - rows_b)
    overhead_us = ms_a * 1e3 - rows_a * row_time_us
    timing = CameraTiming(row_time_us=row_time_us, overhead_us=overhead_us)
    exposure_us = pulse.exposure_ns(dt_mw_ns) * 1e-3
    for rows in (rows_a, rows_b):
        if exposure_us > rows * timing.row_time_us:
            raise ValueError(
                f"calibration point at {rows} rows is exposure-limited; "
                "the readout-linear model does not apply")
    return timing


ON = "on"
OFF = "off"


def simulate_stream(bmap, dt_mw_ns, pulse, on_off_schedule, timing, rows,
                    seed=None, decay=None, gamma_nv=GAMMA_NV):
    """Frames of a microwave on/off pulse train at the camera frame rate.

    on_off_schedule is a list of (duration_ms, "on"|"off") entries. The
    microwave state of each frame is the schedule state at the exposure
    midpoint; "off" frames have zero ideal contrast. Returns a list of
    (timestamp_ms, contrast array) with timestamps at frame starts.
    """
    if decay is None:
        decay = DecayParams()
    durations = []
    states = []
    for duration, state in on_off_schedule:
        if duration <= 0:
            raise ValueError("schedule durations must be positive")
        if state not in (ON, OFF):
            raise ValueError(f"schedule state must be '{ON}' or '{OFF}'")
        durations.append(float(duration))
        states.append(state)
    edges = np.cumsum(durations)
    total_ms = edges[-1]
    period_ms = frame_time_ms(timing, rows, pulse, dt_mw_ns)
    half_exposure_ms = pulse.exposure_ns(dt_mw_ns) * 1e-6 / 2.0
    ideal_on = contrast_at(bmap.values, dt_mw_ns, decay, pulse.c0, gamma_nv)
    zeros = np.zeros_like(ideal_on)

    frames = []
    k = 0
    while k * period_ms < total_ms:
        start = k * period_ms
        midpoint = start + half_exposure_ms
        if midpoint >= total_ms:
            state = OFF
        else:
            state = states[int(np.searchsorted(edges, midpoint, side="right"))]
        ideal = ideal_on if state == ON else zeros
        if seed is None:
            frame = ideal.copy()
        else:
            frame = _apply_shot_noise(ideal, pulse.counts_ref,
                                      _frame_rng(seed, k))
        frames.append((start, frame))
        k += 1
    return frames
