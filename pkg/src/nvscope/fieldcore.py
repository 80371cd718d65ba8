"""Coordinate frames, NV-axis geometry and polarization bookkeeping.

Conventions used throughout the package:

* positions in meters, magnetic fields in teslas, frequencies in Hz,
  pulse durations in nanoseconds;
* a microwave field is a complex phasor ``B(r)``, the physical field
  being ``Re[B exp(-i w t)]``;
* the circular components about an NV axis with transverse frame
  (e1, e2) are ``b_plus = |u - i v| / 2`` and ``b_minus = |u + i v| / 2``
  where ``u = b . e1`` and ``v = b . e2``. A linear transverse field of
  amplitude beta splits as beta/2 + beta/2, and reversing the axis
  swaps the two components.
"""

import math
from dataclasses import dataclass, field

import numpy as np

# mu0 kept at its defined (pre-2019) value so closed-form wire fields
# round-trip exactly in tests.
MU0 = 4.0e-7 * math.pi

# NV gyromagnetic ratio, 28 kHz/uT in SI (Hz per tesla).
GAMMA_NV = 2.8e10

# Ground-state zero-field splitting (Hz).
D_ZFS = 2.87e9

ORTHO_TOL = 1e-12


def vec3(x, y, z):
    """Return a (3,) float array, checking all components are finite."""
    v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector components must be finite")
    return v


def _as_vec3(v, name="vector"):
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} components must be finite")
    return a


@dataclass
class NvFrame:
    """Right-handed orthonormal frame attached to the NV symmetry axis.

    axis is the NV direction; (e1, e2) span the transverse plane with
    e1 x e2 = axis.
    """

    axis: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def __post_init__(self):
        self.axis = _as_vec3(self.axis, "axis")
        self.e1 = _as_vec3(self.e1, "e1")
        self.e2 = _as_vec3(self.e2, "e2")
        for name, v in (("axis", self.axis), ("e1", self.e1), ("e2", self.e2)):
            if abs(np.dot(v, v) - 1.0) > ORTHO_TOL:
                raise ValueError(f"{name} is not unit length")
        if (abs(np.dot(self.axis, self.e1)) > ORTHO_TOL
                or abs(np.dot(self.axis, self.e2)) > ORTHO_TOL
                or abs(np.dot(self.e1, self.e2)) > ORTHO_TOL):
            raise ValueError("frame vectors are not mutually orthogonal")
        if np.max(np.abs(np.cross(self.e1, self.e2) - self.axis)) > ORTHO_TOL:
            raise ValueError("frame is not right-handed (e1 x e2 != axis)")
        for v in (self.axis, self.e1, self.e2):
            v.setflags(write=False)


_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


def nv_frame_from_tilt(tilt_deg, tilt_plane="xz"):
    """Frame whose axis is tilted from +z toward a lab axis.

    tilt_plane is a two-letter tag naming the plane containing the axis;
    it must contain z (e.g. "xz" tilts the axis from z toward x). e1 is
    chosen in the tilt plane, e2 along the remaining lab axis, so that
    (e1, e2, axis) is right-handed.
    """
    if not 0.0 <= tilt_deg <= 90.0:
        raise ValueError(f"tilt angle must be in [0, 90] degrees, got {tilt_deg}")
    plane = tilt_plane.lower()
    if len(plane) != 2 or plane[0] not in _AXIS_INDEX or plane[1] not in _AXIS_INDEX:
        raise ValueError(f"tilt_plane must name two lab axes, got {tilt_plane!r}")
    if plane[0] == plane[1]:
        raise ValueError("tilt_plane must name two distinct axes")
    if "z" not in plane:
        raise ValueError("tilt_plane must contain the z axis")
    toward = plane[0] if plane[1] == "z" else plane[1]
    i = _AXIS_INDEX[toward]

    t = math.radians(tilt_deg)
    axis = np.zeros(3)
    axis[i] = math.sin(t)
    axis[2] = math.cos(t)
    # e1 in the tilt plane, perpendicular to axis, tipping away from z
    e1 = np.zeros(3)
    e1[i] = math.cos(t)
    e1[2] = -math.sin(t)
    e2 = np.cross(axis, e1)
    return NvFrame(axis=axis, e1=e1, e2=e2)


def flip_axis(frame):
    """Frame with the NV axis reversed (e2 negated to stay right-handed).

    Under the flipped frame decompose_polarization swaps b_plus and
    b_minus for every input; applying it twice restores the original.
    """
    return NvFrame(axis=-frame.axis, e1=frame.e1.copy(), e2=-frame.e2)


def decompose_polarization(b, frame):
    """Split a complex field phasor into axial and circular parts.

    b is a complex (3,) phasor in teslas. Returns (b_par, b_plus,
    b_minus): the axial magnitude and the two rotating transverse
    amplitudes about the frame axis.
    """
    b = np.asarray(b, dtype=complex)
    if b.shape != (3,):
        raise ValueError(f"phasor must have shape (3,), got {b.shape}")
    u = b @ frame.e1
    v = b @ frame.e2
    b_par = abs(b @ frame.axis)
    b_plus = abs(u - 1j * v) / 2.0
    b_minus = abs(u + 1j * v) / 2.0
    return b_par, b_plus, b_minus


SIGMA_PLUS = "sigma+"
SIGMA_MINUS = "sigma-"
AXIAL = "axial"

TRANSITIONS = (SIGMA_PLUS, SIGMA_MINUS)
COMPONENTS = (SIGMA_PLUS, SIGMA_MINUS, AXIAL)


@dataclass
class BiasConfig:
    """Static-field bookkeeping for tuning the ground-state transitions.

    sign records the direction of the applied dc field along the NV
    axis (+1 or -1), i.e. which circular transition is being tuned.
    """

    d_zfs: float = D_ZFS
    gamma_nv: float = GAMMA_NV
    sign: int = 1

    def __post_init__(self):
        if self.d_zfs <= 0:
            raise ValueError("d_zfs must be positive")
        if self.gamma_nv <= 0:
            raise ValueError("gamma_nv must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")


def bias_field_for_frequency(f_mw, transition, cfg=None):
    """Static field magnitude (T) tuning the chosen transition to f_mw.

    Solves f_mw = d_zfs + gamma * B for sigma+ and
    f_mw = d_zfs - gamma * B for sigma-, requiring B >= 0. Asking for a
    frequency on the wrong side of d_zfs raises with the transition
    that can reach it.
    """
    if cfg is None:
        cfg = BiasConfig()
    if f_mw <= 0:
        raise ValueError("drive frequency must be positive")
    if transition not in TRANSITIONS:
        raise ValueError(f"transition must be one of {TRANSITIONS}, got {transition!r}")
    detuning = f_mw - cfg.d_zfs
    if transition == SIGMA_PLUS:
        b = detuning / cfg.gamma_nv
        other = SIGMA_MINUS
    else:
        b = -detuning / cfg.gamma_nv
        other = SIGMA_PLUS
    if b < 0:
        raise ValueError(
            f"{transition} cannot reach {f_mw:.6g} Hz with a non-negative "
            f"bias field; use {other}")
    return b


@dataclass
class SensingLayer:
    """NV-doped slab at mean height h with thickness d above the device.

    Fields are averaged over n_samples midpoint-quadrature heights
    across the slab.
    """

    h: float
    d: float = 0.0
    n_samples: int = 15

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("layer thickness must be non-negative")
        if self.h - self.d / 2.0 < 0:
            raise ValueError("layer must not extend below the device plane")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def heights(self):
        """Quadrature heights, ascending. A zero-thickness layer has one."""
        if self.d == 0.0:
            return np.array([self.h])
        k = np.arange(self.n_samples)
        return self.h - self.d / 2.0 + (k + 0.5) * (self.d / self.n_samples)


def layer_average(f, layer, x, y):
    """Mean of f(x, y, z) over the layer thickness at fixed (x, y).

    f is any callable of three scalars; midpoint quadrature over
    layer.heights() in ascending order. Exact for zero thickness.
    """
    zs = layer.heights()
    total = 0.0
    for z in zs:
        total += f(x, y, z)
    return total / len(zs)
