"""Microwave devices as discretized complex current distributions.

Devices are reduced to straight wire segments carrying phasor currents.
Strips become bundles of parallel filaments across the width, either
uniformly weighted or with the quasi-static edge-singular profile
1/sqrt(1 - (2x/w)^2); loops are chorded into short segments. These
filament models stand in for a full-wave current solve, which is out of
scope.

All dimensions are SI meters and all currents are complex amperes.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from nvscope.fieldcore import _as_vec3


def _as_current(value):
    """Accept a complex scalar or an [re, im] pair."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError("current pairs must be [re, im]")
        return complex(float(value[0]), float(value[1]))
    return complex(value)


@dataclass
class WireSegment:
    """Straight current-carrying segment with a phasor amplitude."""

    start: np.ndarray
    end: np.ndarray
    current: complex

    def __post_init__(self):
        self.start = _as_vec3(self.start, "start")
        self.end = _as_vec3(self.end, "end")
        self.current = _as_current(self.current)
        if np.array_equal(self.start, self.end):
            raise ValueError("segment endpoints must be distinct")
        if not np.isfinite(self.current.real) or not np.isfinite(self.current.imag):
            raise ValueError("segment current must be finite")


@dataclass
class CurrentModel:
    """Set of wire segments, stored as arrays for fast field evaluation.

    starts/ends are (n, 3) meters, currents (n,) complex amperes.
    Segment order is significant: field evaluation accumulates in array
    order, which keeps outputs bit-reproducible.
    """

    starts: np.ndarray
    ends: np.ndarray
    currents: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.starts = np.ascontiguousarray(self.starts, dtype=float)
        self.ends = np.ascontiguousarray(self.ends, dtype=float)
        self.currents = np.ascontiguousarray(self.currents, dtype=complex)
        if self.starts.ndim != 2 or self.starts.shape[1] != 3:
            raise ValueError("starts must have shape (n, 3)")
        if self.ends.shape != self.starts.shape:
            raise ValueError("ends must match starts in shape")
        if self.currents.shape != (self.starts.shape[0],):
            raise ValueError("currents must have shape (n,)")
        if not (np.all(np.isfinite(self.starts)) and np.all(np.isfinite(self.ends))
                and np.all(np.isfinite(self.currents))):
            raise ValueError("model contains non-finite values")
        if np.any(np.all(self.starts == self.ends, axis=1)):
            raise ValueError("model contains zero-length segments")

    @classmethod
    def from_segments(cls, segments, label=""):
        segments = list(segments)
        if not segments:
            raise ValueError("a current model needs at least one segment")
        starts = np.array([s.start for s in segments], dtype=float)
        ends = np.array([s.end for s in segments], dtype=float)
        currents = np.array([s.current for s in segments], dtype=complex)
        return cls(starts=starts, ends=ends, currents=currents, label=label)

    @property
    def n_segments(self):
        return self.starts.shape[0]

    @property
    def segments(self):
        return [WireSegment(self.starts[i].copy(), self.ends[i].copy(),
                            complex(self.currents[i]))
                for i in range(self.n_segments)]

    def scaled(self, factor):
        """Same geometry with all currents multiplied by factor."""
        return CurrentModel(self.starts.copy(), self.ends.copy(),
                            self.currents * factor, label=self.label)

    def translated(self, offset):
        offset = _as_vec3(offset, "offset")
        return CurrentModel(self.starts + offset, self.ends + offset,
                            self.currents.copy(), label=self.label)


def superpose(models, label=None):
    """Concatenate current models; the field of the result is the sum.

    Segment order is the concatenation order, so superpose([m]) carries
    m's segments unchanged.
    """
    models = list(models)
    if not models:
        raise ValueError("superpose needs at least one model")
    if label is None:
        label = "+".join(m.label for m in models if m.label)
    return CurrentModel(
        starts=np.concatenate([m.starts for m in models]),
        ends=np.concatenate([m.ends for m in models]),
        currents=np.concatenate([m.currents for m in models]),
        label=label)


UNIFORM = "uniform"
EDGE = "edge"
PROFILES = (UNIFORM, EDGE)


@dataclass
class StripConductor:
    """Flat strip along a polyline, to be split into parallel filaments.

    The strip lies in the plane perpendicular to `normal` (devices are
    planar; default z). profile "uniform" spreads the current evenly,
    "edge" applies the quasi-static 1/sqrt(1-(2x/w)^2) crowding.
    """

    centerline: np.ndarray
    width: float
    total_current: complex
    profile: str = UNIFORM
    n_filaments: int = 32
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        self.centerline = np.atleast_2d(np.asarray(self.centerline, dtype=float))
        if self.centerline.ndim != 2 or self.centerline.shape[1] != 3:
            raise ValueError("centerline must be a sequence of 3D points")
        if self.centerline.shape[0] < 2:
            raise ValueError("centerline needs at least two points")
        if np.any(np.all(np.diff(self.centerline, axis=0) == 0, axis=1)):
            raise ValueError("centerline has repeated consecutive points")
        if self.width <= 0:
            raise ValueError("strip width must be positive")
        if self.n_filaments < 1:
            raise ValueError("n_filaments must be >= 1")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        self.total_current = _as_current(self.total_current)
        self.normal = _as_vec3(self.normal, "normal")
        n = math.sqrt(float(np.dot(self.normal, self.normal)))
        if n == 0:
            raise ValueError("normal must be non-zero")
        self.normal = self.normal / n


def offset_polyline(points, offset, normal):
    """Shift a polyline sideways by a signed in-plane offset.

    The shift is along normal x tangent; interior vertices use miter
    joins. Doubling back (180 degree turns) has no finite miter and is
    rejected.
    """
    points = np.asarray(points, dtype=float)
    deltas = np.diff(points, axis=0)
    tangents = deltas / np.linalg.norm(deltas, axis=1)[:, None]
    lefts = np.cross(normal, tangents)
    lefts /= np.linalg.norm(lefts, axis=1)[:, None]
    out = np.empty_like(points)
    out[0] = points[0] + offset * lefts[0]
    out[-1] = points[-1] + offset * lefts[-1]
    for i in range(1, len(points) - 1):
        n_in, n_out = lefts[i - 1], lefts[i]
        denom = 1.0 + float(np.dot(n_in, n_out))
        if denom < 1e-9:
            raise ValueError(f"polyline doubles back at vertex {i}")
        out[i] = points[i] + offset * (n_in + n_out) / denom
    return out


def _filament_offsets(width, n):
    """Bin midpoints across the width, exactly symmetric about zero."""
    k = np.arange(n)
    mids = -width / 2.0 + (k + 0.5) * (width / n)
    return 0.5 * (mids - mids[::-1])


def _edge_bin_weights(n):
    """Fraction of an edge-crowded unit current in each of n equal bins.

    Integral of 1/(pi sqrt(1-s^2)) over bin k in s = 2x/w coordinates;
    closed form via arcsin. Weights sum to 1 by telescoping.
    """
    edges = -1.0 + 2.0 * np.arange(n + 1) / n
    edges = 0.5 * (edges - edges[::-1])  # force exact symmetry
    a = np.arcsin(edges)
    return (a[1:] - a[:-1]) / math.pi


def discretize_strip(s):
    """Replace a strip by n_filaments weighted parallel filaments.

    Filaments sit at the midpoints of equal-width transverse bins;
    per-bin current is the profile integrated over the bin, so the total
    current is preserved whatever the profile.
    """
    offsets = _filament_offsets(s.width, s.n_filaments)
    if s.profile == UNIFORM:
        weights = np.full(s.n_filaments, 1.0 / s.n_filaments)
    else:
        weights = _edge_bin_weights(s.n_filaments)
    segments = []
    for off, w in zip(offsets, weights):
        line = offset_polyline(s.centerline, off, s.normal)
        cur = s.total_current * w
        for a, b in zip(line[:-1], line[1:]):
            segments.append(WireSegment(a, b, cur))
    return CurrentModel.from_segments(segments, label="strip")


@dataclass
class CpwSpec:
    """Coplanar waveguide: signal strip flanked by two ground strips.

    The grounds return the signal current, split between the left and
    right planes by ground_split (unequal splits model feed asymmetry).
    """

    signal_width: float
    gap: float
    ground_width: float
    length: float
    current: complex
    ground_split: tuple = (0.5, 0.5)

    def __post_init__(self):
        for name in ("signal_width", "gap", "ground_width", "length"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        self.current = _as_current(self.current)
        left, right = self.ground_split
        if abs((left + right) - 1.0) > 1e-12:
            raise ValueError("ground_split fractions must sum to 1")
        self.ground_split = (float(left), float(right))


def build_cpw(spec, n_filaments=32, profile=EDGE):
    """Discretized CPW current model in the z = 0 plane, strips along y.

    The signal strip is centered on x = 0 and carries +current; each
    ground strip carries its ground_split share of -current.
    """
    half_len = spec.length / 2.0
    x_ground = spec.signal_width / 2.0 + spec.gap + spec.ground_width / 2.0

    def strip(x_center, width, current):
        line = [(x_center, -half_len, 0.0), (x_center, half_len, 0.0)]
        return discretize_strip(StripConductor(
            centerline=line, width=width, total_current=current,
            profile=profile, n_filaments=n_filaments))

    left, right = spec.ground_split
    parts = [
        strip(0.0, spec.signal_width, spec.current),
        strip(-x_ground, spec.ground_width, -spec.current * left),
        strip(x_ground, spec.ground_width, -spec.current * right),
    ]
    return superpose(parts, label="cpw")


def arc_points(center, radius, a_start, a_end, max_chord):
    """Points along a circular arc in the z plane of `center`.

    Chord length per step stays below max_chord.
    """
    center = _as_vec3(center, "center")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if max_chord <= 0:
        raise ValueError("max_chord must be positive")
    step = 2.0 * math.asin(min(1.0, max_chord / (2.0 * radius)))
    n = max(1, int(math.ceil(abs(a_end - a_start) / step)))
    ang = np.linspace(a_start, a_end, n + 1)
    pts = np.column_stack([center[0] + radius * np.cos(ang),
                           center[1] + radius * np.sin(ang),
                           np.full(n + 1, center[2])])
    return pts


def _closed_loop(center, radius, max_chord):
    pts = arc_points(center, radius, 0.0, 2.0 * math.pi, max_chord)
    pts[-1] = pts[0]  # close exactly
    return pts


def _polyline_model(points, current, label):
    segs = [WireSegment(a, b, current) for a, b in zip(points[:-1], points[1:])]
    return CurrentModel.from_segments(segs, label=label)


def _build_omega_loop(params):
    r = float(params["radius"])
    gap = float(params["gap"])
    current = _as_current(params["current"])
    lead = float(params.get("lead_length", 2.0 * r))
    center = _as_vec3(params.get("center", (0.0, 0.0, 0.0)), "center")
    max_chord = float(params.get("max_chord", r / 16.0))
    if not 0 < gap < 2 * r:
        raise ValueError("omega gap must be in (0, 2 radius)")
    # gap centered at the bottom of the circle; chord between the arc
    # endpoints equals the gap
    phi = math.asin(gap / (2.0 * r))
    arc = arc_points(center, r, -math.pi / 2 + phi, 3 * math.pi / 2 - phi,
                     max_chord)
    entry = arc[0] + np.array([0.0, -lead, 0.0])
    exit_ = arc[-1] + np.array([0.0, -lead, 0.0])
    pts = np.vstack([entry, arc, exit_])
    return _polyline_model(pts, current, "omega-loop")


def _build_meander(params):
    n = int(params["n_turns"])
    leg = float(params["leg"])
    pitch = float(params["pitch"])
    current = _as_current(params["current"])
    origin = _as_vec3(params.get("origin", (0.0, 0.0, 0.0)), "origin")
    if n < 1 or leg <= 0 or pitch <= 0:
        raise ValueError("meander needs n_turns >= 1 and positive dimensions")
    # n alternating legs with jogs between, half-pitch leads at both
    # ends: total length is exactly n * (leg + pitch)
    pts = [(0.0, 0.0), (pitch / 2.0, 0.0)]
    x = pitch / 2.0
    y = 0.0
    for k in range(n):
        y = leg if k % 2 == 0 else 0.0
        pts.append((x, y))
        if k < n - 1:
            x += pitch
            pts.append((x, y))
    pts.append((x + pitch / 2.0, y))
    pts3 = np.array([(px, py, 0.0) for px, py in pts]) + origin
    return _polyline_model(pts3, current, "meander")


def _build_interdigital(params):
    n = int(params["n_fingers"])
    length = float(params["finger_length"])
    pitch = float(params["pitch"])
    gap = float(params["gap"])
    current = _as_current(params["current"])
    origin = _as_vec3(params.get("origin", (0.0, 0.0, 0.0)), "origin")
    if n < 2 or length <= 0 or pitch <= 0 or gap <= 0 or gap >= length:
        raise ValueError("interdigital needs n_fingers >= 2, positive "
                         "dimensions and gap < finger_length")
    # Even fingers hang from the bottom bus (y=0), odd fingers from the
    # top bus (y = length + gap); conduction current runs +y through
    # every finger and the tips are open (the return closes as
    # displacement current, outside the model). Bus segment currents
    # taper so current is conserved at every junction.
    y_top = length + gap
    segs = []
    even = list(range(0, n, 2))
    odd = list(range(1, n, 2))
    i_even = current / len(even)
    i_odd = current / len(odd)

    def pt(x, y):
        return np.array([x, y, 0.0]) + origin

    remaining = current
    prev_x = -pitch
    for k in even:
        x = k * pitch
        segs.append(WireSegment(pt(prev_x, 0.0), pt(x, 0.0), remaining))
        segs.append(WireSegment(pt(x, 0.0), pt(x, length), i_even))
        remaining -= i_even
        prev_x = x
    collected = 0.0 + 0.0j
    prev_x = odd[0] * pitch
    for k in odd:
        x = k * pitch
        if x != prev_x:
            segs.append(WireSegment(pt(prev_x, y_top), pt(x, y_top), collected))
        segs.append(WireSegment(pt(x, gap), pt(x, y_top), i_odd))
        collected += i_odd
        prev_x = x
    segs.append(WireSegment(pt(prev_x, y_top), pt(prev_x + pitch, y_top),
                            collected))
    return CurrentModel.from_segments(segs, label="interdigital")


def _build_two_ring_trap(params):
    r_in = float(params["radius_inner"])
    r_out = float(params["radius_outer"])
    current = _as_current(params["current"])
    center = _as_vec3(params.get("center", (0.0, 0.0, 0.0)), "center")
    max_chord = float(params.get("max_chord", r_in / 16.0))
    if not 0 < r_in < r_out:
        raise ValueError("two-ring trap needs 0 < radius_inner < radius_outer")
    inner = _polyline_model(_closed_loop(center, r_in, max_chord), current,
                            "ring-inner")
    outer = _polyline_model(_closed_loop(center, r_out, max_chord), -current,
                            "ring-outer")
    return superpose([inner, outer], label="two-ring-trap")


_BUILDERS = {
    "omega-loop": _build_omega_loop,
    "meander": _build_meander,
    "interdigital": _build_interdigital,
    "two-ring-trap": _build_two_ring_trap,
}


def build_device(kind, params):
    """Current model for a named planar structure.

    Kinds: omega-loop (radius, gap, current [, lead_length, center,
    max_chord]), meander (n_turns, leg, pitch, current [, origin]),
    interdigital (n_fingers, finger_length, pitch, gap, current
    [, origin]), two-ring-trap (radius_inner, radius_outer, current
    [, center, max_chord]; the rings carry opposite currents).
    """
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        known = ", ".join(sorted(_BUILDERS) + ["cpw", "strip", "segments"])
        raise ValueError(f"unknown device kind {kind!r}; known kinds: {known}")
    return builder(params)


def model_from_spec(doc):
    """Build a CurrentModel from a device specification document.

    The document is {"kind": ..., "params": {...}} with dimensions in
    meters and currents as [re, im] ampere pairs (bare reals accepted),
    or {"devices": [...]} to superpose several such entries.
    """
    if "devices" in doc:
        return superpose([model_from_spec(d) for d in doc["devices"]])
    kind = doc.get("kind")
    params = doc.get("params", {})
    if kind == "cpw":
        spec = CpwSpec(
            signal_width=float(params["signal_width"]),
            gap=float(params["gap"]),
            ground_width=float(params["ground_width"]),
            length=float(params["length"]),
            current=_as_current(params["current"]),
            ground_split=tuple(params.get("ground_split", (0.5, 0.5))))
        return build_cpw(spec,
                         n_filaments=int(params.get("n_filaments", 32)),
                         profile=params.get("profile", EDGE))
    if kind == "strip":
        return discretize_strip(StripConductor(
            centerline=np.asarray(params["centerline"], dtype=float),
            width=float(params["width"]),
            total_current=_as_current(params["current"]),
            profile=params.get("profile", UNIFORM),
            n_filaments=int(params.get("n_filaments", 32))))
    if kind == "segments":
        segs = [WireSegment(np.asarray(s["start"], dtype=float),
                            np.asarray(s["end"], dtype=float),
                            _as_current(s["current"]))
                for s in params["segments"]]
        return CurrentModel.from_segments(segs, label=doc.get("label", "segments"))
    return build_device(kind, params)
