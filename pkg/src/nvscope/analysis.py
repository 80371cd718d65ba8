"""Recover field maps and device metrics from contrast image cubes.

Per-pixel traces are fit with the damped-oscillation model

    y(t) = A - (B exp(-t/tau_f) + C exp(-t/tau_s)) sin(Omega t + phi)

using Levenberg-Marquardt with an analytic Jacobian. The frequency is
seeded from a zero-padded periodogram peak (parabolic interpolation),
which keeps the multimodal Omega landscape from trapping the solver.
The phase term is optional: with phi fixed at 0 the model is the bare
sine form, with phi free it also matches (1 - cos)-shaped population
signals. Calibration is B = Omega / (2 pi gamma_nv).
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares

from nvscope.fieldcore import GAMMA_NV
from nvscope.nearfield import GridSpec, PolarizedFieldMap


class NoOscillation(ValueError):
    """Periodogram peak below the detection threshold: field unresolved."""

    def __init__(self, snr, threshold):
        self.snr = snr
        self.threshold = threshold
        super().__init__(
            f"no oscillation detected: periodogram SNR {snr:.2f} below "
            f"threshold {threshold:.2f}")


class NotConverged(RuntimeError):
    """Fit exhausted its iteration budget."""

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class TrapNotFound(ValueError):
    """No interior local minimum in the searched region."""


DOUBLE_EXP = "double-exp"
SINGLE_EXP = "single-exp"


@dataclass
class FitConfig:
    max_iterations: int = 400
    rel_tolerance: float = 1e-10
    omega_bounds: tuple = None  # (min, max) rad/ns; None = auto from sampling
    min_contrast_snr: float = 6.0
    allow_phase: bool = True
    envelope_mode: str = DOUBLE_EXP

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.rel_tolerance <= 0:
            raise ValueError("rel_tolerance must be positive")
        if self.omega_bounds is not None:
            lo, hi = self.omega_bounds
            if not 0 < lo < hi:
                raise ValueError("omega_bounds must be positive and ordered")
        if self.envelope_mode not in (DOUBLE_EXP, SINGLE_EXP):
            raise ValueError(
                f"envelope_mode must be {DOUBLE_EXP!r} or {SINGLE_EXP!r}")


@dataclass
class RabiFitResult:
    """Per-pixel fit parameters and diagnostics.

    omega is in rad/ns; amp_slow is 0 and tau_slow equals tau_fast when
    the envelope collapsed to a single exponential.
    """

    offset: float
    amp_fast: float
    amp_slow: float
    tau_fast_ns: float
    tau_slow_ns: float
    omega: float
    phase: float
    residual_rms: float
    converged: bool
    below_threshold: bool = False


def omega_to_field(omega_rad_per_ns, gamma_nv=GAMMA_NV):
    """Calibrated field amplitude (T) for an angular frequency in rad/ns."""
    return omega_rad_per_ns * 1e9 / (2.0 * math.pi * gamma_nv)


def periodogram_peak(t_ns, y, pad_factor=4):
    """Dominant oscillation frequency of a trace (cycles/ns) and its SNR.

    Mean-subtracted, zero-padded FFT; the peak bin is refined by
    parabolic interpolation. SNR is peak magnitude over the median
    non-DC magnitude. Ties resolve to the lower frequency.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    step = float(np.mean(np.diff(t_ns)))
    nfft = pad_factor * n
    mag = np.abs(np.fft.rfft(y - np.mean(y), nfft))
    body = mag[1:]
    k = int(np.argmax(body)) + 1
    peak = mag[k]
    floor = float(np.median(body))
    if floor == 0.0:
        snr = math.inf if peak > 0 else 0.0
    else:
        snr = peak / floor
    # parabolic refinement on the three bins around the peak
    if 1 <= k - 1 and k + 1 < len(mag):
        alpha, beta, gamma = mag[k - 1], mag[k], mag[k + 1]
        denom = alpha - 2 * beta + gamma
        delta = 0.0 if denom == 0 else 0.5 * (alpha - gamma) / denom
        delta = float(np.clip(delta, -0.5, 0.5))
    else:
        delta = 0.0
    freq = (k + delta) / (nfft * step)
    return freq, snr


def _model_parts(t, params, mode, allow_phase):
    if mode == DOUBLE_EXP:
        a, b, c, lf, ls, w = params[:6]
        phi = params[6] if allow_phase else 0.0
        tau_f = math.exp(min(max(lf, -40.0), 40.0))
        tau_s = math.exp(min(max(ls, -40.0), 40.0))
        ef = np.exp(-t / tau_f)
        es = np.exp(-t / tau_s)
        env = b * ef + c * es
    else:
        a, b, lf, w = params[:4]
        phi = params[4] if allow_phase else 0.0
        tau_f = math.exp(min(max(lf, -40.0), 40.0))
        tau_s = tau_f
        ef = np.exp(-t / tau_f)
        es = None
        c = 0.0
        env = b * ef
    s = np.sin(w * t + phi)
    return a, b, c, tau_f, tau_s, ef, es, env, s, phi


def _residual(params, t, y, mode, allow_phase):
    a, _, _, _, _, _, _, env, s, _ = _model_parts(t, params, mode, allow_phase)
    return (a - env * s) - y


def _jacobian(params, t, y, mode, allow_phase):
    a, b, c, tau_f, tau_s, ef, es, env, s, phi = _model_parts(
        t, params, mode, allow_phase)
    if mode == DOUBLE_EXP:
        w = params[5]
    else:
        w = params[3]
    cos = np.cos(w * t + phi)
    cols = [np.ones_like(t), -ef * s]
    if mode == DOUBLE_EXP:
        cols.append(-es * s)
        cols.append(-b * ef * (t / tau_f) * s)
        cols.append(-c * es * (t / tau_s) * s)
    else:
        cols.append(-b * ef * (t / tau_f) * s)
    cols.append(-env * t * cos)
    if allow_phase:
        cols.append(-env * cos)
    return np.column_stack(cols)


def _default_omega_bounds(t_ns):
    step = float(np.median(np.diff(t_ns)))
    return (2.0 * math.pi * 1e-4, math.pi / step)


def _exp_clipped(log_tau):
    return math.exp(min(max(log_tau, -40.0), 40.0))


def _seed_tau(t, y):
    """Envelope time constant estimate from early/late oscillation power.

    Near-constant envelopes seed at a large tau so the solver does not
    have to climb out of a fast-decay guess one step at a time.
    """
    n = len(t)
    half = n // 2
    early = y[:half] - np.mean(y[:half])
    late = y[half:] - np.mean(y[half:])
    r_early = math.sqrt(float(np.mean(early ** 2)))
    r_late = math.sqrt(float(np.mean(late ** 2)))
    span = float(t[-1] - t[0])
    gap = float(np.mean(t[half:]) - np.mean(t[:half]))
    if r_late > 0 and r_early > r_late:
        tau = gap / math.log(r_early / r_late)
    else:
        tau = 50.0 * span
    return min(max(tau, span / 20.0), 50.0 * span)


def _unpack(params, mode, allow_phase, residual_rms, converged):
    if mode == DOUBLE_EXP:
        a, b, c, lf, ls, w = params[:6]
        phi = params[6] if allow_phase else 0.0
        tau_f, tau_s = _exp_clipped(lf), _exp_clipped(ls)
        if tau_f > tau_s:  # enforce fast <= slow ordering
            b, c = c, b
            tau_f, tau_s = tau_s, tau_f
    else:
        a, b, lf, w = params[:4]
        phi = params[4] if allow_phase else 0.0
        c = 0.0
        tau_f = tau_s = _exp_clipped(lf)
    if w < 0:  # sin(-wt + phi) == sin(wt + pi - phi)
        w = -w
        phi = math.pi - phi
    if allow_phase and (b + c) < 0:
        b, c = -b, -c
        phi = phi + math.pi
    phi = math.remainder(phi, 2.0 * math.pi)
    return RabiFitResult(offset=float(a), amp_fast=float(b), amp_slow=float(c),
                         tau_fast_ns=float(tau_f), tau_slow_ns=float(tau_s),
                         omega=float(w), phase=float(phi),
                         residual_rms=float(residual_rms),
                         converged=bool(converged))


def _amplitude_uncertainty_spans_zero(res, mode):
    """Detect an unidentifiable envelope split from the fit covariance."""
    n, p = res.jac.shape
    if n <= p:
        return True
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac)
    except np.linalg.LinAlgError:
        return True
    s2 = 2.0 * res.cost / (n - p)
    sigma = np.sqrt(np.maximum(np.diag(cov) * s2, 0.0))
    b, c = res.x[1], res.x[2]
    return abs(b) < sigma[1] or abs(c) < sigma[2]


def _run_fit(t, y, x0, mode, allow_phase, cfg):
    return least_squares(
        _residual, x0, jac=_jacobian, method="lm",
        args=(t, y, mode, allow_phase),
        xtol=cfg.rel_tolerance, ftol=cfg.rel_tolerance, gtol=1e-14,
        max_nfev=cfg.max_iterations)


def fit_pixel(t_ns, y, cfg=None):
    """Fit one contrast trace; returns a RabiFitResult.

    Raises NoOscillation when the periodogram peak is below the
    configured SNR threshold and NotConverged when the iteration budget
    runs out. A fit whose frequency lands on or outside the omega
    bounds is returned with converged=False.
    """
    if cfg is None:
        cfg = FitConfig()
    t = np.asarray(t_ns, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 8:
        raise ValueError("need at least 8 samples to fit")
    if np.any(np.diff(t) <= 0):
        raise ValueError("pulse durations must be strictly increasing")
    if t.shape != y.shape:
        raise ValueError("time and contrast arrays must match")

    freq, snr = periodogram_peak(t, y)
    if snr < cfg.min_contrast_snr:
        raise NoOscillation(snr, cfg.min_contrast_snr)

    bounds = cfg.omega_bounds or _default_omega_bounds(t)
    w0 = 2.0 * math.pi * freq
    a0 = float(np.mean(y))
    amp0 = (float(np.max(y)) - float(np.min(y))) / 2.0
    tau0 = _seed_tau(t, y)
    phi0 = math.pi / 2.0  # (1 - cos)-shaped signals start at quadrature

    mode = cfg.envelope_mode
    if mode == DOUBLE_EXP:
        x0 = [a0, amp0 / 2, amp0 / 2, math.log(tau0 / 3), math.log(3 * tau0),
              w0]
    else:
        x0 = [a0, amp0, math.log(tau0), w0]
    if cfg.allow_phase:
        x0.append(phi0)

    res = _run_fit(t, y, x0, mode, cfg.allow_phase, cfg)
    fell_back = False
    if mode == DOUBLE_EXP and res.status != 0:
        taus = sorted((_exp_clipped(res.x[3]), _exp_clipped(res.x[4])))
        if (taus[0] / taus[1] > 0.8
                or _amplitude_uncertainty_spans_zero(res, mode)):
            fell_back = True
    if mode == DOUBLE_EXP and (res.status == 0 or fell_back):
        # degenerate or stuck double envelope: refit with one exponential
        x0s = [a0, amp0, math.log(tau0), w0]
        if cfg.allow_phase:
            x0s.append(phi0)
        res_s = _run_fit(t, y, x0s, SINGLE_EXP, cfg.allow_phase, cfg)
        # cost floor keeps noiseless traces (both costs ~eps^2) comparable
        floor = len(t) * (1e-10 * max(float(np.max(np.abs(y))), 1e-30)) ** 2
        if res_s.status != 0 and (res.status == 0
                                  or res_s.cost <= res.cost * 1.001 + floor):
            res = res_s
            mode = SINGLE_EXP
    if res.status == 0:
        partial = _unpack(res.x, mode, cfg.allow_phase,
                          math.sqrt(np.mean(res.fun ** 2)), False)
        raise NotConverged(
            f"fit exhausted {cfg.max_iterations} evaluations", partial)

    rms = math.sqrt(float(np.mean(res.fun ** 2)))
    result = _unpack(res.x, mode, cfg.allow_phase, rms, True)
    if not (bounds[0] < result.omega < bounds[1]):
        result = replace(result, converged=False)
    return result


def _below_threshold_result(trace):
    return RabiFitResult(offset=float(np.mean(trace)), amp_fast=0.0,
                         amp_slow=0.0, tau_fast_ns=math.inf,
                         tau_slow_ns=math.inf, omega=0.0, phase=0.0,
                         residual_rms=float(np.std(trace)), converged=False,
                         below_threshold=True)


def _fit_trace_guarded(t, trace, cfg):
    try:
        return fit_pixel(t, trace, cfg)
    except NoOscillation:
        return _below_threshold_result(trace)
    except NotConverged as err:
        if err.result is not None:
            return err.result
        return replace(_below_threshold_result(trace), below_threshold=False)


def _fit_block(args):
    t, block, cfg = args
    return [_fit_trace_guarded(t, block[:, k], cfg)
            for k in range(block.shape[1])]


def fit_cube(cube, cfg=None, component="sigma-", n_workers=1,
             gamma_nv=GAMMA_NV):
    """Fit every pixel of a cube; returns (field map, result array).

    Pixels whose trace shows no oscillation above the SNR threshold are
    flagged below_threshold and carry zero field. Per-pixel failures
    are recorded in the results, never raised. Results are independent
    of n_workers.
    """
    if cfg is None:
        cfg = FitConfig()
    nx, ny = cube.grid.nx, cube.grid.ny
    t = cube.dt_ns
    flat = cube.frames.reshape(cube.n_frames, nx * ny)

    if n_workers and n_workers > 1:
        chunk = max(1, math.ceil(nx * ny / (4 * n_workers)))
        jobs = [(t, flat[:, k:k + chunk], cfg)
                for k in range(0, nx * ny, chunk)]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            blocks = list(pool.map(_fit_block, jobs))
        results_flat = [r for block in blocks for r in block]
    else:
        results_flat = _fit_block((t, flat, cfg))

    results = np.empty((nx, ny), dtype=object)
    values = np.zeros((nx, ny))
    for idx, r in enumerate(results_flat):
        i, j = divmod(idx, ny)
        results[i, j] = r
        if r.converged and math.isfinite(r.omega):
            values[i, j] = omega_to_field(r.omega, gamma_nv)
    fmap = PolarizedFieldMap(grid=cube.grid, component=component, values=values)
    return fmap, results


@dataclass
class ContourRidge:
    """One iso-amplitude ridge: order m, field label (T), pixel path."""

    order_m: int
    b_label: float
    pixels: np.ndarray


@dataclass
class IsoBContourSet:
    dt_mw_ns: float
    ridges: list = field(default_factory=list)
    parity: str = "odd"


def _order_pixels_by_angle(pixels):
    center = pixels.mean(axis=0)
    ang = np.arctan2(pixels[:, 1] - center[1], pixels[:, 0] - center[0])
    return pixels[np.argsort(ang, kind="stable")]


def extract_contours(image, dt_mw_ns, gamma_nv=GAMMA_NV, min_pixels=8,
                     min_amplitude=0.0):
    """Iso-amplitude ridges of a single contrast frame.

    Ridges of |contrast| are the bright lines where Omega dt = m pi
    with m odd (even multiples are contrast zeros), so detected ridges
    are labeled m = 1, 3, 5, ... counting inward from the image
    boundary, with field labels b_m = m / (2 gamma_nv dt).
    """
    if dt_mw_ns <= 0:
        raise ValueError("dt_mw_ns must be positive")
    a = np.abs(np.asarray(image, dtype=float))
    nx, ny = a.shape
    ridge = np.zeros_like(a, dtype=bool)
    # 1D local maxima along each axis, strict on at least one side
    ge_l = a[:, 1:-1] >= a[:, :-2]
    ge_r = a[:, 1:-1] >= a[:, 2:]
    gt = (a[:, 1:-1] > a[:, :-2]) | (a[:, 1:-1] > a[:, 2:])
    ridge[:, 1:-1] |= ge_l & ge_r & gt
    ge_u = a[1:-1, :] >= a[:-2, :]
    ge_d = a[1:-1, :] >= a[2:, :]
    gt2 = (a[1:-1, :] > a[:-2, :]) | (a[1:-1, :] > a[2:, :])
    ridge[1:-1, :] |= ge_u & ge_d & gt2
    ridge &= a > min_amplitude

    labels, n_comp = ndimage.label(ridge, structure=np.ones((3, 3), dtype=int))
    comps = []
    for c in range(1, n_comp + 1):
        ii, jj = np.nonzero(labels == c)
        if len(ii) < min_pixels:
            continue
        border_dist = int(np.min(np.minimum(np.minimum(ii, jj),
                                            np.minimum(nx - 1 - ii,
                                                       ny - 1 - jj))))
        center_dist = math.hypot(float(np.mean(ii)) - (nx - 1) / 2,
                                 float(np.mean(jj)) - (ny - 1) / 2)
        comps.append((border_dist, -center_dist, int(ii[0]), int(jj[0]),
                      np.column_stack([ii, jj])))
    comps.sort(key=lambda c: c[:4])

    dt_s = dt_mw_ns * 1e-9
    ridges = []
    for rank, comp in enumerate(comps):
        m = 2 * rank + 1
        ridges.append(ContourRidge(
            order_m=m,
            b_label=m / (2.0 * gamma_nv * dt_s),
            pixels=_order_pixels_by_angle(comp[4].astype(float))))
    return IsoBContourSet(dt_mw_ns=dt_mw_ns, ridges=ridges, parity="odd")


def _overlap_score(comp_sum, comp_cnt, tile, di, dj, min_overlap):
    """Normalized cross-correlation of a tile with the running composite."""
    nx, ny = tile.shape
    i0, j0 = max(di, 0), max(dj, 0)
    i1 = min(di + nx, comp_sum.shape[0])
    j1 = min(dj + ny, comp_sum.shape[1])
    if i1 - i0 <= 0 or j1 - j0 <= 0:
        return None
    cnt = comp_cnt[i0:i1, j0:j1]
    valid = cnt > 0
    if int(np.sum(valid)) < min_overlap:
        return None
    ref = (comp_sum[i0:i1, j0:j1][valid] / cnt[valid])
    cut = tile[i0 - di:i1 - di, j0 - dj:j1 - dj][valid]
    ra = ref - ref.mean()
    ca = cut - cut.mean()
    denom = math.sqrt(float(ra @ ra) * float(ca @ ca))
    if denom == 0.0:
        # flat overlap: rank below any true correlation peak
        return -1.0 - float(np.mean((ref - cut) ** 2))
    return float(ra @ ca) / denom


def stitch(tiles, refine=False, search=8, min_overlap=16):
    """Combine overlapping field-map tiles into one composite map.

    tiles is a list of (PolarizedFieldMap, (di, dj)) with integer pixel
    offsets in a common frame. With refine=True each tile's offset is
    adjusted within +-search pixels to the cross-correlation peak
    against the composite built so far. Overlapping pixels average.
    """
    if not tiles:
        raise ValueError("stitch needs at least one tile")
    first = tiles[0][0]
    for fmap, _ in tiles[1:]:
        if fmap.grid.pitch != first.grid.pitch:
            raise ValueError("tiles must share the same pitch")
        if fmap.component != first.component:
            raise ValueError("tiles must share the same component")
        if not (np.array_equal(fmap.grid.axes[0], first.grid.axes[0])
                and np.array_equal(fmap.grid.axes[1], first.grid.axes[1])):
            raise ValueError("tiles must share the same plane axes")

    offsets = [(int(di), int(dj)) for _, (di, dj) in tiles]
    lo_i = min(di for di, _ in offsets) - (search if refine else 0)
    lo_j = min(dj for _, dj in offsets) - (search if refine else 0)
    hi_i = max(di + f.grid.nx for f, (di, _) in
               zip([t[0] for t in tiles], offsets)) + (search if refine else 0)
    hi_j = max(dj + f.grid.ny for f, (_, dj) in
               zip([t[0] for t in tiles], offsets)) + (search if refine else 0)

    shape = (hi_i - lo_i, hi_j - lo_j)
    comp_sum = np.zeros(shape)
    comp_cnt = np.zeros(shape, dtype=int)

    final_offsets = []
    for (fmap, _), (di, dj) in zip(tiles, offsets):
        di -= lo_i
        dj -= lo_j
        if refine and np.any(comp_cnt > 0):
            best = None
            for ddi in range(-search, search + 1):
                for ddj in range(-search, search + 1):
                    score = _overlap_score(comp_sum, comp_cnt, fmap.values,
                                           di + ddi, dj + ddj, min_overlap)
                    if score is None:
                        continue
                    key = (score, -(ddi * ddi + ddj * ddj), -ddi, -ddj)
                    if best is None or key > best[0]:
                        best = (key, ddi, ddj)
            if best is not None:
                di += best[1]
                dj += best[2]
        nx, ny = fmap.values.shape
        comp_sum[di:di + nx, dj:dj + ny] += fmap.values
        comp_cnt[di:di + nx, dj:dj + ny] += 1
        final_offsets.append((di + lo_i, dj + lo_j))

    covered = comp_cnt > 0
    # trim to the covered bounding box
    ii, jj = np.nonzero(covered)
    i0, i1 = int(ii.min()), int(ii.max()) + 1
    j0, j1 = int(jj.min()), int(jj.max()) + 1
    values = np.zeros((i1 - i0, j1 - j0))
    sub_cnt = comp_cnt[i0:i1, j0:j1]
    sub_cov = sub_cnt > 0
    values[sub_cov] = comp_sum[i0:i1, j0:j1][sub_cov] / sub_cnt[sub_cov]

    g0 = first.grid
    ref_di, ref_dj = final_offsets[0]
    shift_i = (i0 + lo_i) - ref_di
    shift_j = (j0 + lo_j) - ref_dj
    origin = (g0.origin + shift_i * g0.pitch * g0.axes[0]
              + shift_j * g0.pitch * g0.axes[1])
    grid = GridSpec(origin=origin, axes=g0.axes, nx=values.shape[0],
                    ny=values.shape[1], pitch=g0.pitch)
    return PolarizedFieldMap(grid=grid, component=first.component,
                             values=values)


@dataclass
class TrapReport:
    """Location and one-sided gradients of a field minimum."""

    position_px: tuple
    position_m: np.ndarray
    value: float
    gradients: dict  # side tag -> T/m, slope away from the minimum


def characterize_trap(pmap, search_region=None, arm=5):
    """Deepest interior local minimum of a field map and its gradients.

    search_region is ((i0, i1), (j0, j1)) half-open pixel bounds
    (default: whole map). Gradients are linear-fit slopes over `arm`
    pixels on each side along each grid axis.
    """
    a = pmap.values
    nx, ny = a.shape
    if search_region is None:
        (i0, i1), (j0, j1) = (0, nx), (0, ny)
    else:
        (i0, i1), (j0, j1) = search_region
        if not (0 <= i0 < i1 <= nx and 0 <= j0 < j1 <= ny):
            raise ValueError("search region must lie within the grid")

    best = None
    for i in range(max(i0, 1), min(i1, nx - 1)):
        for j in range(max(j0, 1), min(j1, ny - 1)):
            v = a[i, j]
            neigh = a[i - 1:i + 2, j - 1:j + 2]
            if v <= np.min(neigh):
                if best is None or v < best[0]:
                    best = (v, i, j)
    if best is None:
        raise TrapNotFound("no interior local minimum in the search region")

    _, i, j = best
    pitch = pmap.grid.pitch
    grads = {}
    for tag, sl in (("axis0_minus", a[i::-1, j]), ("axis0_plus", a[i:, j]),
                    ("axis1_minus", a[i, j::-1]), ("axis1_plus", a[i, j:])):
        pts = sl[:arm + 1]
        if len(pts) >= 2:
            x = np.arange(len(pts)) * pitch
            grads[tag] = float(np.polyfit(x, pts, 1)[0])
        else:
            grads[tag] = math.nan
    return TrapReport(position_px=(i, j),
                      position_m=pmap.grid.pixel_center(i, j),
                      value=float(a[i, j]), gradients=grads)


def amplitude_sensitivity(cubes, cfg=None, measurement_time_s=None,
                          component="sigma-", gamma_nv=GAMMA_NV):
    """Field amplitude sensitivity in T Hz^-1/2 from repeated cubes.

    Fits each repeat, takes the per-pixel standard deviation of the
    fitted field over repeats, scales by the square root of the
    measurement time per cube, and reports the median over pixels that
    converged in every repeat. measurement_time_s defaults to the
    summed exposure time of the cube's pulse train.
    """
    cubes = list(cubes)
    if len(cubes) < 10:
        raise ValueError("need at least 10 repeated cubes")
    if measurement_time_s is None:
        pulse = cubes[0].pulse
        if pulse is None:
            raise ValueError(
                "cube carries no pulse parameters; pass measurement_time_s")
        measurement_time_s = float(
            np.sum([pulse.exposure_ns(dt) for dt in cubes[0].dt_ns])) * 1e-9
    maps = []
    ok = None
    for cube in cubes:
        fmap, results = fit_cube(cube, cfg, component=component,
                                 gamma_nv=gamma_nv)
        good = np.vectorize(
            lambda r: r.converged and not r.below_threshold)(results)
        ok = good if ok is None else (ok & good)
        maps.append(fmap.values)
    stack = np.stack(maps)
    if not np.any(ok):
        raise ValueError("no pixel converged across all repeats")
    per_pixel = np.std(stack[:, ok], axis=0, ddof=1)
    return float(np.median(per_pixel)) * math.sqrt(measurement_time_s)


def dynamic_range_db(b_min, b_max):
    """Amplitude dynamic range in dB (equals the dB power ratio)."""
    if b_min <= 0:
        raise ValueError("b_min must be positive")
    if b_max < b_min:
        raise ValueError("b_max must be >= b_min")
    return 20.0 * math.log10(b_max / b_min)


def insertion_loss_db(p_in_dbm, j_mw, z_ohm):
    """Simulated drive power and insertion loss from the on-chip current.

    p_sim = 10 log10(J^2 Z / 1 mW); loss is input power minus p_sim.
    Returns (p_sim_dbm, loss_db).
    """
    if j_mw <= 0:
        raise ValueError("current must be positive")
    if z_ohm <= 0:
        raise ValueError("impedance must be positive")
    p_sim = 10.0 * math.log10(j_mw * j_mw * z_ohm / 1e-3)
    return p_sim, p_in_dbm - p_sim
