"""Command-line pipeline driver.

Subcommands map one-to-one onto pipeline stages and compose through
files in the output directory:

    simulate  device model -> phasor + sigma+/- field maps
    acquire   field map -> contrast cube (scan) or frame stream
    fit       cube -> fitted field map + JSON diagnostics
    stitch    overlapping map tiles -> composite map
    contours  single cube frame -> labeled iso-amplitude ridges
    report    maps -> metrics JSON, text table, line-cut export

Configs are JSON with unit-suffixed keys (width_um, current_ma,
f_mw_ghz, ...) converted to SI on load; time-valued keys state their
unit in the name (laser_ns, duration ms in schedules) and pass through
unchanged. Every command writes a RunManifest with sha256 checksums of
its outputs; re-running with --verify checks them.

Exit codes: 0 success, 2 config or input error, 3 numerical failure,
4 verification failure.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources

import numpy as np

from nvscope import __version__, acquisition, analysis, currents, formats
from nvscope.acquisition import CameraTiming, DecayParams, PulseParams
from nvscope.fieldcore import (SensingLayer, TRANSITIONS, flip_axis,
                               nv_frame_from_tilt)
from nvscope.nearfield import (GridSpec, PolarizedFieldMap,
                               SegmentProximityError, evaluate_phasor_map,
                               project_polarization)

BUNDLED_SCENARIOS = ("cpw-fig2", "omega-fig3", "meander-fig3",
                     "interdigital-fig3", "trap-fig4-xz", "pulse-train-fig5")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    """Configuration problem; the message carries the field path."""


class VerificationError(RuntimeError):
    pass


# unit-suffixed keys convert to SI and lose the suffix; longest first so
# current_ma does not match _a and f_mw_ghz does not match _hz
_UNIT_SUFFIXES = (("_ghz", 1e9), ("_mhz", 1e6), ("_khz", 1e3), ("_hz", 1.0),
                  ("_um", 1e-6), ("_mm", 1e-3), ("_ma", 1e-3), ("_ut", 1e-6),
                  ("_mt", 1e-3), ("_m", 1.0), ("_a", 1.0), ("_t", 1.0))


def _scale_numbers(value, factor, path):
    if isinstance(value, bool):
        raise ConfigError(f"{path}: unit-suffixed key holds a boolean")
    if isinstance(value, (int, float)):
        return value * factor
    if isinstance(value, list):
        return [_scale_numbers(v, factor, path) for v in value]
    raise ConfigError(f"{path}: unit-suffixed key holds non-numeric data")


def convert_units(doc, path=""):
    """Strip unit suffixes from keys, scaling their values to SI."""
    if isinstance(doc, dict):
        out = {}
        for key, value in doc.items():
            here = f"{path}.{key}" if path else key
            for suffix, factor in _UNIT_SUFFIXES:
                if key.endswith(suffix) and len(key) > len(suffix):
                    out[key[:-len(suffix)]] = _scale_numbers(
                        value, factor, here)
                    break
            else:
                out[key] = convert_units(value, here)
        return out
    if isinstance(doc, list):
        return [convert_units(v, f"{path}[{i}]") for i, v in enumerate(doc)]
    return doc


def _need(doc, key, path):
    if key not in doc:
        raise ConfigError(f"{path}.{key} is required")
    return doc[key]


@dataclass
class ScenarioConfig:
    name: str
    description: str
    device_doc: dict
    grid: GridSpec
    layer: SensingLayer
    nv_frame: object
    f_mw: float
    transition: str
    pulse: PulseParams
    decay: DecayParams
    dt_ns: np.ndarray
    stream: dict
    trap: dict
    report: dict
    seed: int
    source_bytes: bytes


def resolve_config_source(value):
    """Return raw config bytes for a path or a bundled scenario name."""
    if os.path.isfile(value):
        with open(value, "rb") as fh:
            return fh.read()
    if value in BUNDLED_SCENARIOS:
        return (resources.files("nvscope.scenarios")
                / f"{value}.json").read_bytes()
    raise ConfigError(
        f"config {value!r} is neither a file nor a bundled scenario "
        f"(bundled: {', '.join(BUNDLED_SCENARIOS)})")


def load_scenario(value):
    raw = resolve_config_source(value)
    try:
        doc = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ConfigError(f"config {value!r}: invalid JSON: {err}")
    si = convert_units(doc)

    name = _need(si, "name", "config")
    gdoc = _need(si, "grid", "config")
    try:
        grid = GridSpec(origin=np.array(_need(gdoc, "origin", "grid"),
                                        dtype=float),
                        axes=(np.array(_need(gdoc, "axes", "grid")[0],
                                       dtype=float),
                              np.array(gdoc["axes"][1], dtype=float)),
                        nx=int(_need(gdoc, "nx", "grid")),
                        ny=int(_need(gdoc, "ny", "grid")),
                        pitch=float(_need(gdoc, "pitch", "grid")))
    except ValueError as err:
        raise ConfigError(f"grid: {err}")

    ldoc = _need(si, "layer", "config")
    try:
        layer = SensingLayer(h=float(_need(ldoc, "height", "layer")),
                             d=float(ldoc.get("thickness", 0.0)),
                             n_samples=int(ldoc.get("n_samples", 15)))
    except ValueError as err:
        raise ConfigError(f"layer: {err}")

    ndoc = si.get("nv", {})
    frame = nv_frame_from_tilt(float(ndoc.get("tilt_deg", 0.0)),
                               tilt_plane=ndoc.get("tilt_plane", "xz"))
    if ndoc.get("flip", False):
        frame = flip_axis(frame)

    bdoc = _need(si, "bias", "config")
    transition = _need(bdoc, "transition", "bias")
    if transition not in TRANSITIONS:
        raise ConfigError(f"bias.transition must be one of {TRANSITIONS}")
    f_mw = float(_need(bdoc, "f_mw", "bias"))

    try:
        pulse = PulseParams(**si.get("pulse", {}))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"pulse: {err}")
    decay = None
    if "decay" in si:
        try:
            decay = DecayParams(**si["decay"])
        except (TypeError, ValueError) as err:
            raise ConfigError(f"decay: {err}")

    dt_ns = None
    if "scan" in si:
        sdoc = si["scan"]
        start = float(_need(sdoc, "dt_start_ns", "scan"))
        step = float(_need(sdoc, "dt_step_ns", "scan"))
        n = int(_need(sdoc, "n_steps", "scan"))
        if step <= 0 or n < 1 or start < 0:
            raise ConfigError("scan: dt_start_ns >= 0, dt_step_ns > 0 and "
                              "n_steps >= 1 required")
        dt_ns = start + step * np.arange(n)

    stream = si.get("stream")
    if stream is not None:
        for key in ("dt_mw_ns", "rows", "schedule"):
            _need(stream, key, "stream")
        for item in stream["schedule"]:
            if (len(item) != 2 or item[0] < 0
                    or item[1] not in (acquisition.ON, acquisition.OFF)):
                raise ConfigError(
                    "stream.schedule entries must be [duration_ms, on|off]")

    seed = si.get("seed")
    return ScenarioConfig(
        name=name, description=si.get("description", ""),
        device_doc=_need(si, "device", "config"), grid=grid, layer=layer,
        nv_frame=frame, f_mw=f_mw, transition=transition, pulse=pulse,
        decay=decay, dt_ns=dt_ns, stream=stream, trap=si.get("trap"),
        report=si.get("report"), seed=None if seed is None else int(seed),
        source_bytes=raw)


# ------------------------------------------------------------- run manifest

@dataclass
class RunManifest:
    version: str
    command: str
    scenario: str
    config_sha256: str
    created_utc: str
    outputs: list

    def to_doc(self):
        return {"version": self.version, "command": self.command,
                "scenario": self.scenario,
                "config_sha256": self.config_sha256,
                "created_utc": self.created_utc, "outputs": self.outputs}


def _manifest_path(outdir, base, command):
    return os.path.join(outdir, f"{base}.{command}.manifest.json")


def _write_manifest(outdir, base, command, scenario, config_bytes, outputs):
    import hashlib
    manifest = RunManifest(
        version=__version__, command=command, scenario=scenario,
        config_sha256=hashlib.sha256(config_bytes or b"").hexdigest(),
        created_utc=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        outputs=outputs)
    path = _manifest_path(outdir, base, command)
    formats.atomic_write_bytes(
        path, json.dumps(manifest.to_doc(), indent=2,
                         sort_keys=True).encode() + b"\n")
    return path


def _record_output(outdir, filename, **extra):
    entry = {"path": filename,
             "sha256": formats.sha256_file(os.path.join(outdir, filename)),
             "bytes": os.path.getsize(os.path.join(outdir, filename))}
    entry.update(extra)
    return entry


def _verify_manifest(outdir, base, command):
    path = _manifest_path(outdir, base, command)
    if not os.path.isfile(path):
        raise ConfigError(f"no manifest at {path}; run the command first")
    with open(path) as fh:
        doc = json.load(fh)
    problems = []
    for entry in doc["outputs"]:
        target = os.path.join(outdir, entry["path"])
        if not os.path.isfile(target):
            problems.append(f"missing: {entry['path']}")
        elif formats.sha256_file(target) != entry["sha256"]:
            problems.append(f"checksum mismatch: {entry['path']}")
    if problems:
        raise VerificationError("; ".join(problems))
    print(f"verified {len(doc['outputs'])} outputs against {path}")
    return EXIT_OK


def _outdir(args):
    os.makedirs(args.output, exist_ok=True)
    return args.output


def _component_filename(component):
    return {"sigma+": "sigma_plus", "sigma-": "sigma_minus"}[component]


def _n_workers(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("NVSCOPE_THREADS", "").strip()
    return int(env) if env else 1


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    cfg = load_scenario(args.config)
    outdir = _outdir(args)
    if args.verify:
        return _verify_manifest(outdir, cfg.name, "simulate")
    model = currents.model_from_spec(cfg.device_doc)
    fmap = evaluate_phasor_map(model, cfg.grid, cfg.layer)
    outputs = []
    path = f"{cfg.name}.phasor.fmap"
    formats.write_field_map(os.path.join(outdir, path), fmap)
    outputs.append(_record_output(outdir, path))
    for component in TRANSITIONS:
        pmap = project_polarization(fmap, cfg.nv_frame, component)
        stem = f"{cfg.name}.{_component_filename(component)}"
        formats.write_field_map(os.path.join(outdir, stem + ".fmap"), pmap)
        outputs.append(_record_output(outdir, stem + ".fmap"))
        scale = formats.write_pgm(os.path.join(outdir, stem + ".pgm"),
                                  pmap.values)
        outputs.append(_record_output(outdir, stem + ".pgm",
                                      pgm_scale_t=scale))
    _write_manifest(outdir, cfg.name, "simulate", cfg.name,
                    cfg.source_bytes, outputs)
    print(f"simulate {cfg.name}: {len(outputs)} outputs in {outdir}")
    return EXIT_OK


def cmd_acquire(args):
    cfg = load_scenario(args.config)
    outdir = _outdir(args)
    if args.verify:
        return _verify_manifest(outdir, cfg.name, "acquire")
    if args.field_map:
        map_path = args.field_map
    else:
        stem = _component_filename(cfg.transition)
        map_path = os.path.join(outdir, f"{cfg.name}.{stem}.fmap")
    if not os.path.isfile(map_path):
        raise ConfigError(f"field map {map_path} not found; run simulate "
                          "first or pass --field-map")
    pmap = formats.read_field_map(map_path)
    if not isinstance(pmap, PolarizedFieldMap):
        raise ConfigError(f"{map_path} holds a phasor map; acquisition "
                          "needs a polarized amplitude map")
    seed = args.seed if args.seed is not None else cfg.seed
    if args.noiseless:
        seed = None
    decay = cfg.decay
    if decay is None:  # no decay section means an undamped envelope
        decay = DecayParams(tau_fast_ns=float("inf"),
                            tau_slow_ns=float("inf"), weight_fast=0.5)
    outputs = []
    if cfg.stream is not None:
        timing = CameraTiming(
            row_time_us=cfg.stream.get("row_time_us", 10.0),
            overhead_us=cfg.stream.get("overhead_us", 200.0))
        frames = acquisition.simulate_stream(
            pmap, cfg.stream["dt_mw_ns"], cfg.pulse,
            [tuple(item) for item in cfg.stream["schedule"]],
            timing=timing, rows=int(cfg.stream["rows"]), seed=seed,
            decay=decay)
        path = f"{cfg.name}.stream.rstr"
        formats.write_stream(os.path.join(outdir, path), pmap.grid,
                             cfg.stream["dt_mw_ns"], frames, timing=timing,
                             rows=int(cfg.stream["rows"]),
                             schedule=cfg.stream["schedule"],
                             pulse=cfg.pulse, seed=seed)
        outputs.append(_record_output(outdir, path, n_frames=len(frames)))
    else:
        if cfg.dt_ns is None:
            raise ConfigError("config has neither scan nor stream section")
        cube = acquisition.simulate_cube(pmap, cfg.dt_ns, cfg.pulse,
                                         decay=decay, seed=seed)
        path = f"{cfg.name}.cube.rcub"
        formats.write_cube(os.path.join(outdir, path), cube)
        outputs.append(_record_output(outdir, path,
                                      n_frames=cube.n_frames,
                                      noiseless=seed is None))
    _write_manifest(outdir, cfg.name, "acquire", cfg.name,
                    cfg.source_bytes, outputs)
    print(f"acquire {cfg.name}: wrote {outputs[0]['path']}")
    return EXIT_OK


def _fit_config_from_args(args, dt_ns):
    mode = ("single-exp" if args.envelope == "single" else "double-exp")
    bounds = None
    if args.one_cycle_floor:
        span = float(dt_ns[-1] - dt_ns[0])
        step = float(np.min(np.diff(dt_ns)))
        bounds = (2.0 * np.pi / span, np.pi / step)
    return analysis.FitConfig(max_iterations=args.max_iter,
                              min_contrast_snr=args.min_snr,
                              envelope_mode=mode, omega_bounds=bounds)


def cmd_fit(args):
    outdir = _outdir(args)
    base = os.path.splitext(os.path.basename(args.cube))[0]
    if args.verify:
        return _verify_manifest(outdir, base, "fit")
    cube = formats.read_cube(args.cube)
    cfg = _fit_config_from_args(args, cube.dt_ns)
    fmap, results = analysis.fit_cube(cube, cfg, component=args.component,
                                      n_workers=_n_workers(args))
    flat = list(results.ravel())
    n = len(flat)
    n_conv = sum(1 for r in flat if r.converged)
    n_below = sum(1 for r in flat if r.below_threshold)
    converged_b = [fmap.values[i, j]
                   for i in range(fmap.grid.nx) for j in range(fmap.grid.ny)
                   if results[i, j].converged]
    diagnostics = {
        "cube": os.path.basename(args.cube),
        "n_pixels": n,
        "n_converged": n_conv,
        "converged_fraction": n_conv / n,
        "n_below_threshold": n_below,
        "below_threshold_fraction": n_below / n,
        "median_field_ut": (float(np.median(converged_b)) * 1e6
                            if converged_b else None),
        "median_residual_rms": float(np.median(
            [r.residual_rms for r in flat])),
        "fit_options": {"envelope": args.envelope,
                        "min_contrast_snr": args.min_snr,
                        "max_iterations": args.max_iter,
                        "one_cycle_floor": args.one_cycle_floor,
                        "component": args.component},
    }
    outputs = []
    formats.write_field_map(os.path.join(outdir, base + ".fit.fmap"), fmap)
    outputs.append(_record_output(outdir, base + ".fit.fmap"))
    scale = formats.write_pgm(os.path.join(outdir, base + ".fit.pgm"),
                              fmap.values)
    outputs.append(_record_output(outdir, base + ".fit.pgm",
                                  pgm_scale_t=scale))
    formats.atomic_write_bytes(
        os.path.join(outdir, base + ".fit.json"),
        json.dumps(diagnostics, indent=2, sort_keys=True).encode() + b"\n")
    outputs.append(_record_output(outdir, base + ".fit.json"))
    _write_manifest(outdir, base, "fit", base, None, outputs)
    print(f"fit {base}: converged {n_conv}/{n} "
          f"({100 * n_conv / n:.1f}%), below threshold {n_below}")
    if diagnostics["converged_fraction"] < args.min_converged:
        print(f"converged fraction {diagnostics['converged_fraction']:.3f} "
              f"below floor {args.min_converged}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _parse_tile_arg(value):
    try:
        path, offsets = value.rsplit(":", 1)
        di, dj = (int(v) for v in offsets.split(","))
        return path, (di, dj)
    except ValueError:
        raise ConfigError(f"tile {value!r} must look like PATH:DI,DJ")


def cmd_stitch(args):
    outdir = _outdir(args)
    if args.verify:
        return _verify_manifest(outdir, args.name, "stitch")
    tiles = []
    for value in args.tile:
        path, offset = _parse_tile_arg(value)
        pmap = formats.read_field_map(path)
        if not isinstance(pmap, PolarizedFieldMap):
            raise ConfigError(f"{path} is not a polarized map")
        tiles.append((pmap, offset))
    if not tiles:
        raise ConfigError("stitch needs at least one --tile")
    try:
        composite = analysis.stitch(tiles, refine=args.refine)
    except ValueError as err:
        raise ConfigError(str(err))
    outputs = []
    formats.write_field_map(os.path.join(outdir, args.name + ".fmap"),
                            composite)
    outputs.append(_record_output(outdir, args.name + ".fmap"))
    scale = formats.write_pgm(os.path.join(outdir, args.name + ".pgm"),
                              composite.values)
    outputs.append(_record_output(outdir, args.name + ".pgm",
                                  pgm_scale_t=scale))
    _write_manifest(outdir, args.name, "stitch", args.name, None, outputs)
    print(f"stitch: composite {composite.grid.nx}x{composite.grid.ny} "
          f"written to {args.name}.fmap")
    return EXIT_OK


def cmd_contours(args):
    outdir = _outdir(args)
    base = os.path.splitext(os.path.basename(args.cube))[0]
    if args.verify:
        return _verify_manifest(outdir, base, "contours")
    cube = formats.read_cube(args.cube)
    k = args.frame if args.frame >= 0 else cube.n_frames + args.frame
    if not 0 <= k < cube.n_frames:
        raise ConfigError(f"frame {args.frame} outside 0..{cube.n_frames - 1}")
    contour_set = analysis.extract_contours(cube.frames[k],
                                            float(cube.dt_ns[k]),
                                            min_pixels=args.min_pixels)
    doc = {"dt_mw_ns": contour_set.dt_mw_ns,
           "parity": contour_set.parity,
           "frame": k,
           "ridges": [{"order_m": r.order_m,
                       "b_label_t": r.b_label,
                       "b_label_ut": r.b_label * 1e6,
                       "n_pixels": len(r.pixels),
                       "pixels": r.pixels.tolist()}
                      for r in contour_set.ridges]}
    outputs = []
    formats.atomic_write_bytes(
        os.path.join(outdir, base + ".contours.json"),
        json.dumps(doc, indent=2, sort_keys=True).encode() + b"\n")
    outputs.append(_record_output(outdir, base + ".contours.json"))
    _write_manifest(outdir, base, "contours", base, None, outputs)
    print(f"contours {base}: {len(doc['ridges'])} ridges at frame {k}")
    return EXIT_OK


def _device_current_a(device_doc):
    """Magnitude of the drive current named in a device document."""
    if "devices" in device_doc:
        for sub in device_doc["devices"]:
            value = _device_current_a(sub)
            if value is not None:
                return value
        return None
    current = device_doc.get("params", {}).get("current")
    if current is None:
        return None
    if isinstance(current, (list, tuple)):
        return float(np.hypot(current[0], current[1]))
    return abs(float(current))


def _line_cut_text(pmap):
    j_mid = pmap.grid.ny // 2
    lines = []
    for i in range(pmap.grid.nx):
        pos_um = (i + 0.5) * pmap.grid.pitch * 1e6
        lines.append(f"{pos_um:.3f} {pmap.values[i, j_mid] * 1e6:.6f}")
    return "\n".join(lines) + "\n", j_mid


def cmd_report(args):
    cfg = load_scenario(args.config)
    outdir = _outdir(args)
    if args.verify:
        return _verify_manifest(outdir, cfg.name, "report")
    stem = _component_filename(cfg.transition)
    map_path = os.path.join(outdir, f"{cfg.name}.{stem}.fmap")
    if not os.path.isfile(map_path):
        raise ConfigError(f"field map {map_path} not found; run simulate "
                          "first")
    pmap = formats.read_field_map(map_path)
    report = {"scenario": cfg.name, "component": cfg.transition,
              "version": __version__}

    positive = pmap.values[pmap.values > 0]
    report["field_stats"] = {
        "min_ut": float(positive.min()) * 1e6 if positive.size else 0.0,
        "median_ut": float(np.median(pmap.values)) * 1e6,
        "max_ut": float(pmap.values.max()) * 1e6,
    }
    if positive.size:
        report["dynamic_range_db"] = analysis.dynamic_range_db(
            float(positive.min()), float(pmap.values.max()))

    outputs = []
    cut_text, j_mid = _line_cut_text(pmap)
    cut_name = f"{cfg.name}.linecut.txt"
    formats.atomic_write_bytes(os.path.join(outdir, cut_name),
                               cut_text.encode())
    outputs.append(_record_output(outdir, cut_name, row_index=j_mid))
    report["line_cut"] = {"path": cut_name, "row_index": j_mid,
                          "columns": ["position_um", "field_ut"]}

    if cfg.report and "p_in_dbm" in cfg.report:
        current = cfg.report.get("current")
        if current is None:
            current = _device_current_a(cfg.device_doc)
        if current is None:
            raise ConfigError("report.p_in_dbm given but no drive current "
                              "found in device or report.current_a")
        p_sim, loss = analysis.insertion_loss_db(
            float(cfg.report["p_in_dbm"]), current,
            float(cfg.report.get("impedance_ohm", 50.0)))
        report["insertion_loss"] = {
            "p_in_dbm": float(cfg.report["p_in_dbm"]),
            "current_a": current,
            "impedance_ohm": float(cfg.report.get("impedance_ohm", 50.0)),
            "p_sim_dbm": p_sim, "loss_db": loss}

    if cfg.report and "sensitivity" in cfg.report:
        sdoc = cfg.report["sensitivity"]
        if cfg.dt_ns is None:
            raise ConfigError("report.sensitivity needs a scan section")
        n_rep = int(sdoc.get("n_repeats", 10))
        mode = ("single-exp" if sdoc.get("envelope", "single") == "single"
                else "double-exp")
        base_seed = (cfg.seed if cfg.seed is not None else 0) + 1000
        decay = cfg.decay
        if decay is None:
            decay = DecayParams(tau_fast_ns=float("inf"),
                                tau_slow_ns=float("inf"), weight_fast=0.5)
        cubes = [acquisition.simulate_cube(pmap, cfg.dt_ns, cfg.pulse,
                                           decay=decay, seed=base_seed + k)
                 for k in range(n_rep)]
        sens = analysis.amplitude_sensitivity(
            cubes, analysis.FitConfig(envelope_mode=mode),
            component=cfg.transition)
        report["sensitivity"] = {"n_repeats": n_rep,
                                 "t_per_sqrt_hz": sens,
                                 "ut_per_sqrt_hz": sens * 1e6}

    if cfg.trap is not None:
        region = cfg.trap.get("search_region_px")
        region = tuple(tuple(r) for r in region) if region else None
        trap = analysis.characterize_trap(pmap, search_region=region,
                                          arm=int(cfg.trap.get("arm_px", 5)))
        report["trap"] = {
            "position_px": list(trap.position_px),
            "position_um": [v * 1e6 for v in trap.position_m],
            "field_ut": trap.value * 1e6,
            # 1 T/m equals 1 uT/um, so the numbers carry over directly
            "gradients_ut_per_um": dict(trap.gradients),
        }

    json_name = f"{cfg.name}.report.json"
    formats.atomic_write_bytes(
        os.path.join(outdir, json_name),
        json.dumps(report, indent=2, sort_keys=True).encode() + b"\n")
    outputs.append(_record_output(outdir, json_name))

    text_lines = [f"scenario        {cfg.name}",
                  f"component       {cfg.transition}",
                  f"field min       {report['field_stats']['min_ut']:.3f} uT",
                  f"field median    {report['field_stats']['median_ut']:.3f}"
                  " uT",
                  f"field max       {report['field_stats']['max_ut']:.3f} uT"]
    if "dynamic_range_db" in report:
        text_lines.append(
            f"dynamic range   {report['dynamic_range_db']:.2f} dB")
    if "insertion_loss" in report:
        il = report["insertion_loss"]
        text_lines.append(f"p_sim           {il['p_sim_dbm']:.2f} dBm")
        text_lines.append(f"insertion loss  {il['loss_db']:.2f} dB")
    if "sensitivity" in report:
        text_lines.append(f"sensitivity     "
                          f"{report['sensitivity']['ut_per_sqrt_hz']:.4f}"
                          " uT/sqrt(Hz)")
    if "trap" in report:
        tr = report["trap"]
        text_lines.append(f"trap minimum    {tr['field_ut']:.3f} uT at px "
                          f"{tuple(tr['position_px'])}")
    text_name = f"{cfg.name}.report.txt"
    formats.atomic_write_bytes(os.path.join(outdir, text_name),
                               ("\n".join(text_lines) + "\n").encode())
    outputs.append(_record_output(outdir, text_name))
    _write_manifest(outdir, cfg.name, "report", cfg.name, cfg.source_bytes,
                    outputs)
    print("\n".join(text_lines))
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="nvscope",
        description="Microwave near-field imaging pipeline")
    parser.add_argument("--version", action="version",
                        version=f"nvscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True,
                           help="scenario JSON path or bundled name")
        p.add_argument("--output", "-o", default=".",
                       help="output directory (default: current)")
        p.add_argument("--verify", action="store_true",
                       help="verify the command's manifest instead of "
                            "running")

    p = sub.add_parser("simulate", help="device model to field maps")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("acquire", help="field map to contrast cube/stream")
    common(p)
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario noise seed")
    p.add_argument("--noiseless", action="store_true",
                   help="disable shot noise")
    p.add_argument("--field-map", default=None,
                   help="explicit polarized field map path")
    p.set_defaults(func=cmd_acquire)

    p = sub.add_parser("fit", help="fit a cube to a field map")
    common(p, config=False)
    p.add_argument("--cube", required=True, help="RCUB1 cube path")
    p.add_argument("--component", default="sigma-",
                   choices=["sigma+", "sigma-"],
                   help="component tag for the fitted map")
    p.add_argument("--envelope", default="double",
                   choices=["double", "single"])
    p.add_argument("--min-snr", type=float, default=6.0,
                   help="periodogram SNR detection floor")
    p.add_argument("--max-iter", type=int, default=400)
    p.add_argument("--min-converged", type=float, default=0.25,
                   help="exit 3 if the converged fraction falls below this")
    p.add_argument("--one-cycle-floor", action="store_true",
                   help="require at least one Rabi cycle within the scan")
    p.add_argument("--threads", type=int, default=None,
                   help="fit workers (default NVSCOPE_THREADS or 1)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("stitch", help="combine overlapping map tiles")
    common(p, config=False)
    p.add_argument("--tile", action="append", default=[],
                   metavar="PATH:DI,DJ",
                   help="tile map with its pixel offset; repeatable")
    p.add_argument("--refine", action="store_true",
                   help="refine offsets by cross-correlation")
    p.add_argument("--name", default="stitched",
                   help="output base name")
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("contours", help="iso-amplitude ridges of a frame")
    common(p, config=False)
    p.add_argument("--cube", required=True)
    p.add_argument("--frame", type=int, default=-1,
                   help="frame index (negative counts from the end)")
    p.add_argument("--min-pixels", type=int, default=8)
    p.set_defaults(func=cmd_contours)

    p = sub.add_parser("report", help="metrics and line-cut export")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VerificationError as err:
        print(f"verification failed: {err}", file=sys.stderr)
        return EXIT_VERIFY
    except (SegmentProximityError, analysis.NotConverged,
            analysis.TrapNotFound, analysis.NoOscillation) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, formats.FormatError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
