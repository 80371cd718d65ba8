"""On-disk containers for field maps, image cubes and camera streams.

All containers share one framing: an ASCII magic line, a single-line
JSON header, then a raw little-endian binary payload. Headers are
written with sorted keys and compact separators so identical inputs
produce identical bytes. Writes go through a temp file and os.replace,
so a crash never leaves a half-written artifact at the target path.

FMAP1  field map; payload float32, row-major (pixel i is the slow
       index). kind "phasor" stores six values per pixel
       (re_x, im_x, re_y, im_y, re_z, im_z); kind "polarized" one.
RCUB1  contrast image cube; float32 frames in acquisition order, each
       frame row-major.
RSTR1  camera stream; per frame a float64 timestamp in ms followed by
       one row-major float32 frame.
PGM    plain 16-bit binary P5 (big-endian samples per the format),
       scaled so the map maximum hits 65535.
"""

import hashlib
import json
import os
import tempfile

import numpy as np

from nvscope.acquisition import CameraTiming, ImageCube, PulseParams
from nvscope.nearfield import FieldPhasorMap, GridSpec, PolarizedFieldMap

FMAP_MAGIC = b"FMAP1\n"
RCUB_MAGIC = b"RCUB1\n"
RSTR_MAGIC = b"RSTR1\n"


class FormatError(ValueError):
    """Malformed container; the message names the failing byte offset."""


def atomic_write_bytes(path, data):
    """Write bytes to path via a same-directory temp file and os.replace."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-",
                               suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _dump_header(doc):
    return json.dumps(doc, sort_keys=True,
                      separators=(",", ":")).encode() + b"\n"


def _read_framing(raw, magic, path):
    if raw[:len(magic)] != magic:
        raise FormatError(
            f"{path}: bad magic at byte 0, expected {magic!r}")
    end = raw.find(b"\n", len(magic))
    if end < 0:
        raise FormatError(
            f"{path}: unterminated JSON header at byte {len(magic)}")
    try:
        doc = json.loads(raw[len(magic):end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise FormatError(
            f"{path}: invalid JSON header at byte {len(magic)}: {err}")
    return doc, end + 1


def _expect_payload(raw, start, n_bytes, path):
    got = len(raw) - start
    if got != n_bytes:
        raise FormatError(
            f"{path}: payload at byte {start} expected {n_bytes} bytes, "
            f"got {got}")
    return raw[start:]


def grid_to_doc(grid):
    return {"origin_m": [float(v) for v in grid.origin],
            "axes": [[float(v) for v in ax] for ax in grid.axes],
            "nx": grid.nx, "ny": grid.ny, "pitch_m": grid.pitch}


def grid_from_doc(doc):
    return GridSpec(origin=np.array(doc["origin_m"], dtype=float),
                    axes=(np.array(doc["axes"][0], dtype=float),
                          np.array(doc["axes"][1], dtype=float)),
                    nx=int(doc["nx"]), ny=int(doc["ny"]),
                    pitch=float(doc["pitch_m"]))


def pulse_to_doc(pulse):
    if pulse is None:
        return None
    return {"laser_ns": pulse.laser_ns, "wait_ns": pulse.wait_ns,
            "n_shots": pulse.n_shots, "c0": pulse.c0,
            "counts_ref": pulse.counts_ref}


def pulse_from_doc(doc):
    if doc is None:
        return None
    return PulseParams(laser_ns=doc["laser_ns"], wait_ns=doc["wait_ns"],
                       n_shots=int(doc["n_shots"]), c0=doc["c0"],
                       counts_ref=doc["counts_ref"])


# ----------------------------------------------------------------- FMAP1

def write_field_map(path, fmap):
    """Serialize a phasor or polarized field map to an FMAP1 file."""
    if isinstance(fmap, FieldPhasorMap):
        doc = {"format": "FMAP1", "kind": "phasor",
               "grid": grid_to_doc(fmap.grid),
               "dtype": "float32", "order": "row-major"}
        nx, ny = fmap.grid.nx, fmap.grid.ny
        buf = np.empty((nx, ny, 3, 2), dtype="<f4")
        buf[..., 0] = fmap.values.real
        buf[..., 1] = fmap.values.imag
    elif isinstance(fmap, PolarizedFieldMap):
        doc = {"format": "FMAP1", "kind": "polarized",
               "component": fmap.component,
               "grid": grid_to_doc(fmap.grid),
               "dtype": "float32", "order": "row-major"}
        buf = fmap.values.astype("<f4")
    else:
        raise TypeError("expected FieldPhasorMap or PolarizedFieldMap")
    atomic_write_bytes(path, FMAP_MAGIC + _dump_header(doc) + buf.tobytes())


def read_field_map(path):
    """Load an FMAP1 file; returns FieldPhasorMap or PolarizedFieldMap."""
    with open(path, "rb") as fh:
        raw = fh.read()
    doc, start = _read_framing(raw, FMAP_MAGIC, path)
    if doc.get("dtype") != "float32":
        raise FormatError(f"{path}: unsupported dtype {doc.get('dtype')!r}")
    grid = grid_from_doc(doc["grid"])
    nx, ny = grid.nx, grid.ny
    kind = doc.get("kind")
    if kind == "phasor":
        payload = _expect_payload(raw, start, nx * ny * 6 * 4, path)
        flat = np.frombuffer(payload, dtype="<f4").reshape(nx, ny, 3, 2)
        values = flat[..., 0].astype(float) + 1j * flat[..., 1].astype(float)
        return FieldPhasorMap(grid=grid, values=values)
    if kind == "polarized":
        payload = _expect_payload(raw, start, nx * ny * 4, path)
        values = np.frombuffer(payload, dtype="<f4").reshape(nx, ny)
        return PolarizedFieldMap(grid=grid, component=doc["component"],
                                 values=values.astype(float))
    raise FormatError(f"{path}: unknown field map kind {kind!r}")


# ----------------------------------------------------------------- RCUB1

def write_cube(path, cube):
    doc = {"format": "RCUB1",
           "grid": grid_to_doc(cube.grid),
           "dt_ns": [float(v) for v in cube.dt_ns],
           "pulse": pulse_to_doc(cube.pulse),
           "seed": cube.seed,
           "dtype": "float32", "order": "frame-major"}
    buf = cube.frames.astype("<f4")
    atomic_write_bytes(path, RCUB_MAGIC + _dump_header(doc) + buf.tobytes())


def read_cube(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    doc, start = _read_framing(raw, RCUB_MAGIC, path)
    if doc.get("dtype") != "float32":
        raise FormatError(f"{path}: unsupported dtype {doc.get('dtype')!r}")
    grid = grid_from_doc(doc["grid"])
    dt = np.array(doc["dt_ns"], dtype=float)
    n = len(dt) * grid.nx * grid.ny * 4
    payload = _expect_payload(raw, start, n, path)
    frames = np.frombuffer(payload, dtype="<f4").reshape(
        len(dt), grid.nx, grid.ny).astype(float)
    seed = doc.get("seed")
    return ImageCube(grid=grid, dt_ns=dt, frames=frames,
                     pulse=pulse_from_doc(doc.get("pulse")),
                     seed=None if seed is None else int(seed))


# ----------------------------------------------------------------- RSTR1

def write_stream(path, grid, dt_mw_ns, frames, timing=None, rows=None,
                 schedule=None, pulse=None, seed=None):
    """Serialize a timestamped frame sequence to an RSTR1 file.

    frames is a list of (timestamp_ms, array) pairs as produced by
    simulate_stream.
    """
    doc = {"format": "RSTR1",
           "grid": grid_to_doc(grid),
           "dt_mw_ns": float(dt_mw_ns),
           "n_frames": len(frames),
           "timing": None if timing is None else
           {"row_time_us": timing.row_time_us,
            "overhead_us": timing.overhead_us},
           "rows": rows,
           "schedule": schedule,
           "pulse": pulse_to_doc(pulse),
           "seed": seed,
           "dtype": "float32", "order": "frame-major"}
    parts = [RSTR_MAGIC, _dump_header(doc)]
    for ts, frame in frames:
        parts.append(np.float64(ts).astype("<f8").tobytes())
        parts.append(np.asarray(frame).astype("<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_stream(path):
    """Load an RSTR1 file; returns (header doc, [(timestamp_ms, frame)])."""
    with open(path, "rb") as fh:
        raw = fh.read()
    doc, start = _read_framing(raw, RSTR_MAGIC, path)
    grid = grid_from_doc(doc["grid"])
    n_frames = int(doc["n_frames"])
    frame_bytes = grid.nx * grid.ny * 4
    n = n_frames * (8 + frame_bytes)
    payload = _expect_payload(raw, start, n, path)
    frames = []
    pos = 0
    for _ in range(n_frames):
        ts = float(np.frombuffer(payload[pos:pos + 8], dtype="<f8")[0])
        pos += 8
        frame = np.frombuffer(payload[pos:pos + frame_bytes],
                              dtype="<f4").reshape(grid.nx, grid.ny)
        pos += frame_bytes
        frames.append((ts, frame.astype(float)))
    if doc.get("timing") is not None:
        doc = dict(doc)
        doc["timing"] = CameraTiming(
            row_time_us=doc["timing"]["row_time_us"],
            overhead_us=doc["timing"]["overhead_us"])
    return doc, frames


# ------------------------------------------------------------------- PGM

def write_pgm(path, values):
    """Render a nonnegative 2D array as a max-scaled 16-bit binary PGM.

    Returns the physical value mapped to 65535 (0.0 for an all-zero
    map). Rows of the array become raster rows.
    """
    a = np.asarray(values, dtype=float)
    if a.ndim != 2:
        raise ValueError("PGM export needs a 2D array")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError("PGM export needs finite nonnegative values")
    top = float(a.max())
    if top > 0:
        pix = np.round(a / top * 65535.0).astype(">u2")
    else:
        pix = np.zeros(a.shape, dtype=">u2")
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode()
    atomic_write_bytes(path, header + pix.tobytes())
    return top


def read_pgm(path):
    """Load a 16-bit binary PGM written by write_pgm; returns uint16 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:3] != b"P5\n":
        raise FormatError(f"{path}: bad magic at byte 0, expected b'P5'")
    end = raw.find(b"\n", 3)
    end = raw.find(b"\n", end + 1)
    if end < 0:
        raise FormatError(f"{path}: truncated header")
    fields = raw[3:end].split()
    w, h, maxval = (int(v) for v in fields)
    if maxval != 65535:
        raise FormatError(f"{path}: expected 16-bit maxval, got {maxval}")
    payload = _expect_payload(raw, end + 1, w * h * 2, path)
    return np.frombuffer(payload, dtype=">u2").reshape(h, w)
