"""Configuration parsing and trajectory files.

Configs are strict JSON objects whose keys mirror :class:`RunConfig`.  A
trajectory is written as three files sharing a stem:

* ``<stem>.csv``: one row per sample with the time series columns
  (floats printed with ``repr`` so they read back bit-exactly);
* ``<stem>.profiles.bin``: moment, flux and optional snapshot arrays,
  a little-endian ``uint64`` header length, a JSON header, then raw
  ``<f8`` / ``<c16`` blocks in header order;
* ``<stem>.json``: the manifest (format version, mode, grid, resolved
  config, operator hash, SHA-256 of the two data files).
"""
from __future__ import annotations

import copy
import csv
from dataclasses import asdict, fields
import hashlib
import io as _io
import json
import math
from pathlib import Path
import struct
import warnings

import numpy as np

from .solver import RunConfig, Trajectory
from .velocity import SCHEMES

FORMAT = "boltzlayer-trajectory"
FORMAT_VERSION = 1
MOMENT_NAMES = ("a", "b1", "b2", "b3", "c")
SERIES = ("l2_norm", "micro_dissipation", "boundary_dissipation", "energy_defect", "l_form")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class TrajectoryFormatError(ValueError):
    pass


# -- config --------------------------------------------------------------------------

_VELOCITY_KEYS = {"n", "vmax", "scheme"}
_INITIAL_KEYS = {"kind", "a", "b", "c", "amplitude", "shift", "profile", "path"}
_DEFAULTS = {f.name: f for f in fields(RunConfig)}


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _require(cond, key, msg):
    if not cond:
        raise ConfigError(key, msg)


def _check_profile(val, key):
    ok = _is_num(val) or isinstance(val, str) or (
        isinstance(val, list) and all(_is_num(v) for v in val))
    _require(ok, key, "profile must be a number, a profile name or a list of numbers")


def validate_config(raw: dict) -> RunConfig:
    """Check every key of ``raw`` and return the resolved :class:`RunConfig`."""
    _require(isinstance(raw, dict), "<root>", "config must be a JSON object")
    unknown = sorted(set(raw) - set(_DEFAULTS))
    _require(not unknown, unknown[0] if unknown else "", "unknown key")
    _require("modes" in raw, "modes", "required")

    modes = raw["modes"]
    _require(isinstance(modes, list) and len(modes) > 0, "modes", "must be a non-empty list")
    for m in modes:
        _require(isinstance(m, list) and 1 <= len(m) <= 2 and all(_is_num(c) for c in m),
                 "modes", "each mode must be a list of one or two numbers")

    cfg = {}
    for name, f in _DEFAULTS.items():
        if name in raw:
            cfg[name] = copy.deepcopy(raw[name])
        elif name != "modes":
            cfg[name] = f.default_factory() if callable(f.default_factory) else f.default
    cfg["modes"] = [list(map(float, m)) for m in modes]

    td = cfg["tangential_dim"]
    _require(td in (1, 2) and _is_int(td), "tangential_dim", "must be 1 or 2")
    _require(all(len(m) <= td for m in cfg["modes"]), "modes",
             "mode length exceeds tangential_dim")
    _require(_is_int(cfg["Nx"]) and cfg["Nx"] >= 4, "Nx", "must be an integer >= 4")
    _require(_is_num(cfg["dt"]) and cfg["dt"] > 0, "dt", "must be > 0")
    _require(_is_num(cfg["t_end"]) and cfg["t_end"] > 0, "t_end", "must be > 0")
    _require(_is_int(cfg["cadence"]) and cfg["cadence"] >= 1, "cadence", "must be an integer >= 1")
    _require(_is_int(cfg["seed"]) and cfg["seed"] >= 0, "seed", "must be a nonnegative integer")
    _require(_is_num(cfg["theta"]) and 0 < cfg["theta"] < 0.25, "theta", "must lie in (0, 1/4)")
    _require(_is_num(cfg["mode_spacing"]) and cfg["mode_spacing"] > 0, "mode_spacing",
             "must be > 0")
    _require(_is_num(cfg["cfl"]) and 0 < cfg["cfl"] <= 1, "cfl", "must lie in (0, 1]")
    for b in ("nonlinear", "snapshots", "subcycle", "track_energy"):
        _require(isinstance(cfg[b], bool), b, "must be true or false")
    _require(cfg["transport"] in ("upwind", "minmod"), "transport", "must be upwind or minmod")
    _require(cfg["collision"] in ("exponential", "integrating-factor"), "collision",
             "must be exponential or integrating-factor")
    sp = cfg["sphere"]
    _require(isinstance(sp, (list, tuple)) and len(sp) == 2 and all(_is_int(c) and c >= 2
                                                                    for c in sp),
             "sphere", "must be two integers >= 2")
    cfg["sphere"] = [int(sp[0]), int(sp[1])]
    pr = cfg["probes"]
    _require(isinstance(pr, list) and len(pr) > 0 and all(_is_num(p) and -1 <= p <= 1
                                                          for p in pr),
             "probes", "must be a non-empty list of numbers in [-1, 1]")

    vel = cfg["velocity"]
    _require(isinstance(vel, dict), "velocity", "must be an object")
    bad = sorted(set(vel) - _VELOCITY_KEYS)
    _require(not bad, f"velocity.{bad[0]}" if bad else "", "unknown key")
    vel = {"n": 8, "vmax": 5.0, "scheme": "uniform-cartesian", **vel}
    _require(_is_int(vel["n"]) and vel["n"] >= 4 and vel["n"] % 2 == 0, "velocity.n",
             "must be an even integer >= 4")
    _require(_is_num(vel["vmax"]) and vel["vmax"] >= 4, "velocity.vmax", "must be >= 4")
    _require(vel["scheme"] in SCHEMES, "velocity.scheme", f"must be one of {SCHEMES}")
    vel["vmax"] = float(vel["vmax"])
    cfg["velocity"] = vel

    ini = cfg["initial"]
    _require(isinstance(ini, dict), "initial", "must be an object")
    bad = sorted(set(ini) - _INITIAL_KEYS)
    _require(not bad, f"initial.{bad[0]}" if bad else "", "unknown key")
    kind = ini.get("kind", "maxwellian-perturbation")
    _require(kind in ("zero", "maxwellian-perturbation", "microscopic-bump", "file"),
             "initial.kind", "unknown initial condition kind")
    if "amplitude" in ini:
        _require(_is_num(ini["amplitude"]), "initial.amplitude", "must be a number")
    for p in ("a", "c", "profile"):
        if p in ini:
            _check_profile(ini[p], f"initial.{p}")
            if isinstance(ini[p], list):
                _require(len(ini[p]) == cfg["Nx"], f"initial.{p}", "profile length must equal Nx")
    if "b" in ini:
        _require(isinstance(ini["b"], list) and len(ini["b"]) == 3, "initial.b",
                 "must hold three profiles")
        for bi in ini["b"]:
            _check_profile(bi, "initial.b")
    if kind == "file":
        _require(isinstance(ini.get("path"), str), "initial.path", "required for kind=file")

    if not cfg["subcycle"]:
        dx = 2.0 / cfg["Nx"]
        limit = cfg["cfl"] if cfg["transport"] == "upwind" else 0.5 * cfg["cfl"]
        _require(vel["vmax"] * cfg["dt"] / dx <= limit, "dt",
                 f"CFL number vmax*dt/dx exceeds {limit} with subcycle off")
    try:
        return RunConfig(**cfg)
    except ValueError as exc:  # pragma: no cover - caught above
        raise ConfigError("<root>", str(exc)) from exc


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings; values are JSON, else plain strings."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            if p not in node:
                node[p] = {}
            node = node[p]
            if not isinstance(node, dict):
                raise ConfigError(key, "cannot override inside a non-object")
        node[parts[-1]] = _parse_value(val)
    return out


def load_raw_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError("<path>", f"config file {path} does not exist")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError("<path>", f"config file {path} is not UTF-8") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"line {exc.lineno}: {exc.msg}") from exc


def parse_config(path, overrides=()) -> RunConfig:
    """Read, override and validate a JSON config."""
    return validate_config(apply_overrides(load_raw_config(path), overrides))


def config_to_dict(cfg: RunConfig) -> dict:
    """Fully resolved config as plain JSON-ready data."""
    d = asdict(cfg)
    d["sphere"] = list(d["sphere"])
    return d


# -- trajectories --------------------------------------------------------------------

def _columns(n_probes: int) -> list:
    cols = ["t"]
    for j in range(n_probes):
        for name in MOMENT_NAMES:
            cols += [f"{name}_re_p{j}", f"{name}_im_p{j}"]
    cols += list(SERIES) + ["mass_re", "mass_im"]
    return cols


def _fmt(x: float) -> str:
    return repr(float(x))


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _profiles_blob(traj: Trajectory) -> bytes:
    arrays = {"moments": np.asarray(traj.moments, dtype=complex),
              "theta": np.asarray(traj.theta, dtype=complex),
              "lam": np.asarray(traj.lam, dtype=complex)}
    if traj.snapshots is not None and len(traj.snapshots):
        arrays["snapshots"] = np.asarray(traj.snapshots, dtype=complex)
    header = {"arrays": [[k, list(v.shape), "<c16"] for k, v in arrays.items()]}
    hb = json.dumps(header, sort_keys=True).encode()
    buf = _io.BytesIO()
    buf.write(struct.pack("<Q", len(hb)))
    buf.write(hb)
    for v in arrays.values():
        buf.write(np.ascontiguousarray(v, dtype="<c16").tobytes())
    return buf.getvalue()


def _read_profiles(data: bytes) -> dict:
    if len(data) < 8:
        raise TrajectoryFormatError("profiles file is truncated (no header)")
    (hl,) = struct.unpack("<Q", data[:8])
    header = json.loads(data[8:8 + hl])
    pos = 8 + hl
    out = {}
    for name, shape, dtype in header["arrays"]:
        nbytes = 16 * int(np.prod(shape))
        if pos + nbytes > len(data):
            raise TrajectoryFormatError(f"profiles file is truncated inside {name!r}")
        out[name] = np.frombuffer(data[pos:pos + nbytes], dtype=dtype).reshape(shape).astype(complex)
        pos += nbytes
    return out


def trajectory_csv(traj: Trajectory) -> str:
    """CSV text of the sampled series (moments at the probe cells)."""
    idx = traj.probe_indices()
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_columns(len(idx)))
    M = np.asarray(traj.moments)
    for s in range(len(traj.times)):
        row = [_fmt(traj.times[s])]
        for i in idx:
            for q in range(5):
                row += [_fmt(M[s, i, q].real), _fmt(M[s, i, q].imag)]
        row += [_fmt(getattr(traj, name)[s]) for name in SERIES]
        mass = complex(traj.mass[s])
        row += [_fmt(mass.real), _fmt(mass.imag)]
        w.writerow(row)
    return buf.getvalue()


def write_trajectory(traj: Trajectory, path, config: dict | None = None,
                     operator_hash: str | None = None) -> Path:
    """Write ``<stem>.csv``, ``<stem>.profiles.bin`` and ``<stem>.json``.

    ``path`` may name the CSV file or the bare stem.  Returns the CSV path.
    """
    path = Path(path)
    stem = path.with_suffix("") if path.suffix == ".csv" else path
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_bytes = trajectory_csv(traj).encode()
    prof = _profiles_blob(traj)
    csv_path = stem.with_name(stem.name + ".csv")
    prof_path = stem.with_name(stem.name + ".profiles.bin")
    csv_path.write_bytes(csv_bytes)
    prof_path.write_bytes(prof)
    from . import __version__

    manifest = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "k": [float(c) for c in traj.k],
        "x": [float(c) for c in traj.x],
        "probes": [float(p) for p in traj.probes],
        "n_samples": len(traj.times),
        "columns": _columns(len(traj.probes)),
        "meta": {k: (v if not isinstance(v, np.generic) else v.item())
                 for k, v in sorted(traj.meta.items())},
        "config": config,
        "operator_hash": operator_hash,
        "sha256": {"csv": _sha(csv_bytes), "profiles": _sha(prof)},
    }
    stem.with_name(stem.name + ".json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path


def _parse_csv(text: str, path, ncols: int, expect_rows: int):
    lines = text.split("\n")
    if text and not text.endswith("\n"):
        raise TrajectoryFormatError(f"{path}:{len(lines)}: truncated line (no newline)")
    rows = []
    reader = csv.reader(_io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise TrajectoryFormatError(f"{path}:1: empty file")
    for lineno, row in enumerate(reader, start=2):
        if len(row) != ncols:
            raise TrajectoryFormatError(
                f"{path}:{lineno}: expected {ncols} fields, found {len(row)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise TrajectoryFormatError(f"{path}:{lineno}: {exc}") from exc
    if len(rows) != expect_rows:
        raise TrajectoryFormatError(
            f"{path}:{len(rows) + 2}: expected {expect_rows} samples, found {len(rows)}")
    return header, np.array(rows, dtype=float).reshape(len(rows), ncols)


def read_trajectory(path) -> Trajectory:
    """Inverse of :func:`write_trajectory`.

    Raises on a format-version mismatch or malformed data; warns when the
    manifest checksums do not match the data files.
    """
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".csv", ".json") else path
    man_path = stem.with_name(stem.name + ".json")
    manifest = json.loads(man_path.read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT or manifest.get("format_version") != FORMAT_VERSION:
        raise TrajectoryFormatError(
            f"{man_path}: format {manifest.get('format')!r} version "
            f"{manifest.get('format_version')!r}, expected {FORMAT!r} version {FORMAT_VERSION}")
    csv_path = stem.with_name(stem.name + ".csv")
    prof_path = stem.with_name(stem.name + ".profiles.bin")
    csv_bytes = csv_path.read_bytes()
    prof = prof_path.read_bytes()
    if _sha(csv_bytes) != manifest["sha256"]["csv"]:
        warnings.warn(f"{csv_path}: checksum differs from manifest", stacklevel=2)
    if _sha(prof) != manifest["sha256"]["profiles"]:
        warnings.warn(f"{prof_path}: checksum differs from manifest", stacklevel=2)
    cols = manifest["columns"]
    header, data = _parse_csv(csv_bytes.decode("utf-8"), csv_path, len(cols),
                              manifest["n_samples"])
    if header != cols:
        raise TrajectoryFormatError(f"{csv_path}:1: header does not match manifest columns")
    arrays = _read_profiles(prof)
    col = {c: j for j, c in enumerate(cols)}
    traj = Trajectory(np.array(manifest["k"]), np.array(manifest["x"]),
                      probes=list(manifest["probes"]), meta=dict(manifest["meta"]))
    traj.times = data[:, col["t"]]
    for name in SERIES:
        setattr(traj, name, data[:, col[name]])
    traj.mass = data[:, col["mass_re"]] + 1j * data[:, col["mass_im"]]
    traj.moments = arrays["moments"]
    traj.theta = arrays["theta"]
    traj.lam = arrays["lam"]
    traj.snapshots = arrays.get("snapshots")
    return traj


def read_manifest(path) -> dict:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".csv", ".json") else path
    return json.loads(stem.with_name(stem.name + ".json").read_text(encoding="utf-8"))
