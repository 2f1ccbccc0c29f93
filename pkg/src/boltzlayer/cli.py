"""Command-line entry point: ``boltzlayer <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (NaN),
4 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .characteristics import cycle_survival, survival_log2_bracket
from .collision import build_K, build_sphere, cache_dir, cache_path, metadata_hash, _meta
from .diagnostics import fit_decay
from .io import (ConfigError, config_to_dict, parse_config, read_trajectory,
                 write_trajectory)
from .solver import NumericalFailure, assemble_physical, simulate
from .velocity import build_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("boltzlayer")


def _dump(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _operator_for(cfg, cache_directory=None):
    vel = cfg.velocity
    grid = build_grid(vel["n"], vel["vmax"], vel["scheme"])
    sq = build_sphere(*cfg.sphere)
    return build_K(grid, sq, cache_directory=cache_directory)


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config, args.set)
    try:
        op = _operator_for(cfg, args.cache_dir)
    except ValueError as exc:
        raise ConfigError("velocity", str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = config_to_dict(cfg)
    op_hash = op.metadata.get("hash")
    trajs = simulate(cfg, op)
    files = []
    for i, (k, traj) in enumerate(trajs.items()):
        name = f"mode_{i:03d}"
        write_trajectory(traj, out / name, config=resolved, operator_hash=op_hash)
        files.append({"k": list(k), "stem": name})
    manifest = {"package_version": __version__, "config": resolved, "operator_hash": op_hash,
                "operator_fallback_rate": op.fallback_rate, "modes": files}
    _dump(manifest, out / "manifest.json")
    log.info("wrote %d mode(s) to %s", len(files), out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .checks import run_checks

    recs = run_checks(args.n, args.vmax, args.seed, args.cache_dir)
    for r in recs:
        mark = "PASS" if r["passed"] else "FAIL"
        print(f"{mark} {r['name']}: {r['value']:.3e} (threshold {r['threshold']:.1e})",
              file=sys.stderr)
    ok = all(r["passed"] for r in recs)
    _dump({"passed": ok, "checks": recs}, args.out)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_mc_cycles(args) -> int:
    if args.T0 <= 0:
        raise ConfigError("T0", "must be > 0")
    n = args.n if args.n is not None else math.ceil(args.T0 ** 1.25)
    res = cycle_survival(args.T0, n, args.samples, seed=args.seed, method=args.method)
    if args.bracket:
        lo, hi = survival_log2_bracket(args.T0, n)
        res["log2_bracket"] = [lo, hi]
    _dump(res, args.out)
    return EXIT_OK


def cmd_decay_fit(args) -> int:
    traj = read_trajectory(args.trajectory)
    if args.series not in ("l2_norm", "micro_dissipation", "boundary_dissipation"):
        raise ConfigError("series", "must be l2_norm, micro_dissipation or boundary_dissipation")
    window = tuple(args.window) if args.window else None
    fit = fit_decay(traj.times, getattr(traj, args.series), model=args.model, window=window)
    _dump({"k": [float(c) for c in traj.k], "rate": fit.rate, "residual": fit.residual,
           "window": list(fit.window), "model": fit.model, "series": args.series}, args.out)
    return EXIT_OK


def cmd_assemble(args) -> int:
    run = Path(args.run)
    man = json.loads((run / "manifest.json").read_text(encoding="utf-8"))
    cfg = man["config"]
    d = cfg["tangential_dim"]
    modes, times, x = {}, None, None
    for entry in man["modes"]:
        traj = read_trajectory(run / entry["stem"])
        key = tuple(float(c) for c in traj.k[:d])
        modes[key] = traj.moments
        times, x = traj.times, traj.x
    xbar = np.array([[float(c) for c in p.split(",")] for p in args.xbar])
    if xbar.shape[1] != d:
        raise ConfigError("xbar", f"each point needs {d} comma-separated coordinates")
    dk = cfg["mode_spacing"] if args.dk is None else args.dk
    field = assemble_physical(modes, xbar, dk=dk, real=True)  # (P, T, Nx, 5)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"xbar{i + 1}" for i in range(d)] + ["x3", "a", "b1", "b2", "b3", "c"])
        for p in range(xbar.shape[0]):
            for s, t in enumerate(times):
                for j, xj in enumerate(x):
                    w.writerow([repr(float(t))] + [repr(float(c)) for c in xbar[p]]
                               + [repr(float(xj))] + [repr(float(v)) for v in field[p, s, j]])
    return EXIT_OK


def cmd_cache_ops(args) -> int:
    d = Path(args.dir) if args.dir else cache_dir()
    if d is None:
        raise ConfigError("cache-dir", "set --dir or the BOLTZLAYER_CACHE_DIR variable")
    if args.action == "list":
        items = []
        for p in sorted(d.glob("collision-*.bin")):
            items.append({"file": p.name, "bytes": p.stat().st_size})
        _dump({"dir": str(d), "entries": items}, None)
    elif args.action == "build":
        grid = build_grid(args.n, args.vmax)
        sq = build_sphere(*args.sphere)
        op = build_K(grid, sq, cache_directory=d)
        _dump({"file": str(cache_path(grid, sq, d)), "hash": op.metadata["hash"],
               "fallback_rate": op.fallback_rate}, None)
    elif args.action == "path":
        grid = build_grid(args.n, args.vmax)
        sq = build_sphere(*args.sphere)
        _dump({"file": str(cache_path(grid, sq, d)),
               "hash": metadata_hash(_meta(grid, sq))}, None)
    elif args.action == "clear":
        removed = 0
        for p in d.glob("collision-*.bin"):
            p.unlink()
            removed += 1
        _dump({"removed": removed}, None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="boltzlayer", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the modes of a config and write trajectories")
    p.add_argument("config")
    p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. velocity.n=12")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--cache-dir", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--vmax", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("mc-cycles", help="Monte Carlo survival of diffuse bounce cycles")
    p.add_argument("--T0", type=float, required=True)
    p.add_argument("--n", type=int, default=None, help="bounces (default ceil(T0^1.25))")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("plain", "tilted"), default="plain",
                   help="tilted: importance sampling for the far tail")
    p.add_argument("--bracket", action="store_true", help="add deterministic log2 bounds")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_mc_cycles)

    p = sub.add_parser("decay-fit", help="fit a decay rate to a trajectory series")
    p.add_argument("trajectory")
    p.add_argument("--series", default="l2_norm")
    p.add_argument("--model", choices=("exponential", "power"), default="exponential")
    p.add_argument("--window", type=float, nargs=2, default=None)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_decay_fit)

    p = sub.add_parser("assemble", help="inverse Fourier sum of moment profiles")
    p.add_argument("run", help="output directory of simulate")
    p.add_argument("--xbar", action="append", required=True, metavar="X1[,X2]")
    p.add_argument("--dk", type=float, default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("cache-ops", help="inspect or manage the collision operator cache")
    p.add_argument("action", choices=("list", "build", "path", "clear"))
    p.add_argument("--dir", default=None)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--vmax", type=float, default=6.0)
    p.add_argument("--sphere", type=int, nargs=2, default=(8, 16))
    p.set_defaults(func=cmd_cache_ops)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
