"""Invariant suite behind the ``verify`` subcommand.

Each check returns a record ``{name, value, threshold, passed}``; the
suite is cheap enough to run on a coarse grid in well under a minute.
"""
from __future__ import annotations

import numpy as np

from . import boundary as bd
from .collision import build_K, gamma, null_space_basis
from .diagnostics import EllipticProblem, elliptic_solve, fit_decay
from .solver import SlabState, cell_centres, step, total_mass
from .velocity import GAUSSIAN_FUNCTIONALS, build_grid, gaussian_functional


def _rec(name, value, threshold, passed=None):
    value = float(value)
    ok = value <= threshold if passed is None else bool(passed)
    return {"name": name, "value": value, "threshold": float(threshold), "passed": ok}


def _rel_resid(op):
    B = null_space_basis(op.grid)
    LB = B @ op.L.T
    return float(np.max(np.linalg.norm(LB, axis=1) / np.linalg.norm(B, axis=1)))


def _sym_resid(op):
    s = np.sqrt(op.grid.weights)
    Ks = s[:, None] * op.K / s[None, :]
    return float(np.max(np.abs(Ks - Ks.T)) / np.max(np.abs(Ks)))


def _min_form(op, rng, trials=100):
    g = op.grid
    worst = np.inf
    for _ in range(trials):
        f = rng.standard_normal(g.size)
        worst = min(worst, g.inner(op.apply_L(f), f).real / g.norm(f) ** 2)
    return float(worst)


def _gamma_orth(op, rng, pairs=10):
    g = op.grid
    psi = null_space_basis(g)
    F = rng.standard_normal((pairs, g.size))
    G = rng.standard_normal((pairs, g.size))
    Q = gamma(op, F, G)
    worst = 0.0
    for p in range(pairs):
        for b in psi:
            r = abs(g.inner(Q[p], b)) / (g.norm(F[p]) * g.norm(G[p]) * g.norm(b))
            worst = max(worst, r)
    return worst


def _mass_drift(op, steps=200):
    g = op.grid
    Nx = 16
    x = cell_centres(Nx)
    prof = 1.0 + 0.5 * np.cos(np.pi * x) + 0.3 * x
    st = SlabState(np.zeros(2), np.outer(prof, g.sqrt_mu).astype(complex), 0.0, g, x)
    m0 = total_mass(st)
    for n in range(steps):
        step(st, op, 0.01, step_index=n)
    return abs(total_mass(st) - m0) / abs(m0)


def _elliptic_order():
    worst = np.inf
    k = (0.7, 0.4)
    for kind in ("a-neumann", "b1-dirichlet", "b2-dirichlet", "b3-dirichlet", "c-dirichlet"):
        errs = []
        for Nx in (32, 64):
            p = EllipticProblem(kind, k, _manufactured_rhs(kind, k), weight="none")
            sol = elliptic_solve(p, Nx)
            errs.append(np.max(np.abs(sol.phi - _manufactured_phi(kind, sol.x))))
        worst = min(worst, np.log2(errs[0] / errs[1]))
    return worst


def _manufactured_phi(kind, x):
    return np.cos(np.pi * x) if kind == "a-neumann" else np.sin(np.pi * x)


def _manufactured_rhs(kind, k):
    c0, D = EllipticProblem(kind, k, None).coefficients()
    return lambda x: (c0 + D * np.pi**2) * _manufactured_phi(kind, x)


def run_checks(n: int = 8, v_max: float = 5.0, seed: int = 0, cache_directory=None) -> list:
    rng = np.random.default_rng(seed)
    out = []
    g16 = build_grid(16, 6.0)
    worst = max(abs(gaussian_functional(g16, name) - val)
                for name, (_, val) in GAUSSIAN_FUNCTIONALS.items())
    out.append(_rec("gaussian_functionals", worst, 1e-5))
    op = build_K(build_grid(n, v_max), cache_directory=cache_directory)
    out.append(_rec("null_space_residual", _rel_resid(op), 1e-6))
    out.append(_rec("K_symmetry", _sym_resid(op), 1e-8))
    mf = _min_form(op, rng)
    out.append(_rec("L_form_lower_bound", -mf, 1e-10))
    out.append(_rec("gamma_orthogonality", _gamma_orth(op, rng), 1e-6))
    out.append(_rec("half_flux", max(abs(bd.half_flux(op.grid, w) - 1) for w in (bd.TOP, bd.BOTTOM)),
                    1e-14))
    f = rng.standard_normal(op.grid.size)
    flux = 0.0
    for w in (bd.TOP, bd.BOTTOM):
        tr = bd.TraceField.from_values(op.grid, w, f)
        flux = max(flux, abs(float(bd.wall_mass_flux(op.grid, w, tr.arriving, bd.p_gamma(tr)))))
    out.append(_rec("wall_mass_flux", flux, 1e-14))
    out.append(_rec("k0_mass_drift", _mass_drift(op), 1e-12))
    order = _elliptic_order()
    out.append(_rec("elliptic_order", order, 1.8, passed=order >= 1.8))
    try:
        elliptic_solve(EllipticProblem("a-neumann", (0.0, 0.0), lambda x: 1.0 + 0 * x, weight="none"), 32)
        out.append(_rec("neumann_solvability", 0.0, 0.0, passed=False))
    except ValueError:
        out.append(_rec("neumann_solvability", 0.0, 0.0, passed=True))
    t = np.linspace(0, 10, 50)
    fit = fit_decay(t, 3.0 * np.exp(-0.3 * t))
    out.append(_rec("decay_fit_recovery", abs(fit.rate - 0.3), 1e-6))
    return out
