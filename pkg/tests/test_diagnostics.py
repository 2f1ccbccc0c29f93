import numpy as np
import pytest

from boltzlayer.diagnostics import (EllipticProblem, coercivity_multiple, dissipation_report,
                                    elliptic_solve, fit_decay, k_weight, time_derivative_field)
from boltzlayer.solver import RunConfig, SlabState, cell_centres, init_state, run_mode


def test_c_dirichlet_eigenfunction():
    errs = []
    for Nx in (32, 64, 128):
        sol = elliptic_solve(EllipticProblem("c-dirichlet", 0.0, lambda x: np.sin(np.pi * x),
                                             weight="none"), Nx)
        errs.append(np.abs(sol.phi - np.sin(np.pi * sol.x) / np.pi**2).max())
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize("kind", ["a-neumann", "b1-dirichlet", "b2-dirichlet", "b3-dirichlet",
                                  "c-dirichlet"])
def test_manufactured_second_order(kind):
    k = (0.6, 0.9)
    c0, D = EllipticProblem(kind, k, None).coefficients()
    exact = (lambda x: np.cos(np.pi * x)) if kind == "a-neumann" else \
        (lambda x: np.sin(np.pi * x))
    errs = []
    for Nx in (32, 64):
        p = EllipticProblem(kind, k, lambda x: (c0 + D * np.pi**2) * exact(x), weight="none")
        sol = elliptic_solve(p, Nx)
        errs.append(np.abs(sol.phi - exact(sol.x)).max())
    assert np.log2(errs[0] / errs[1]) > 1.9


def test_coefficients():
    p = EllipticProblem("b1-dirichlet", (1.0, 2.0), None)
    assert p.coefficients() == (6.0, 1.0)
    assert EllipticProblem("b3-dirichlet", (1.0, 2.0), None).coefficients() == (5.0, 2.0)
    with pytest.raises(ValueError):
        EllipticProblem("d-robin", (1.0, 0.0), None)


def test_neumann_constant_rhs():
    k = (0.5, 0.5)
    kk = 0.5
    g = 2.0
    sol = elliptic_solve(EllipticProblem("a-neumann", k, lambda x: g + 0 * x), 32)
    # (|k|^2) phi = |k|^2/(1+|k|^2) g
    np.testing.assert_allclose(sol.phi.real, g / (1 + kk), atol=1e-12)


def test_neumann_solvability():
    with pytest.raises(ValueError, match="zero-mean"):
        elliptic_solve(EllipticProblem("a-neumann", (0.0, 0.0), lambda x: 1.0 + x,
                                       weight="none"), 32)
    sol = elliptic_solve(EllipticProblem("a-neumann", (0.0, 0.0), lambda x: np.cos(np.pi * x),
                                         weight="none"), 64)
    assert np.abs(sol.phi - np.cos(np.pi * sol.x) / np.pi**2).max() < 2e-3


def test_small_grid_rejected():
    with pytest.raises(ValueError):
        elliptic_solve(EllipticProblem("c-dirichlet", 1.0, lambda x: x), 4)


def test_norm_bound_stable():
    ratios = []
    for Nx in (32, 64, 128):
        sol = elliptic_solve(EllipticProblem("c-dirichlet", (0.8, 0.0), lambda x: np.exp(x)), Nx)
        n = sol.norms
        ratios.append((n["k_phi"] + n["d_phi"]) / n["rhs"])
    assert abs(ratios[-1] - ratios[-2]) < 1e-2 * ratios[-1]


def test_k_weights():
    assert 0.99995 <= k_weight(100.0, "k1") <= 1.0
    assert k_weight(0.0, "k2") == 0.0
    assert k_weight(1.0, "k2") == pytest.approx(0.5)
    assert k_weight(3.0, "none") == 1.0
    with pytest.raises(ValueError):
        k_weight(1.0, "k7")


def test_fit_decay_exact_models():
    t = np.linspace(0, 20, 41)
    assert fit_decay(t, 2.5 * np.exp(-0.3 * t)).rate == pytest.approx(0.3, abs=1e-6)
    assert fit_decay(t, 1 / (1 + t), model="power").rate == pytest.approx(1.0, abs=1e-6)
    # scale equivariance
    a = fit_decay(t, np.exp(-0.2 * t) * (1 + 0.1 * np.sin(t)))
    b = fit_decay(t, 7.0 * np.exp(-0.2 * t) * (1 + 0.1 * np.sin(t)))
    assert a.rate == pytest.approx(b.rate, rel=1e-12)


def test_fit_decay_rejects():
    t = np.linspace(0, 1, 20)
    y = np.exp(-t)
    y[3] = 0
    with pytest.raises(ValueError):
        fit_decay(t, y)
    with pytest.raises(ValueError):
        fit_decay(t[:5], np.exp(-t[:5]))


def test_dissipation_report_equilibrium(op8):
    cfg = RunConfig(modes=[[0.0, 0.0]], Nx=8, dt=0.01, t_end=0.05, cadence=1,
                    initial={"kind": "zero"})
    traj = run_mode(init_state(cfg, op8.grid, (0.5, 0.0)), op8, cfg)
    rep = dissipation_report(traj)
    for key, col in rep.items():
        if key != "t":
            assert np.all(col == 0)


def test_dissipation_report_columns(op8):
    cfg = RunConfig(modes=[[0.0, 0.0]], Nx=16, dt=0.01, t_end=0.3, cadence=3,
                    initial={"kind": "maxwellian-perturbation", "a": "cos", "b": ["sin", 0, 0]})
    traj = run_mode(init_state(cfg, op8.grid, (1.0, 0.0)), op8, cfg)
    rep = dissipation_report(traj, sigma=1.9)
    assert np.all(rep["b1"] > 0)
    np.testing.assert_allclose(rep["tw_micro"], rep["micro"] * (1 + rep["t"]) ** 0.95)
    assert np.isfinite(coercivity_multiple(traj))


def test_time_derivative_equilibrium_and_phase(op8):
    g = op8.grid
    x = cell_centres(8)
    eq = SlabState(np.zeros(2), np.outer(np.ones(8), g.sqrt_mu).astype(complex), 0.0, g, x)
    assert np.abs(time_derivative_field(eq, op8)).max() < 1e-13
    k = np.array([0.3, -0.4])
    ker = SlabState(k, eq.values.copy(), 0.0, g, x)
    dt_f = time_derivative_field(ker, op8)
    expect = -1j * (g.nodes[:, 0] * k[0] + g.nodes[:, 1] * k[1]) * ker.values
    np.testing.assert_allclose(dt_f, expect, atol=1e-12)


def test_time_derivative_matches_centred_difference(op8):
    cfg = RunConfig(modes=[[0.5, 0.0]], Nx=16, dt=1e-4, t_end=1e-4, cadence=1,
                    initial={"kind": "maxwellian-perturbation", "a": "cos", "b": [0, 0, "sin"]})
    st = init_state(cfg, op8.grid, (0.5, 0.0))
    from boltzlayer.solver import CollisionPropagator, step
    prop = CollisionPropagator(op8, 1e-4)
    for n in range(20):
        step(st, op8, 1e-4, propagator=prop)
    f0 = st.values.copy()
    d = time_derivative_field(st, op8)
    step(st, op8, 1e-4, propagator=prop)
    fd = (st.values - f0) / 1e-4
    assert np.linalg.norm(fd - d) < 2e-2 * np.linalg.norm(d)
