import numpy as np
import pytest

from boltzlayer.macroscopic import (MomentField, basis, conservation_residuals, flux_functionals,
                                    from_moments, lambda_j, moments, project_P, theta_ij)
from boltzlayer.solver import RunConfig, init_state, run_mode


def test_moments_roundtrip(op8, rng):
    g = op8.grid
    coef = rng.standard_normal((4, 5))
    np.testing.assert_allclose(moments(g, from_moments(g, coef)), coef, atol=1e-12)


def test_projection_idempotent_and_orthogonal(op8, rng):
    g = op8.grid
    f = rng.standard_normal(g.size)
    Pf = project_P(g, f)
    np.testing.assert_allclose(project_P(g, Pf), Pf, atol=1e-12)
    for b in basis(g):
        assert abs(g.inner(f - Pf, b)) < 1e-12


def test_equilibrium_moments(op8):
    g = op8.grid
    np.testing.assert_allclose(moments(g, g.sqrt_mu), [1, 0, 0, 0, 0], atol=1e-13)
    # temperature perturbation (|v|^2-3)/2 sqrt(mu) has unit c
    np.testing.assert_allclose(moments(g, 0.5 * (g.speed2 - 3) * g.sqrt_mu), [0, 0, 0, 0, 1],
                               atol=1e-12)


def test_flux_functionals_vanish_on_kernel(op8, rng):
    g = op8.grid
    f = from_moments(g, rng.standard_normal(5))
    th, lam = flux_functionals(g, f)
    assert np.abs(th).max() < 1e-12 and np.abs(lam).max() < 1e-12


def test_theta_lambda_single_entries(op8):
    g = op8.grid
    v = g.nodes
    # <(v1 v2) sqrt(mu), v1 v2 sqrt(mu)> = E[v1^2 v2^2] = 1
    f = v[:, 0] * v[:, 1] * g.sqrt_mu
    assert theta_ij(g, f, 0, 1) == pytest.approx(1.0, abs=1e-10)
    # <(|v|^2-5) v1 sqrt(mu), v1 sqrt(mu)> = 5 - 5 = 0
    assert lambda_j(g, v[:, 0] * g.sqrt_mu, 0) == pytest.approx(0.0, abs=1e-10)


def test_moment_field(rng):
    coef = rng.standard_normal((7, 5))
    mf = MomentField.from_coefficients(coef, (0.1, 0.0))
    assert mf.b.shape == (3, 7)
    np.testing.assert_array_equal(mf.as_array(), coef)


def test_conservation_residuals_shrink_under_refinement(op8):
    # first-order transport: residuals fall roughly like dx
    worst = []
    for Nx, dt in ((16, 0.01), (32, 0.005)):
        cfg = RunConfig(modes=[[0.5, 0.0]], Nx=Nx, dt=dt, t_end=0.3, cadence=int(0.02 / dt),
                        track_energy=False)
        traj = run_mode(init_state(cfg, op8.grid, (0.5, 0.0)), op8, cfg)
        res = conservation_residuals(traj)
        assert res["momentum"].shape == (len(traj.times) - 2, 3)
        worst.append([res["mass"].max(), res["momentum"].max(), res["energy"].max()])
    ratio = np.array(worst[1]) / np.array(worst[0])
    assert np.all(ratio < 0.75)


def test_conservation_residuals_requires_series():
    class Empty:
        times = None
        moments = None
        theta = None
        lam = None
        dx = 0.1
    with pytest.raises(ValueError, match="times"):
        conservation_residuals(Empty())
