"""Macroscopic projection onto the collision invariants and the fluid moments.

The kernel of ``L`` is spanned by ``sqrt(mu)``, ``v_i sqrt(mu)`` and
``(|v|^2 - 3)/2 sqrt(mu)``.  Writing

    P f = (a + b.v + c (|v|^2 - 3)/2) sqrt(mu),

the coefficients ``(a, b1, b2, b3, c)`` are obtained from the discrete
inner products through the inverse Gram matrix of the basis, so ``P`` is an
exact orthogonal projection for the grid inner product.  On well resolved
grids the Gram matrix is ``diag(1, 1, 1, 1, 3/2)`` to rounding and the map
reduces to ``a = <f, sqrt mu>``, ``b_i = <f, v_i sqrt mu>``,
``c = 2/3 <f, (|v|^2-3)/2 sqrt mu>``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .velocity import VelocityGrid

def basis(grid: VelocityGrid) -> np.ndarray:
    """Rows ``sqrt(mu) * {1, v1, v2, v3, (|v|^2-3)/2}``."""
    sm = grid.sqrt_mu
    v = grid.nodes
    return np.vstack([sm, v[:, 0] * sm, v[:, 1] * sm, v[:, 2] * sm,
                      0.5 * (grid.speed2 - 3.0) * sm])


def _build_dual(grid):
    B = basis(grid)
    gram = (B * grid.weights) @ B.T
    # coef = D @ (w * f)
    return B, np.linalg.solve(gram, B)


def _dual(grid: VelocityGrid):
    return grid.cached("macro_dual", _build_dual)


def moments(grid: VelocityGrid, f) -> np.ndarray:
    """Coefficients ``(a, b1, b2, b3, c)`` of ``P f`` along the last axis."""
    _, D = _dual(grid)
    f = np.asarray(f)
    return (f * grid.weights) @ D.T


def project_P(grid: VelocityGrid, f) -> np.ndarray:
    """Orthogonal projection of ``f`` onto the collision invariants."""
    B, _ = _dual(grid)
    return moments(grid, f) @ B


def from_moments(grid: VelocityGrid, coef) -> np.ndarray:
    """Build ``(a + b.v + c (|v|^2-3)/2) sqrt(mu)`` from coefficients."""
    B, _ = _dual(grid)
    return np.asarray(coef) @ B


def theta_ij(grid: VelocityGrid, f, i: int, j: int):
    """``Theta_ij(f) = <(v_i v_j - 1) sqrt(mu), f>`` with 0-based ``i, j``."""
    v = grid.nodes
    psi = (v[:, i] * v[:, j] - 1.0) * grid.sqrt_mu
    return np.asarray(f) @ (grid.weights * psi)


def lambda_j(grid: VelocityGrid, f, j: int):
    """``Lambda_j(f) = <(|v|^2 - 5) v_j sqrt(mu), f> / 10`` with 0-based ``j``."""
    psi = (grid.speed2 - 5.0) * grid.nodes[:, j] * grid.sqrt_mu
    return 0.1 * (np.asarray(f) @ (grid.weights * psi))


def flux_functionals(grid: VelocityGrid, f):
    """``Theta`` (..., 3, 3) and ``Lambda`` (..., 3) of ``(I - P) f``."""
    g = np.asarray(f) - project_P(grid, f)
    v = grid.nodes
    sm = grid.sqrt_mu * grid.weights
    th = np.stack([np.stack([g @ ((v[:, i] * v[:, j] - 1.0) * sm) for j in range(3)], axis=-1)
                   for i in range(3)], axis=-2)
    lam = 0.1 * np.stack([g @ ((grid.speed2 - 5.0) * v[:, j] * sm) for j in range(3)], axis=-1)
    return th, lam


@dataclass
class MomentField:
    """Profiles ``a``, ``b`` (3, Nx) and ``c`` over the x3 cells of one mode."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    k: np.ndarray

    @classmethod
    def from_coefficients(cls, coef, k) -> "MomentField":
        coef = np.asarray(coef)
        return cls(coef[..., 0], np.moveaxis(coef[..., 1:4], -1, 0), coef[..., 4],
                   np.asarray(k, dtype=float))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.a[None], self.b, self.c[None]]).T


def _ddx(u, dx):
    # second-order central differences, one-sided at the walls
    return np.gradient(u, dx, axis=-1, edge_order=2)


def conservation_residuals(traj, k=None) -> dict:
    """Residual norms of the local conservation laws along a trajectory.

    With ``d_m = i k_m`` for the tangential directions and ``d_3 = d/dx3``:

    * mass:     ``d_t a + d_m b_m``
    * momentum: ``d_t b_i + d_i (a + c) + d_m Theta_im((I-P) f)``
    * energy:   ``d_t c + 2/3 d_m b_m + 10/3 d_m Lambda_m((I-P) f)``

    Time derivatives are centred differences of the stored samples and the
    x3 derivatives are centred differences on the cell centres.  Returns the
    sample times and the L2-in-x3 residual norms at interior samples
    (the momentum entry has shape ``(T-2, 3)``).
    """
    missing = [name for name in ("times", "moments", "theta", "lam", "dx")
               if getattr(traj, name, None) is None]
    if missing:
        raise ValueError(f"trajectory lacks the stored series: {', '.join(missing)}")
    k = np.asarray(traj.k if k is None else k, dtype=float).ravel()
    k1, k2 = (k[0], k[1]) if k.size > 1 else (k[0], 0.0)
    t = np.asarray(traj.times)
    if t.size < 3:
        raise ValueError("need at least three samples for centred time differences")
    M = np.asarray(traj.moments)          # (T, Nx, 5)
    th = np.asarray(traj.theta)           # (T, Nx, 3, 3)
    lam = np.asarray(traj.lam)            # (T, Nx, 3)
    dx = traj.dx
    dt_c = (t[2:] - t[:-2])[:, None]

    def dt(u):
        return (u[2:] - u[:-2]) / dt_c

    def div(vec):
        # vec (..., Nx, 3) -> (..., Nx)
        return 1j * k1 * vec[..., 0] + 1j * k2 * vec[..., 1] + _ddx(vec[..., 2], dx)

    a, b, c = M[..., 0], M[..., 1:4], M[..., 4]
    mass = dt(a) + div(b)[1:-1]
    p = a + c
    grad_p = np.stack([1j * k1 * p, 1j * k2 * p, _ddx(p, dx)], axis=-1)
    mom = np.stack([dt(b[..., i]) + grad_p[1:-1, :, i] + div(th[..., i, :])[1:-1]
                    for i in range(3)], axis=-1)
    energy = dt(c) + (2.0 / 3.0) * div(b)[1:-1] + (10.0 / 3.0) * div(lam)[1:-1]
    w = np.sqrt(dx)
    return {"times": t[1:-1],
            "mass": w * np.linalg.norm(mass, axis=1),
            "momentum": w * np.linalg.norm(mom, axis=1),
            "energy": w * np.linalg.norm(energy, axis=1)}
