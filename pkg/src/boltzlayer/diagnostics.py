"""Post-processing: elliptic test-function solves, dissipation tables,
the time-derivative field and decay-rate fits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .collision import CollisionOperator, apply_L
from .solver import SlabState, phase_factor, transport_substep

ELLIPTIC_KINDS = ("a-neumann", "b1-dirichlet", "b2-dirichlet", "b3-dirichlet", "c-dirichlet")
K_WEIGHTS = ("k2", "k1", "khalf", "none")


def k_weight(k, name: str = "k2") -> float:
    """``|k|^2/(1+|k|^2)``, ``|k|/sqrt(1+|k|^2)``, ``|k|^(1/2)/(1+|k|^2)^(1/4)`` or 1."""
    kk = float(np.linalg.norm(np.atleast_1d(k)))
    if name == "k2":
        return kk**2 / (1.0 + kk**2)
    if name == "k1":
        return kk / np.sqrt(1.0 + kk**2)
    if name == "khalf":
        return np.sqrt(kk) / (1.0 + kk**2) ** 0.25
    if name == "none":
        return 1.0
    raise ValueError(f"unknown k-weight {name!r}; expected one of {K_WEIGHTS}")


@dataclass
class EllipticProblem:
    """``(c0 - D d^2/dx3^2) phi = weight(k) * rhs`` on (-1, 1).

    ``rhs`` is a callable of x3 or an array on the ``Nx + 1`` solver nodes.
    """

    kind: str
    k: tuple
    rhs: object
    weight: str = "k2"

    def __post_init__(self):
        if self.kind not in ELLIPTIC_KINDS:
            raise ValueError(f"unknown elliptic kind {self.kind!r}")

    def coefficients(self):
        k = np.atleast_1d(np.asarray(self.k, dtype=float))
        k1, k2 = (k[0], k[1]) if k.size > 1 else (k[0], 0.0)
        kk = k1 * k1 + k2 * k2
        return {"a-neumann": (kk, 1.0), "b1-dirichlet": (2 * k1 * k1 + k2 * k2, 1.0),
                "b2-dirichlet": (k1 * k1 + 2 * k2 * k2, 1.0), "b3-dirichlet": (kk, 2.0),
                "c-dirichlet": (kk, 1.0)}[self.kind]


@dataclass
class EllipticSolution:
    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    norms: dict = field(default_factory=dict)


def _trap_norm(u, dx):
    w = np.full(u.size, dx)
    w[0] = w[-1] = 0.5 * dx
    return float(np.sqrt(np.sum(w * np.abs(u) ** 2)))


def elliptic_solve(p: EllipticProblem, Nx: int, tol: float = 1e-10) -> EllipticSolution:
    """Second-order finite-difference solve on ``Nx + 1`` uniform nodes.

    Dirichlet kinds impose ``phi(+-1) = 0``; the Neumann kind uses mirrored
    ghost nodes.  At ``k = 0`` the Neumann problem is only solvable for
    zero-mean data; nonzero mean is rejected and otherwise the zero-mean
    solution is returned.
    """
    if Nx < 8:
        raise ValueError("Nx must be at least 8")
    c0, D = p.coefficients()
    x = np.linspace(-1.0, 1.0, Nx + 1)
    dx = 2.0 / Nx
    f = p.rhs(x) if callable(p.rhs) else np.asarray(p.rhs)
    if f.shape != x.shape:
        raise ValueError(f"rhs must have {Nx + 1} nodal values")
    f = k_weight(p.k, p.weight) * np.asarray(f, dtype=complex)
    s = D / dx**2
    if p.kind == "a-neumann":
        n = Nx + 1
        diag = np.full(n, c0 + 2 * s)
        lower = np.full(n - 1, -s)
        upper = np.full(n - 1, -s)
        upper[0] = -2 * s          # mirrored ghost at x = -1
        lower[-1] = -2 * s         # mirrored ghost at x = +1
        if c0 == 0.0:
            tw = np.full(n, dx)
            tw[0] = tw[-1] = 0.5 * dx
            mean = np.sum(tw * f) / 2.0
            if abs(mean) > tol * max(1.0, float(np.max(np.abs(f)))):
                raise ValueError("k = 0 Neumann problem needs zero-mean data "
                                 f"(mean of the data is {mean:.3e}); no solution exists")
            A = np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)
            # bordered system: A phi + lam * 1 = f, tw . phi = 0
            M = np.zeros((n + 1, n + 1))
            M[:n, :n] = A
            M[:n, n] = 1.0
            M[n, :n] = tw
            sol = np.linalg.solve(M, np.concatenate([f, [0.0]]))
            phi = sol[:n]
        else:
            ab = np.zeros((3, n))
            ab[0, 1:] = upper
            ab[1] = diag
            ab[2, :-1] = lower
            phi = solve_banded((1, 1), ab, f)
    else:
        n = Nx - 1
        if n < 1:
            raise ValueError("grid too small")
        ab = np.zeros((3, n))
        ab[0, 1:] = -s
        ab[1] = c0 + 2 * s
        ab[2, :-1] = -s
        if c0 == 0.0 and D == 0.0:
            raise ValueError("singular elliptic system")
        inner = solve_banded((1, 1), ab, f[1:-1])
        phi = np.concatenate([[0.0], inner, [0.0]])
    dphi = np.gradient(phi, dx, edge_order=2)
    d2 = np.empty_like(phi)
    d2[1:-1] = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / dx**2
    if p.kind == "a-neumann":
        d2[0] = 2 * (phi[1] - phi[0]) / dx**2
        d2[-1] = 2 * (phi[-2] - phi[-1]) / dx**2
    else:
        d2[0] = (c0 * phi[0] - f[0]) / D
        d2[-1] = (c0 * phi[-1] - f[-1]) / D
    kk = float(np.linalg.norm(np.atleast_1d(p.k)))
    norms = {"k_phi": kk * _trap_norm(phi, dx), "d_phi": _trap_norm(dphi, dx),
             "d2_phi": _trap_norm(d2, dx), "rhs": _trap_norm(f, dx)}
    return EllipticSolution(x, phi, dphi, d2, norms)


# -- dissipation ---------------------------------------------------------------

def _xnorm(u, dx):
    return np.sqrt(dx * np.sum(np.abs(u) ** 2, axis=-1))


def dissipation_report(traj, sigma: float = 1.9) -> dict:
    """Norm family of a trajectory at every sample.

    Columns: ``micro`` = ``||(I-P) f||_nu``; ``boundary`` =
    ``|(I-P_gamma) f|``; ``macro_weighted`` = ``|k|/sqrt(1+|k|^2) ||(a,b,c)||``;
    ``b3_weighted`` with ``|k|^(1/2)/(1+|k|^2)^(1/4)``; ``c_weighted`` with
    ``|k|^(1/4)/(1+|k|^2)^(1/8)``; unweighted ``b1``, ``b2``; and each of
    them times ``(1 + t)^(sigma/2)`` under the ``tw_`` prefix.
    """
    t = np.asarray(traj.times)
    M = np.asarray(traj.moments)
    dx = traj.dx
    kk = float(np.linalg.norm(traj.k))
    w1 = kk / np.sqrt(1 + kk**2)
    rows = {
        "t": t,
        "micro": np.asarray(traj.micro_dissipation),
        "boundary": np.sqrt(np.asarray(traj.boundary_dissipation)),
        "macro_weighted": w1 * np.sqrt(np.sum(_xnorm(np.moveaxis(M, -1, 1), dx) ** 2, axis=1)),
        "b3_weighted": np.sqrt(kk) / (1 + kk**2) ** 0.25 * _xnorm(M[..., 3], dx),
        "c_weighted": kk**0.25 / (1 + kk**2) ** 0.125 * _xnorm(M[..., 4], dx),
        "b1": _xnorm(M[..., 1], dx),
        "b2": _xnorm(M[..., 2], dx),
    }
    tw = (1.0 + t) ** (0.5 * sigma)
    for name in list(rows):
        if name != "t":
            rows["tw_" + name] = tw * rows[name]
    return rows


def coercivity_multiple(traj) -> float:
    """Fitted ratio of the time-integrated weighted macroscopic norm to the
    dissipation plus endpoint norms."""
    rep = dissipation_report(traj)
    t = rep["t"]
    integ = np.trapezoid if hasattr(np, "trapezoid") else np.trapz
    lhs = integ(rep["macro_weighted"] ** 2, t)
    rhs = integ(rep["micro"] ** 2 + rep["boundary"] ** 2, t) + traj.l2_norm[0] ** 2 \
        + traj.l2_norm[-1] ** 2
    return float(lhs / rhs)


# -- time derivative --------------------------------------------------------------

def time_derivative_field(state: SlabState, op: CollisionOperator, nonlinear: bool = False,
                          gamma_term=None) -> np.ndarray:
    """``-i v.k f - v3 d_x3 f - L f (+ Gamma_hat)`` with the solver's stencil.

    The transport part is the upwind flux difference with diffuse wall
    inflow, i.e. the spatial operator of the transport step.
    """
    f = state.values
    grid = state.grid
    tau = 1.0
    transport = transport_substep(f, grid, state.dx, tau) - f
    k = state.k
    ph = -1j * (grid.nodes[:, 0] * k[0] + grid.nodes[:, 1] * k[1])
    out = ph * f + transport / tau - apply_L(op, f)
    if nonlinear:
        if gamma_term is None:
            raise ValueError("nonlinear time derivative needs the Gamma_hat term")
        out = out + gamma_term
    return out


# -- decay fits -----------------------------------------------------------------------

@dataclass
class DecayFit:
    model: str
    rate: float
    residual: float
    window: tuple
    amplitude: float = 1.0


def fit_decay(t, values, model: str = "exponential", window=None) -> DecayFit:
    """Least-squares fit of ``log(value)`` against ``t`` or ``log(1 + t)``.

    ``rate`` is the exponential rate or the power-law exponent; ``residual``
    is the RMS misfit of the logarithm.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        window = (float(t[0]), float(t[-1]))
    sel = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(sel) < 8:
        raise ValueError("need at least 8 samples in the fit window")
    if np.any(y[sel] <= 0):
        raise ValueError("decay fit needs positive values in the window")
    if model == "exponential":
        X = t[sel]
    elif model in ("power", "power-law"):
        X = np.log1p(t[sel])
        model = "power-law"
    else:
        raise ValueError(f"unknown decay model {model!r}")
    Y = np.log(y[sel])
    slope, icpt = np.polyfit(X, Y, 1)
    res = float(np.sqrt(np.mean((Y - (slope * X + icpt)) ** 2)))
    return DecayFit(model, float(-slope), res, (float(window[0]), float(window[1])),
                    float(np.exp(icpt)))
