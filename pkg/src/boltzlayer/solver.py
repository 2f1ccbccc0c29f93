"""Per-mode slab solver for the Fourier-reduced linearized Boltzmann system.

For each tangential frequency ``k`` the unknown ``f(t, x3, v)`` lives on
``Nx`` uniform cells of ``(-1, 1)`` times the velocity grid and solves

    d_t f + i (v1 k1 + v2 k2) f + v3 d_x3 f + L f = Gamma_hat(f, f)

with diffuse reflection at both walls.  One step is the Strang sequence
half phase, transport, collision, half phase.  Transport is a finite-volume
upwind (or minmod MUSCL) update whose wall inflow is the diffuse re-emission
of the same-step arriving face values, so the wall mass flux cancels
exactly.  The default collision update is the exact ``exp(-L dt)`` built
from the symmetric eigen-decomposition, restricted so that the collision
invariants are left untouched to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import boundary as bd
from .collision import CollisionOperator, apply_L, gamma_hat, null_space_basis, real_matmul
from .macroscopic import flux_functionals, moments, project_P
from .velocity import VelocityGrid, WeightFunction, weight_w


class NumericalFailure(RuntimeError):
    """Raised when a state becomes non-finite."""


@dataclass
class RunConfig:
    """Resolved run configuration (see :mod:`boltzlayer.io` for the JSON form)."""

    modes: list
    tangential_dim: int = 2
    Nx: int = 32
    velocity: dict = field(default_factory=lambda: {"n": 8, "vmax": 5.0,
                                                    "scheme": "uniform-cartesian"})
    sphere: tuple = (8, 16)
    dt: float = 0.01
    t_end: float = 1.0
    nonlinear: bool = False
    mode_spacing: float = 1.0
    initial: dict = field(default_factory=lambda: {"kind": "maxwellian-perturbation",
                                                   "a": "cos", "b": [0, 0, 0], "c": 0,
                                                   "amplitude": 1.0})
    theta: float = 0.1
    cadence: int = 10
    probes: list = field(default_factory=lambda: [0.0])
    snapshots: bool = False
    seed: int = 0
    transport: str = "upwind"
    cfl: float = 0.9
    subcycle: bool = True
    collision: str = "exponential"
    track_energy: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.tangential_dim not in (1, 2):
            raise ValueError("tangential_dim must be 1 or 2")


@dataclass
class SlabState:
    """Complex ``f(k, x3, v)`` on ``Nx`` cells times the velocity grid."""

    k: np.ndarray
    values: np.ndarray
    time: float
    grid: VelocityGrid
    x: np.ndarray

    @property
    def dx(self) -> float:
        return 2.0 / self.x.size

    def copy(self) -> "SlabState":
        return replace(self, values=self.values.copy(), k=self.k.copy())


def cell_centres(Nx: int) -> np.ndarray:
    dx = 2.0 / Nx
    return -1.0 + dx * (np.arange(Nx) + 0.5)


def _as_k(k, dim=2) -> np.ndarray:
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.size == 1:
        k = np.array([k[0], 0.0])
    if k.size != 2:
        raise ValueError("k must have one or two components")
    return k


# -- norms -----------------------------------------------------------------

def l2_norm2(state: SlabState) -> float:
    return float(state.dx * np.sum(np.abs(state.values) ** 2 @ state.grid.weights))


def l2_norm(state: SlabState) -> float:
    return math.sqrt(l2_norm2(state))


def total_mass(state: SlabState) -> complex:
    """``int <f, sqrt(mu)> dx3``."""
    g = state.grid
    return complex(state.dx * np.sum(state.values @ (g.weights * g.sqrt_mu)))


def micro_norm_nu(state: SlabState, op: CollisionOperator) -> float:
    """``||(I - P) f||_nu`` over the slab."""
    g = state.grid
    r = state.values - project_P(g, state.values)
    return math.sqrt(state.dx * float(np.sum(np.abs(r) ** 2 @ (g.weights * op.nu))))


def l_form(state: SlabState, op: CollisionOperator) -> float:
    """``Re <L f, f>`` over the slab."""
    g = state.grid
    Lf = apply_L(op, state.values)
    return float(state.dx * np.real(np.sum((Lf * np.conj(state.values)) @ g.weights)))


def weighted_sup(state: SlabState, wf: WeightFunction) -> float:
    return float(np.max(np.abs(state.values) * weight_w(state.grid.nodes, wf)))


# -- initial data ------------------------------------------------------------

def _profile(spec, x):
    if isinstance(spec, (int, float)):
        return np.full_like(x, float(spec))
    if isinstance(spec, str):
        table = {"cos": np.cos(0.5 * np.pi * x), "sin": np.sin(np.pi * x),
                 "uniform": np.ones_like(x), "zero": np.zeros_like(x),
                 "bump": np.exp(-8.0 * x * x)}
        if spec not in table:
            raise ValueError(f"unknown profile {spec!r}")
        return table[spec]
    arr = np.asarray(spec, dtype=float)
    if arr.shape != x.shape:
        raise ValueError(f"profile length {arr.size} does not match Nx={x.size}")
    return arr


def init_state(cfg: RunConfig, grid: VelocityGrid, k, ic: dict | None = None,
               wf: WeightFunction | None = None) -> SlabState:
    """Initial state for one mode.

    Kinds: ``zero``; ``maxwellian-perturbation`` with profiles ``a``,
    ``b`` (three entries) and ``c``; ``microscopic-bump``, a fixed
    non-hydrodynamic velocity profile ``(I - P)`` of an off-centre Gaussian
    times the ``profile`` in x3; ``file``, a ``.npy`` array of shape
    ``(Nx, N)``.  Profiles are numbers, names (``cos`` = cos(pi x/2),
    ``sin``, ``uniform``, ``bump``, ``zero``) or explicit lists.
    """
    ic = dict(cfg.initial if ic is None else ic)
    x = cell_centres(cfg.Nx)
    kind = ic.get("kind", "maxwellian-perturbation")
    amp = float(ic.get("amplitude", 1.0))
    N = grid.size
    if kind == "zero":
        vals = np.zeros((cfg.Nx, N), dtype=complex)
    elif kind == "maxwellian-perturbation":
        a = _profile(ic.get("a", 0.0), x)
        bs = ic.get("b", [0.0, 0.0, 0.0])
        if len(bs) != 3:
            raise ValueError("b must have three profiles")
        b = [_profile(bi, x) for bi in bs]
        c = _profile(ic.get("c", 0.0), x)
        v = grid.nodes
        quad = 0.5 * (grid.speed2 - 3.0)
        vals = (np.outer(a, np.ones(N)) + sum(np.outer(b[i], v[:, i]) for i in range(3))
                + np.outer(c, quad)) * grid.sqrt_mu
    elif kind == "microscopic-bump":
        shift = np.array(ic.get("shift", [0.7, 0.0, 0.4]))
        prof = _profile(ic.get("profile", "cos"), x)
        g = np.exp(-0.5 * np.sum((grid.nodes - shift) ** 2, axis=1)) * grid.sqrt_mu
        g = g - project_P(grid, g)
        g /= grid.norm(g)
        vals = np.outer(prof, g)
    elif kind == "file":
        vals = np.load(ic["path"])
        if vals.shape != (cfg.Nx, N):
            raise ValueError(f"initial file has shape {vals.shape}, expected {(cfg.Nx, N)}")
    else:
        raise ValueError(f"unknown initial condition kind {kind!r}")
    return SlabState(_as_k(k), amp * np.asarray(vals, dtype=complex), 0.0, grid, x)


# -- sub-steps -------------------------------------------------------------------

def phase_factor(grid: VelocityGrid, k, tau: float) -> np.ndarray:
    k = _as_k(k)
    return np.exp(-1j * tau * (grid.nodes[:, 0] * k[0] + grid.nodes[:, 1] * k[1]))


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _limited_slopes(f):
    # slopes in the cell interior, zero in the wall cells
    s = np.zeros_like(f)
    d = np.diff(f, axis=0)
    lim = _minmod(d[:-1].real, d[1:].real) + 1j * _minmod(d[:-1].imag, d[1:].imag)
    s[1:-1] = lim
    return s


def transport_substep(f: np.ndarray, grid: VelocityGrid, dx: float, tau: float,
                      scheme: str = "upwind") -> np.ndarray:
    """One forward-Euler finite-volume step of ``d_t f + v3 d_x f = 0``.

    Face values are upwind (``"upwind"``) or minmod-limited MUSCL
    (``"minmod"``).  At each wall the values of the velocities leaving the
    wall are ``P_gamma`` of the face values of the arriving velocities.
    """
    geo = bd.wall_geometry(grid)
    v3 = grid.nodes[:, 2]
    up, down = geo.up, geo.down
    Nx = f.shape[0]
    if scheme == "upwind":
        left_face = f          # value at the lower face of each cell, seen from inside
        right_face = f
    elif scheme == "minmod":
        s = _limited_slopes(f)
        left_face = f - 0.5 * s
        right_face = f + 0.5 * s
    else:
        raise ValueError(f"unknown transport scheme {scheme!r}")
    # face states on Nx + 1 faces
    face = np.empty((Nx + 1, f.shape[1]), dtype=f.dtype)
    face[1:-1, up] = right_face[:-1, up]
    face[1:-1, down] = left_face[1:, down]
    # bottom wall: arriving v3 < 0, leaving v3 > 0
    face[0, down] = left_face[0, down]
    Xb = face[0, down] @ geo.flux_weight[down]
    face[0, up] = Xb * geo.emit[up]
    # top wall: arriving v3 > 0, leaving v3 < 0
    face[-1, up] = right_face[-1, up]
    Xt = face[-1, up] @ geo.flux_weight[up]
    face[-1, down] = Xt * geo.emit[down]
    flux = face * v3
    return f - (tau / dx) * (flux[1:] - flux[:-1])


def transport_step(state: SlabState, dt: float, scheme: str = "upwind", cfl: float = 0.9,
                   subcycle: bool = True) -> int:
    """Advance transport by ``dt`` in place; returns the number of substeps."""
    grid = state.grid
    vmax3 = float(np.max(np.abs(grid.nodes[:, 2])))
    limit = cfl if scheme == "upwind" else 0.5 * cfl
    c = vmax3 * dt / state.dx
    m = 1
    if c > limit:
        if not subcycle:
            raise ValueError(f"CFL number {c:.3f} exceeds {limit} and subcycling is off")
        m = int(math.ceil(c / limit))
    tau = dt / m
    f = state.values
    for _ in range(m):
        f = transport_substep(f, grid, state.dx, tau, scheme)
    state.values = f
    return m


class CollisionPropagator:
    """``exp(-L dt)`` (or the integrating-factor variant) for a fixed ``dt``."""

    def __init__(self, op: CollisionOperator, dt: float, method: str = "exponential"):
        self.op = op
        self.dt = dt
        self.method = method
        g = op.grid
        self.sw = np.sqrt(g.weights)
        if method == "exponential":
            lam, V = op.spectrum
            Es = (V * np.exp(-dt * np.clip(lam, 0.0, None))) @ V.T
            # pin the invariants: Es = Pn + (I - Pn) Es (I - Pn)
            Q, _ = np.linalg.qr((null_space_basis(g) * self.sw).T)
            R = Es - (Es @ Q) @ Q.T
            R = R - Q @ (Q.T @ R)
            Es = R + Q @ Q.T
            # plain nodal values: E = W^-1/2 Es W^1/2 ; rows act as f @ E.T
            self.ET = np.ascontiguousarray((self.sw[:, None] * Es.T) / self.sw[None, :])
        elif method == "integrating-factor":
            nu = op.nu
            self.decay = np.exp(-nu * dt)
            self.gain = -np.expm1(-nu * dt) / nu
        else:
            raise ValueError(f"unknown collision method {method!r}")

    def apply(self, f: np.ndarray) -> np.ndarray:
        if self.method == "exponential":
            out = real_matmul(f, self.ET)
            # restore the invariant moments; the pinned matrix keeps them
            # only to rounding, and that error has a consistent sign
            return out + project_P(self.op.grid, f - out)
        Kf = real_matmul(f, self.op.K.T)
        return self.decay * f + self.gain * Kf


def step(state: SlabState, op: CollisionOperator, dt: float, *,
         propagator: CollisionPropagator | None = None, source=None,
         transport: str = "upwind", cfl: float = 0.9, subcycle: bool = True,
         phase: bool = True, transport_on: bool = True, collision_on: bool = True,
         step_index: int = 0) -> SlabState:
    """One Strang step, in place; returns the state for chaining.

    ``source`` is an explicit right-hand side (the nonlinear term) added as
    ``dt * source`` after the collision update.
    """
    grid = state.grid
    if phase:
        half = phase_factor(grid, state.k, 0.5 * dt)
        state.values = state.values * half
    if transport_on:
        transport_step(state, dt, transport, cfl, subcycle)
    if collision_on:
        prop = propagator or CollisionPropagator(op, dt)
        state.values = prop.apply(state.values)
    if source is not None:
        state.values = state.values + dt * source
    if phase:
        state.values = state.values * half
    state.time += dt
    if not np.all(np.isfinite(state.values)):
        raise NumericalFailure(f"non-finite state at step {step_index} (k={state.k.tolist()})")
    return state


# -- trajectories ------------------------------------------------------------------

@dataclass
class Trajectory:
    """Sampled time series of one mode."""

    k: np.ndarray
    x: np.ndarray
    times: list = field(default_factory=list)
    l2_norm: list = field(default_factory=list)
    micro_dissipation: list = field(default_factory=list)
    l_form: list = field(default_factory=list)
    boundary_dissipation: list = field(default_factory=list)
    energy_defect: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    moments: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    snapshots: list | None = None
    probes: list = field(default_factory=lambda: [0.0])
    meta: dict = field(default_factory=dict)

    @property
    def dx(self) -> float:
        return 2.0 / self.x.size

    def finalize(self) -> "Trajectory":
        for name in ("times", "l2_norm", "micro_dissipation", "l_form",
                     "boundary_dissipation", "energy_defect", "mass", "moments",
                     "theta", "lam"):
            setattr(self, name, np.asarray(getattr(self, name)))
        if self.snapshots is not None:
            self.snapshots = np.asarray(self.snapshots)
        return self

    def probe_indices(self) -> np.ndarray:
        return np.array([int(np.argmin(np.abs(self.x - p))) for p in self.probes])


def _record(traj: Trajectory, state: SlabState, op: CollisionOperator, defect: float,
            lf: float | None, snapshots: bool):
    g = state.grid
    traj.times.append(state.time)
    traj.l2_norm.append(l2_norm(state))
    traj.micro_dissipation.append(micro_norm_nu(state, op))
    traj.l_form.append(l_form(state, op) if lf is None else lf)
    traj.boundary_dissipation.append(bd.boundary_dissipation(state))
    traj.energy_defect.append(defect)
    traj.mass.append(total_mass(state))
    traj.moments.append(moments(g, state.values))
    th, lam = flux_functionals(g, state.values)
    traj.theta.append(th)
    traj.lam.append(lam)
    if snapshots:
        traj.snapshots.append(state.values.copy())


def energy_rate(state: SlabState, op: CollisionOperator) -> float:
    """``2 Re <L f, f> + |(I - P_gamma) f|^2_arriving``."""
    return 2.0 * l_form(state, op) + bd.boundary_dissipation(state)


def run_mode(state: SlabState, op: CollisionOperator, cfg: RunConfig,
             propagator: CollisionPropagator | None = None,
             n_steps: int | None = None) -> Trajectory:
    """Evolve one mode without the nonlinear term, recording a trajectory.

    The per-step energy defect is
    ``|f^{n+1}|^2 - |f^n|^2 + dt (r(f^n) + r(f^{n+1})) / 2`` with
    ``r = 2 Re <L f, f> + |(I - P_gamma) f|^2``; the value stored at a
    sample is the defect accumulated since the previous sample.
    """
    dt = cfg.dt
    prop = propagator or CollisionPropagator(op, dt, cfg.collision)
    n_steps = int(round(cfg.t_end / dt)) if n_steps is None else n_steps
    traj = Trajectory(state.k.copy(), state.x.copy(), probes=list(cfg.probes),
                      snapshots=[] if cfg.snapshots else None)
    track = cfg.track_energy
    e0 = l2_norm2(state)
    r0 = energy_rate(state, op) if track else 0.0
    _record(traj, state, op, 0.0, None, cfg.snapshots)
    acc = 0.0
    for n in range(n_steps):
        step(state, op, dt, propagator=prop, transport=cfg.transport, cfl=cfg.cfl,
             subcycle=cfg.subcycle, step_index=n)
        if track:
            e1 = l2_norm2(state)
            r1 = energy_rate(state, op)
            acc += e1 - e0 + 0.5 * dt * (r0 + r1)
            e0, r0 = e1, r1
        if (n + 1) % cfg.cadence == 0 or n + 1 == n_steps:
            _record(traj, state, op, acc, None, cfg.snapshots)
            acc = 0.0
    traj.meta.update(dt=dt, steps=n_steps, Nx=state.x.size)
    return traj.finalize()


def _mode_key(k, spacing, dim):
    kk = _as_k(k)[:dim] / spacing
    key = tuple(int(round(c)) for c in kk)
    if np.max(np.abs(np.asarray(key) - kk)) > 1e-9:
        raise ValueError(f"mode {k} is not on the lattice of spacing {spacing}")
    return key


def simulate(cfg: RunConfig, op: CollisionOperator, ic: dict | None = None) -> dict:
    """Run every mode of ``cfg``; returns ``{tuple(k): Trajectory}``.

    Without the nonlinear term the modes are independent.  With it, all
    modes advance together and the truncated convolution ``Gamma_hat`` of
    the states at the start of each step is added explicitly.  Nonlinear
    runs also step a linear shadow of each mode and record in ``meta`` the
    largest relative gap ``linear_departure`` between the two l2 norms, and
    ``min_F``, the smallest ``mu + sqrt(mu) f`` seen at ``xbar = 0``.
    """
    grid = op.grid
    prop = CollisionPropagator(op, cfg.dt, cfg.collision)
    out = {}
    modes = [tuple(float(c) for c in np.atleast_1d(k)) for k in cfg.modes]
    if not cfg.nonlinear:
        for k in modes:
            st = init_state(cfg, grid, k, ic)
            out[k] = run_mode(st, op, cfg, prop)
        return out

    dim = cfg.tangential_dim
    keys = {k: _mode_key(k, cfg.mode_spacing, dim) for k in modes}
    states = {k: init_state(cfg, grid, k, ic) for k in modes}
    shadow = {k: states[k].copy() for k in modes}
    vol = cfg.mode_spacing ** dim
    monitor = {"linear_departure": 0.0, "min_F": np.inf}

    def watch():
        phys = sum(states[k].values for k in modes).real * vol
        monitor["min_F"] = min(monitor["min_F"], float(np.min(grid.mu + grid.sqrt_mu * phys)))
        for k in modes:
            lin = l2_norm(shadow[k])
            if lin > 0:
                gap = abs(l2_norm(states[k]) - lin) / lin
                monitor["linear_departure"] = max(monitor["linear_departure"], gap)
    trajs = {k: Trajectory(states[k].k.copy(), states[k].x.copy(), probes=list(cfg.probes),
                           snapshots=[] if cfg.snapshots else None) for k in modes}
    n_steps = int(round(cfg.t_end / cfg.dt))
    dropped = {}
    for k in modes:
        _record(trajs[k], states[k], op, 0.0, None, cfg.snapshots)
    watch()
    acc = {k: 0.0 for k in modes}
    for n in range(n_steps):
        fm = {keys[k]: states[k].values for k in modes}
        G = gamma_hat(op, fm, dk=cfg.mode_spacing, report=dropped)
        for k in modes:
            st = states[k]
            e0 = l2_norm2(st)
            r0 = energy_rate(st, op) - 2.0 * _re_inner(st, G[keys[k]])
            step(st, op, cfg.dt, propagator=prop, source=G[keys[k]], transport=cfg.transport,
                 cfl=cfg.cfl, subcycle=cfg.subcycle, step_index=n)
            # the nonlinear power is only available at the left end point
            acc[k] += l2_norm2(st) - e0 + cfg.dt * r0
            step(shadow[k], op, cfg.dt, propagator=prop, transport=cfg.transport,
                 cfl=cfg.cfl, subcycle=cfg.subcycle, step_index=n)
        if (n + 1) % cfg.cadence == 0 or n + 1 == n_steps:
            watch()
            for k in modes:
                _record(trajs[k], states[k], op, acc[k], None, cfg.snapshots)
                acc[k] = 0.0
    for k in modes:
        trajs[k].meta.update(dt=cfg.dt, steps=n_steps, Nx=cfg.Nx, dropped_pairs=dropped.get(
            "dropped_pairs", 0), **monitor)
        out[k] = trajs[k].finalize()
    return out


def _re_inner(state: SlabState, g) -> float:
    return float(state.dx * np.real(np.sum((np.conj(state.values) * g) @ state.grid.weights)))


# -- physical space ----------------------------------------------------------------------

def assemble_physical(modes: dict, xbar, dk: float = 1.0, real: bool = True) -> np.ndarray:
    """Inverse Fourier sum ``sum_k f(k) exp(i k . xbar) dk^d`` at probe points.

    ``modes`` maps ``k`` tuples to arrays (any common shape, e.g. a slab
    state); ``xbar`` is ``(P, d)``.  With ``real=True`` the mode set must be
    closed under ``k -> -k`` and the real part is returned.
    """
    keys = list(modes)
    if not keys:
        raise ValueError("empty mode set")
    d = len(keys[0])
    xbar = np.atleast_2d(np.asarray(xbar, dtype=float))
    if xbar.shape[1] != d:
        xbar = xbar.reshape(-1, d)
    if real:
        kset = {tuple(round(c, 12) for c in k) for k in keys}
        for k in keys:
            if tuple(round(-c, 12) + 0.0 for c in k) not in kset:
                raise ValueError(f"mode set is not symmetric under k -> -k (missing {-np.array(k)})")
    first = np.asarray(modes[keys[0]])
    out = np.zeros((xbar.shape[0],) + first.shape, dtype=complex)
    for k in keys:
        ph = np.exp(1j * xbar @ np.asarray(k, dtype=float)) * dk**d
        out += np.multiply.outer(ph, np.asarray(modes[k]))
    return out.real if real else out


# -- mild formulation -------------------------------------------------------------------

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _interp_time_space(snaps, times, x, t, xq, vi):
    """Bilinear (time, x3) interpolation of snapshots at velocity index ``vi``."""
    j = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
    s = (t - times[j]) / (times[j + 1] - times[j])
    a = np.interp(xq, x, snaps[j][:, vi].real) + 1j * np.interp(xq, x, snaps[j][:, vi].imag)
    b = np.interp(xq, x, snaps[j + 1][:, vi].real) + 1j * np.interp(xq, x, snaps[j + 1][:, vi].imag)
    return (1 - s) * a + s * b


def _interp_rows(snaps, times, t):
    j = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
    s = (t - times[j]) / (times[j + 1] - times[j])
    return (1 - s) * snaps[j] + s * snaps[j + 1]


def duhamel_residual(traj: Trajectory, op: CollisionOperator, samples, *,
                     n_quad: int = 64, v3_min: float | None = None,
                     gamma_terms=None) -> dict:
    """Compare stored states with the mild (characteristic) formulation.

    For a sample ``(t, x3, v_index)`` the right side is, with
    ``phi = nu + i v.k`` and ``t_b`` the backward exit time,

    * ``exp(-phi t) f0(x3 - t v3)`` if ``t_b > t``, else
      ``exp(-phi t_b) P_gamma f(t - t_b)`` at the wall ``x_b``;
    * plus ``int exp(-phi (t-s)) (K f + Gamma)(s, x3 - (t-s) v3) ds`` over
      ``s`` in ``(max(0, t - t_b), t)``, by the trapezoid rule.

    Samples with ``|v3| < v3_min`` (default half the smallest grid
    ``|v3|``) are skipped.  Returns residual statistics and the values.
    """
    from .characteristics import backward_exit

    if traj.snapshots is None or len(traj.snapshots) < 2:
        raise ValueError("trajectory has no stored snapshots")
    grid = op.grid
    snaps = np.asarray(traj.snapshots)
    times = np.asarray(traj.times)
    x = traj.x
    k = _as_k(traj.k)
    v3_all = grid.nodes[:, 2]
    if v3_min is None:
        v3_min = 0.5 * float(np.min(np.abs(v3_all[v3_all != 0])))
    geo = bd.wall_geometry(grid)
    # K f at every snapshot
    Kf = real_matmul(snaps, op.K.T)
    if gamma_terms is not None:
        Kf = Kf + np.asarray(gamma_terms)
    # wall traces: arriving face values ~ boundary-cell values
    res, lhs_vals, skipped = [], [], 0
    for (t, xq, vi) in samples:
        v = grid.nodes[vi]
        v3 = v[2]
        if abs(v3) < v3_min:
            skipped += 1
            continue
        phi = op.nu[vi] + 1j * (v[0] * k[0] + v[1] * k[1])
        tb, xb = backward_exit(xq, v3)
        lhs = _interp_time_space(snaps, times, x, t, xq, vi)
        if tb > t:
            head = np.exp(-phi * t) * _interp_time_space(snaps, times, x, 0.0, xq - t * v3, vi)
            s0 = 0.0
        else:
            t1 = t - tb
            row = _interp_rows(snaps, times, t1)
            wall = bd.TOP if xb > 0 else bd.BOTTOM
            arr = row[-1][geo.arriving(wall)] if wall == bd.TOP else row[0][geo.arriving(wall)]
            fb = bd.arriving_flux(grid, wall, arr) * geo.emit[vi]
            head = np.exp(-phi * tb) * fb
            s0 = t1
        s = np.linspace(s0, t, n_quad + 1)
        vals = np.array([_interp_time_space(Kf, times, x, si, xq - (t - si) * v3, vi) for si in s])
        integ = _trapezoid(np.exp(-phi * (t - s)) * vals, s)
        rhs = head + integ
        res.append(abs(lhs - rhs))
        lhs_vals.append(abs(lhs))
    res = np.asarray(res)
    scale = float(np.max(np.abs(snaps[0]))) if snaps.size else 1.0
    return {"median": float(np.median(res)) if res.size else float("nan"),
            "max": float(np.max(res)) if res.size else float("nan"),
            "mean": float(np.mean(res)) if res.size else float("nan"),
            "relative_median": float(np.median(res)) / scale if res.size else float("nan"),
            "count": int(res.size), "skipped": skipped, "residuals": res}
