"""Hard-sphere linearized collision operator on a velocity grid.

The linearized operator is assembled from the symmetric quadratic form

    <L f, g> = 1/4 iiint |(v-u).omega| mu(v) mu(u) (dh)(dk) dv du domega,
    dh = h(v) + h(u) - h(v') - h(u'),   h = f / sqrt(mu),

with the off-grid values ``h(v') + h(u')`` replaced by a two-pair convex
stencil that conserves mass, momentum and energy exactly.  As a result the
weight-symmetrized ``L`` is symmetric, positive semidefinite, and has the five
collision invariants in its null space to rounding.  The collision
frequency ``nu`` is computed by direct grid times sphere quadrature and
``K = nu - L``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import hashlib
import json
import logging
import os
from pathlib import Path
import struct
import time

import numpy as np

from . import _kernels
from .velocity import VelocityGrid, WeightFunction, build_grid, weight_w

log = logging.getLogger(__name__)

SCHEME_TAG = "pair-stencil-gram-v1"
CACHE_ENV = "BOLTZLAYER_CACHE_DIR"


@dataclass(frozen=True)
class SphereQuadrature:
    """Product Gauss-Legendre (in cos theta) times uniform (in phi) rule."""

    directions: np.ndarray
    weights: np.ndarray
    n_theta: int
    n_phi: int

    def half(self):
        """Directions with ``omega_3 > 0`` and their weights.

        Every collision integrand is even in ``omega``, so a full-sphere sum
        is twice the half-sphere sum.
        """
        sel = self.directions[:, 2] > 0
        return self.directions[sel], self.weights[sel]


def build_sphere(n_theta: int = 8, n_phi: int = 16) -> SphereQuadrature:
    """Antipodal-symmetric product rule on the unit sphere.

    ``n_theta`` must be even (so no node sits on the equator) and ``n_phi``
    even (so that ``phi + pi`` is a node whenever ``phi`` is).
    """
    if n_theta < 2 or n_theta % 2 or n_phi < 2 or n_phi % 2:
        raise ValueError("sphere orders must be even and at least 2")
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = (np.arange(n_phi) + 0.5) * 2.0 * np.pi / n_phi
    ct = np.repeat(x, n_phi)
    st = np.sqrt(1.0 - ct**2)
    ph = np.tile(phi, n_theta)
    dirs = np.column_stack([st * np.cos(ph), st * np.sin(ph), ct])
    wts = np.repeat(w, n_phi) * (2.0 * np.pi / n_phi)
    return SphereQuadrature(dirs, wts, n_theta, n_phi)


def post_collision(v, u, omega):
    """Post-collision pair ``v' = v + ((u-v).w) w``, ``u' = u - ((u-v).w) w``."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise ValueError("omega must be a unit vector")
    s = np.dot(u - v, omega)
    return v + s * omega, u - s * omega


def _index_data(grid: VelocityGrid):
    n = grid.n_per_axis
    m = np.arange(n)
    M0, M1, M2 = np.meshgrid(m, m, m, indexing="ij")
    midx = np.column_stack([M0.ravel(), M1.ravel(), M2.ravel()]).astype(np.int64)
    energy = np.sum((2 * midx - (n - 1)) ** 2, axis=1).astype(np.int64)
    return midx, energy


def _check_grid(grid: VelocityGrid):
    if grid.scheme != "uniform-cartesian":
        raise ValueError("the collision build needs a uniform cartesian grid; "
                         "post-collision velocities land off Hermite nodes")
    refl = grid.reflection_index
    if (np.max(np.abs(grid.nodes[refl] + grid.nodes)) > 1e-12
            or np.max(np.abs(grid.weights[refl] - grid.weights)) > 1e-15 * np.max(grid.weights)):
        raise ValueError("velocity grid is not symmetric under v -> -v")


def collision_frequency(grid: VelocityGrid, sq: SphereQuadrature, points=None) -> np.ndarray:
    """Collision frequency ``nu(v) = iint |(v-u).omega| mu(u) domega du``.

    Evaluated by grid times sphere quadrature at the grid nodes, or at
    arbitrary ``points`` of shape ``(M, 3)``.
    """
    pts = grid.nodes if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    return _kernels.collision_frequency_at(np.ascontiguousarray(pts), grid.nodes,
                                           grid.weights, grid.mu, sq.directions, sq.weights)


def collision_frequency_radial(grid: VelocityGrid, points=None) -> np.ndarray:
    """Cross-check ``nu(v) = 2 pi sum_u w mu(u) |v - u|``."""
    pts = grid.nodes if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(pts.shape[0])
    for a in range(0, pts.shape[0], 256):
        d = np.linalg.norm(pts[a:a + 256, None, :] - grid.nodes[None], axis=-1)
        out[a:a + 256] = 2.0 * np.pi * d @ (grid.weights * grid.mu)
    return out


@dataclass
class CollisionOperator:
    """Assembled ``nu`` and ``K`` on a grid; ``L = diag(nu) - K``.

    ``K`` acts on plain nodal values: ``(K f)_i = sum_j K[i, j] f_j``.
    """

    grid: VelocityGrid
    sphere: SphereQuadrature
    nu: np.ndarray
    K: np.ndarray
    metadata: dict = field(default_factory=dict)

    @cached_property
    def L(self) -> np.ndarray:
        L = -self.K.copy()
        L[np.diag_indices_from(L)] += self.nu
        return L

    @cached_property
    def L_sym(self) -> np.ndarray:
        """``W^(1/2) L W^(-1/2)``, symmetric in the plain Euclidean product."""
        s = np.sqrt(self.grid.weights)
        Ls = s[:, None] * self.L / s[None, :]
        return 0.5 * (Ls + Ls.T)

    @cached_property
    def spectrum(self):
        """Eigen-decomposition of :attr:`L_sym` (ascending eigenvalues)."""
        return np.linalg.eigh(self.L_sym)

    @property
    def fallback_rate(self) -> float:
        """Fraction of the collision rate whose post-collision pair left the grid."""
        return self.metadata.get("fallback_rate", 0.0)

    def apply_L(self, f):
        return apply_L(self, f)


def real_matmul(f, MT) -> np.ndarray:
    """``f @ MT`` for complex ``f`` and real ``MT`` through one real BLAS call."""
    f = np.asarray(f)
    if not np.iscomplexobj(f):
        return f @ MT
    shape = f.shape
    f2 = f.reshape(-1, shape[-1])
    m = f2.shape[0]
    out = np.concatenate([f2.real, f2.imag], axis=0) @ MT
    return (out[:m] + 1j * out[m:]).reshape(shape[:-1] + (MT.shape[1],))


def apply_L(op: CollisionOperator, f) -> np.ndarray:
    """``L f = nu f - K f``; ``f`` may carry leading batch axes."""
    f = np.asarray(f)
    return op.nu * f - real_matmul(f, op.K.T)


def _meta(grid: VelocityGrid, sq: SphereQuadrature) -> dict:
    return {"scheme": SCHEME_TAG, "velocity": grid.metadata(),
            "sphere": [sq.n_theta, sq.n_phi], "diag_exclusion": 0.0}


def metadata_hash(meta: dict) -> str:
    return hashlib.sha256(json.dumps(meta, sort_keys=True).encode()).hexdigest()


def cache_dir() -> Path | None:
    d = os.environ.get(CACHE_ENV)
    return Path(d) if d else None


def save_operator(op: CollisionOperator, path) -> None:
    """Binary cache: uint64 header length, JSON header, then nu and K as float64."""
    header = json.dumps(op.metadata, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(op.nu, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(op.K, dtype="<f8").tobytes())


def load_operator(path, grid: VelocityGrid, sq: SphereQuadrature) -> CollisionOperator:
    with open(path, "rb") as fh:
        (hl,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(hl))
        N = grid.size
        nu = np.frombuffer(fh.read(8 * N), dtype="<f8").astype(float)
        K = np.frombuffer(fh.read(8 * N * N), dtype="<f8").astype(float).reshape(N, N)
    if meta.get("hash") != metadata_hash(_meta(grid, sq)):
        raise ValueError(f"cache file {path} does not match the requested grid/sphere")
    if K.shape != (N, N) or nu.shape != (N,):
        raise ValueError(f"cache file {path} is truncated")
    return CollisionOperator(grid, sq, nu, K, meta)


def cache_path(grid: VelocityGrid, sq: SphereQuadrature, directory=None) -> Path | None:
    directory = Path(directory) if directory is not None else cache_dir()
    if directory is None:
        return None
    return directory / f"collision-{metadata_hash(_meta(grid, sq))[:20]}.bin"


def build_K(grid: VelocityGrid, sq: SphereQuadrature | None = None, *,
            use_cache: bool = True, cache_directory=None,
            fallback_warn: float = 0.01) -> CollisionOperator:
    """Assemble the collision operator, reading or writing the binary cache.

    The cache directory is ``cache_directory`` or the ``BOLTZLAYER_CACHE_DIR``
    environment variable; without either, nothing is cached.
    """
    sq = sq or build_sphere()
    _check_grid(grid)
    path = cache_path(grid, sq, cache_directory) if use_cache else None
    if path is not None and path.exists():
        log.info("loading collision operator from %s", path)
        return load_operator(path, grid, sq)

    t0 = time.perf_counter()
    midx, energy = _index_data(grid)
    n = grid.n_per_axis
    h = grid.spacing
    om, aw = sq.half()
    A, w_tot, w_out = _kernels.assemble_gram(grid.nodes, grid.weights, grid.mu, midx, energy,
                                              n, h, 0.5 * (n - 1), om, aw)
    A = 0.5 * (A + A.T)
    d = 1.0 / np.sqrt(grid.weights * grid.mu)
    sw = np.sqrt(grid.weights)
    # L = W^-1/2 (D^-1 A D^-1) W^1/2
    L = (d / sw)[:, None] * A * (d * sw)[None, :]
    nu = collision_frequency(grid, sq)
    K = -L
    K[np.diag_indices_from(K)] += nu
    rate = w_out / w_tot
    meta = dict(_meta(grid, sq))
    meta.update(hash=metadata_hash(_meta(grid, sq)), fallback_rate=rate,
                build_seconds=round(time.perf_counter() - t0, 3))
    if rate > fallback_warn:
        log.warning("%.3f%% of the collision rate maps outside the velocity grid and was dropped",
                    100 * rate)
    op = CollisionOperator(grid, sq, nu, K, meta)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_operator(op, path)
    return op


def _as_batch(f):
    f = np.asarray(f)
    return f.reshape(-1, f.shape[-1]), f.shape


def gamma(op: CollisionOperator, f, g) -> np.ndarray:
    """Nonlinear term ``mu^(-1/2) Q(sqrt(mu) f, sqrt(mu) g)`` in symmetric form.

    The bilinear form is the polarization ``(Gamma(f,g) + Gamma(g,f)) / 2``,
    which agrees with the quadratic term ``Gamma(f, f)`` and conserves the
    collision invariants for every pair.  ``f`` and ``g`` may be complex and
    carry leading batch axes of equal shape.
    """
    grid = op.grid
    F, shape = _as_batch(f)
    G, shape_g = _as_batch(g)
    if shape != shape_g:
        raise ValueError("f and g must have the same shape")
    midx, energy = _index_data(grid)
    n = grid.n_per_axis
    om, aw = op.sphere.half()
    sm = grid.sqrt_mu
    out = _kernels.gamma_batch(np.ascontiguousarray(F * sm, dtype=np.complex128),
                               np.ascontiguousarray(G * sm, dtype=np.complex128),
                               grid.nodes, grid.weights, midx, energy, n, grid.spacing,
                               0.5 * (n - 1), om, aw)
    out /= (grid.weights * sm)
    if not (np.iscomplexobj(f) or np.iscomplexobj(g)):
        out = out.real
    return out.reshape(shape)


def gamma_hat(op: CollisionOperator, f_modes: dict, g_modes: dict | None = None,
              dk: float = 1.0, report: dict | None = None) -> dict:
    """Truncated mode convolution ``sum_l Gamma(f(k-l), g(l)) dl``.

    Modes are keyed by integer lattice tuples; the physical frequency is
    ``dk * key`` and ``dl = dk ** d``.  Pairs whose difference ``k - l``
    falls outside the retained set are dropped; pass a dict as ``report``
    to receive the number and summed norm of the dropped products.
    """
    if not f_modes:
        raise ValueError("empty mode set")
    g_modes = f_modes if g_modes is None else g_modes
    keys = list(f_modes)
    dim = len(keys[0])
    dl = dk**dim
    out = {}
    n_drop = 0
    drop_norm = 0.0
    kset = set(keys)
    for k in keys:
        lefts, rights = [], []
        for l in g_modes:
            km = tuple(a - b for a, b in zip(k, l))
            if km in kset:
                lefts.append(f_modes[km])
                rights.append(g_modes[l])
            else:
                n_drop += 1
                drop_norm += float(np.linalg.norm(g_modes[l]))
        acc = np.zeros_like(np.asarray(f_modes[k]), dtype=complex)
        if lefts:
            res = gamma(op, np.asarray(lefts, dtype=complex), np.asarray(rights, dtype=complex))
            acc += dl * res.sum(axis=0)
        out[k] = acc
    if report is not None:
        report.update(dropped_pairs=n_drop, dropped_norm=drop_norm)
    return out


def kernel_matrix(op: CollisionOperator) -> np.ndarray:
    """Nodal kernel ``k(v_i, u_j) = K[i, j] / w_j`` with the diagonal removed."""
    k = op.K / op.grid.weights[None, :]
    np.fill_diagonal(k, 0.0)
    return k


def ktheta_row_bound(op: CollisionOperator, wf: WeightFunction) -> float:
    """``max_v (1 + |v|) sum_u |k_theta(v, u)| w_u``."""
    grid = op.grid
    wv = weight_w(grid.nodes, wf)
    kt = np.abs(kernel_matrix(op)) * wv[:, None] / wv[None, :]
    rows = kt @ grid.weights
    return float(np.max((1.0 + np.sqrt(grid.speed2)) * rows))


def ktheta_truncation_check(op: CollisionOperator, wf: WeightFunction, N: float) -> dict:
    """Size of the weighted kernel on the large-velocity / near-diagonal set.

    Reports ``max_v sum_{|u|>N or |v-u|<=1/N} |k_theta(v,u)| w_u``, the
    maximum of ``k_theta`` away from the diagonal region, and a fitted decay
    exponent ``rho`` of ``|k(v,u)| |v-u|`` against ``|v-u|^2``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    grid = op.grid
    wv = weight_w(grid.nodes, wf)
    k = kernel_matrix(op)
    kt = np.abs(k) * wv[:, None] / wv[None, :]
    speed = np.sqrt(grid.speed2)
    dist = np.linalg.norm(grid.nodes[:, None, :] - grid.nodes[None, :, :], axis=-1)
    region = (speed[None, :] > N) | (dist <= 1.0 / N)
    np.fill_diagonal(region, False)
    tail = float(np.max((kt * region) @ grid.weights))
    away = (dist > 1.0 / N)
    np.fill_diagonal(away, False)
    bounded = float(np.max(kt[away])) if np.any(away) else 0.0
    return {"N": float(N), "tail_bound": tail, "max_away_from_diagonal": bounded,
            "rho_fit": fit_kernel_decay(op, dist=dist, k=k)}


def fit_kernel_decay(op: CollisionOperator, dist=None, k=None) -> float:
    """Fit ``rho`` in ``max |k(v,u)| |v-u| ~ C exp(-rho |v-u|^2)``.

    Uses the envelope of ``|k| |v-u|`` binned in ``|v-u|``; returns the
    negative slope of its logarithm against ``|v-u|^2``.
    """
    grid = op.grid
    if dist is None:
        dist = np.linalg.norm(grid.nodes[:, None, :] - grid.nodes[None, :, :], axis=-1)
    if k is None:
        k = kernel_matrix(op)
    y = np.abs(k) * dist
    bins = np.linspace(grid.spacing, 2.0 * grid.v_max, 16)
    xs, ys = [], []
    for lo, hi in zip(bins[:-1], bins[1:]):
        sel = (dist >= lo) & (dist < hi)
        if np.any(sel):
            m = np.max(y[sel])
            if m > 0:
                xs.append(0.5 * (lo + hi))
                ys.append(np.log(m))
    if len(xs) < 3:
        return float("nan")
    slope = np.polyfit(np.asarray(xs) ** 2, ys, 1)[0]
    return float(-slope)


def null_space_basis(grid: VelocityGrid) -> np.ndarray:
    """The five collision invariants ``sqrt(mu) {1, v1, v2, v3, |v|^2}`` as rows."""
    sm = grid.sqrt_mu
    v = grid.nodes
    return np.vstack([sm, v[:, 0] * sm, v[:, 1] * sm, v[:, 2] * sm, grid.speed2 * sm])


def default_operator(n: int = 16, v_max: float = 6.0, **kw) -> CollisionOperator:
    return build_K(build_grid(n, v_max), **kw)
