"""Truncated velocity grids, the global Maxwellian and exponential weights.

Every operator in the package acts on vectors sampled at the nodes of a
:class:`VelocityGrid`.  Inner products are the weighted sums
``sum(weights * f * conj(g))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from numpy.polynomial import hermite_e

SCHEMES = ("uniform-cartesian", "gauss-hermite-tensor")
_TWO_PI_POW = (2.0 * np.pi) ** -1.5


def maxwellian(v) -> np.ndarray:
    """Normalized global Maxwellian ``(2 pi)^(-3/2) exp(-|v|^2/2)``.

    Accepts a single 3-vector or an array of shape ``(..., 3)``.
    """
    v = np.asarray(v, dtype=float)
    return _TWO_PI_POW * np.exp(-0.5 * np.sum(v * v, axis=-1))


def _double_factorial_odd(k: int) -> float:
    # (2k-1)!! with (-1)!! = 1
    return float(np.prod(np.arange(2 * k - 1, 0, -2))) if k > 0 else 1.0


def _moment_matched_weights(x: np.ndarray, h: float, n_moments: int) -> np.ndarray:
    """Uniform-grid weights corrected so that even Gaussian moments are exact.

    The weights are ``h * (1 + phi(x) sum_k alpha_k x^(2k))``, the smallest
    least-squares correction for which ``sum w phi(x) x^(2k) = (2k-1)!!``
    holds for ``k < n_moments``; ``phi`` is the standard normal density.
    """
    phi = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    powers = np.stack([x ** (2 * k) for k in range(n_moments)])
    target = np.array([_double_factorial_odd(k) for k in range(n_moments)])
    base = h * powers @ phi
    A = h * (powers * phi**2) @ powers.T
    alpha = np.linalg.solve(A, target - base)
    return h * (1.0 + phi * (alpha @ powers))


@dataclass(frozen=True)
class VelocityGrid:
    """Tensor-product velocity grid.

    Attributes
    ----------
    nodes : (N, 3) array
        Velocity nodes, flattened in C order over the three axes.
    weights : (N,) array
        Positive quadrature weights.
    v_max : float
        Truncation half-width of the box (largest node for Hermite grids).
    scheme : str
        ``"uniform-cartesian"`` or ``"gauss-hermite-tensor"``.
    n_per_axis : int
    axis : (n,) array
        One-dimensional node set shared by the three axes.
    eps_quad : float
        ``|sum(w * mu) - 1|`` measured on construction.
    """

    nodes: np.ndarray
    weights: np.ndarray
    v_max: float
    scheme: str
    n_per_axis: int
    axis: np.ndarray = field(repr=False)
    axis_weights: np.ndarray = field(repr=False)
    eps_quad: float = 0.0

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def spacing(self) -> float:
        """Node spacing of a cartesian grid (nan for Hermite grids)."""
        if self.scheme != "uniform-cartesian":
            return float("nan")
        return 2.0 * self.v_max / self.n_per_axis

    @cached_property
    def mu(self) -> np.ndarray:
        return maxwellian(self.nodes)

    @cached_property
    def sqrt_mu(self) -> np.ndarray:
        return np.sqrt(self.mu)

    @cached_property
    def speed2(self) -> np.ndarray:
        return np.sum(self.nodes**2, axis=1)

    @cached_property
    def reflection_index(self) -> np.ndarray:
        """Index of ``-v`` for every node."""
        n = self.n_per_axis
        idx = np.arange(self.size).reshape(n, n, n)
        return idx[::-1, ::-1, ::-1].ravel()

    @cached_property
    def v3_flip_index(self) -> np.ndarray:
        """Index of ``(v1, v2, -v3)`` for every node."""
        n = self.n_per_axis
        idx = np.arange(self.size).reshape(n, n, n)
        return idx[:, :, ::-1].ravel()

    def cached(self, key, factory):
        """Per-grid memo for derived data (the grid itself is immutable)."""
        store = self.__dict__.setdefault("_memo", {})
        if key not in store:
            store[key] = factory(self)
        return store[key]

    def inner(self, f, g) -> complex:
        """Discrete ``L^2_v`` inner product ``sum w f conj(g)``."""
        return np.sum(self.weights * f * np.conj(g))

    def norm(self, f) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(f) ** 2)))

    def metadata(self) -> dict:
        return {"n": self.n_per_axis, "vmax": self.v_max, "scheme": self.scheme}


def build_grid(n_per_axis: int, v_max: float = 6.0,
               scheme: str = "uniform-cartesian") -> VelocityGrid:
    """Build a symmetric tensor velocity grid.

    Cartesian grids use cell-centred nodes ``-v_max + h (m + 1/2)`` with
    ``h = 2 v_max / n``.  The 1D weights are the midpoint weights plus a
    small even polynomial correction that makes the Gaussian moments of
    order 0 to 8 exact on each axis, so tensor Gaussian moments hold to
    rounding.  Hermite grids use probabilists' Gauss-Hermite nodes.

    Raises
    ------
    ValueError
        For odd ``n_per_axis`` on the cartesian scheme, ``v_max < 4`` or an
        unknown scheme.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown velocity scheme {scheme!r}; expected one of {SCHEMES}")
    n = int(n_per_axis)
    if n < 1:
        raise ValueError("n_per_axis must be positive")
    if scheme == "uniform-cartesian":
        if n % 2:
            raise ValueError(f"n_per_axis={n} is odd; the cartesian grid needs an even count "
                             "to stay symmetric under v -> -v")
        if v_max < 4:
            raise ValueError(f"v_max={v_max} < 4 loses too much Maxwellian mass")
        h = 2.0 * v_max / n
        x = -v_max + h * (np.arange(n) + 0.5)
        x = 0.5 * (x - x[::-1])  # exact antisymmetry
        # fewer matched moments on very coarse grids, keeping weights positive
        for n_mom in range(min(5, n // 2), 0, -1):
            w1 = _moment_matched_weights(x, h, n_mom)
            if np.all(w1 > 0):
                break
        w1 = 0.5 * (w1 + w1[::-1])
        vmax_out = float(v_max)
    else:
        x, om = hermite_e.hermegauss(n)
        x = 0.5 * (x - x[::-1])
        w1 = om * np.exp(0.5 * x * x)
        w1 = 0.5 * (w1 + w1[::-1])
        vmax_out = float(np.max(np.abs(x)))
    if np.any(w1 <= 0):
        raise ValueError("grid produced nonpositive quadrature weights")
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    W = (w1[:, None, None] * w1[None, :, None] * w1[None, None, :]).ravel()
    eps = abs(float(np.sum(W * maxwellian(nodes))) - 1.0)
    nodes.setflags(write=False)
    W.setflags(write=False)
    return VelocityGrid(nodes=nodes, weights=W, v_max=vmax_out, scheme=scheme,
                        n_per_axis=n, axis=x, axis_weights=w1, eps_quad=eps)


GAUSSIAN_FUNCTIONALS = {
    # name: (integrand(v, i), analytic value)
    "m10": (lambda v, s, i: v[:, i] ** 2 * (s - 10.0), -5.0),
    "m35": (lambda v, s, i: v[:, i] ** 2 * 0.5 * (s - 3.0) * (s - 5.0), 5.0),
    "m5": (lambda v, s, i: v[:, i] ** 2 * (s - 5.0), 0.0),
    "m10c": (lambda v, s, i: v[:, i] ** 2 * (s - 10.0) * 0.5 * (s - 3.0), 0.0),
}


def gaussian_functional(grid: VelocityGrid, functional: str, i: int = 0) -> float:
    """Grid quadrature of one of the named Gaussian moment functionals.

    ``i`` is the (0-based) velocity component entering as ``v_i^2``.
    The analytic values are ``m10=-5``, ``m35=5``, ``m5=0``, ``m10c=0``.
    """
    try:
        integrand, _ = GAUSSIAN_FUNCTIONALS[functional]
    except KeyError:
        raise ValueError(f"unknown functional {functional!r}") from None
    vals = integrand(grid.nodes, grid.speed2, i) * grid.mu
    return float(np.sum(grid.weights * vals))


def gaussian_functional_exact(functional: str) -> float:
    return GAUSSIAN_FUNCTIONALS[functional][1]


@dataclass(frozen=True)
class WeightFunction:
    """Exponential velocity weight ``w(v) = exp(theta |v|^2)``, 0 < theta < 1/4."""

    theta: float

    def __post_init__(self):
        if not (0.0 < self.theta < 0.25):
            raise ValueError(f"theta={self.theta} must lie strictly inside (0, 1/4)")

    def __call__(self, v) -> np.ndarray:
        return weight_w(v, self)


def weight_w(v, wf: WeightFunction) -> np.ndarray:
    """Evaluate ``exp(theta |v|^2)`` at a 3-vector or an array of them."""
    v = np.asarray(v, dtype=float)
    return np.exp(wf.theta * np.sum(v * v, axis=-1))
