"""Diffuse-reflection walls at x3 = -1 and x3 = +1.

At a wall the velocity grid splits into the half that arrives at the wall
(``v3 > 0`` at the top, ``v3 < 0`` at the bottom) and the half that leaves
it.  The diffuse operator maps arriving values to leaving values,

    P_gamma f (v) = c_mu sqrt(mu(v)) sum_{arriving u} f(u) sqrt(mu(u)) |u3| w_u,

with the discrete normalizer ``c_mu = 1 / sum_{v3>0} mu |v3| w`` so that the
re-emitted mass flux cancels the arriving one exactly on the grid.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .velocity import VelocityGrid

TOP, BOTTOM = +1, -1


@dataclass(frozen=True)
class WallGeometry:
    """Index sets and flux weights of one velocity grid."""

    up: np.ndarray          # nodes with v3 > 0
    down: np.ndarray        # nodes with v3 < 0
    grazing: np.ndarray     # nodes with v3 == 0 (never touch the walls)
    c_mu: float
    flux_weight: np.ndarray  # sqrt(mu) |v3| w on every node
    emit: np.ndarray         # c_mu sqrt(mu) on every node

    def arriving(self, wall: int) -> np.ndarray:
        return self.up if wall == TOP else self.down

    def leaving(self, wall: int) -> np.ndarray:
        return self.down if wall == TOP else self.up


def _build_geometry(grid):
    v3 = grid.nodes[:, 2]
    up = np.flatnonzero(v3 > 0)
    down = np.flatnonzero(v3 < 0)
    graz = np.flatnonzero(v3 == 0)
    if up.size == 0 or down.size == 0:
        raise ValueError("velocity grid has an empty half-space; cannot reflect")
    half_flux = float(np.sum(grid.mu[up] * v3[up] * grid.weights[up]))
    c_mu = 1.0 / half_flux
    fw = grid.sqrt_mu * np.abs(v3) * grid.weights
    return WallGeometry(up, down, graz, c_mu, fw, c_mu * grid.sqrt_mu)


def wall_geometry(grid: VelocityGrid) -> WallGeometry:
    return grid.cached("wall_geometry", _build_geometry)


def discrete_c_mu(grid: VelocityGrid) -> float:
    """Discrete normalizer; tends to ``sqrt(2 pi)`` under refinement."""
    return wall_geometry(grid).c_mu


def half_flux(grid: VelocityGrid, wall: int = TOP) -> float:
    """``c_mu sum_{leaving} mu |v3| w``; equals 1 up to rounding."""
    geo = wall_geometry(grid)
    idx = geo.leaving(wall)
    return float(geo.c_mu * np.sum(grid.mu[idx] * np.abs(grid.nodes[idx, 2]) * grid.weights[idx]))


@dataclass
class TraceField:
    """Values of a state at one wall, split into arriving and leaving halves.

    ``arriving`` and ``leaving`` are indexed like ``WallGeometry.arriving``
    and ``WallGeometry.leaving``; leading batch axes are allowed.
    """

    wall: int
    arriving: np.ndarray
    leaving: np.ndarray
    grid: VelocityGrid

    @classmethod
    def from_values(cls, grid: VelocityGrid, wall: int, values) -> "TraceField":
        geo = wall_geometry(grid)
        values = np.asarray(values)
        return cls(wall, values[..., geo.arriving(wall)], values[..., geo.leaving(wall)], grid)


def arriving_flux(grid: VelocityGrid, wall: int, arriving) -> np.ndarray:
    """``sum_{arriving} f sqrt(mu) |v3| w`` (batch axes preserved)."""
    geo = wall_geometry(grid)
    return np.asarray(arriving) @ geo.flux_weight[geo.arriving(wall)]


def p_gamma(trace: TraceField) -> np.ndarray:
    """Diffuse re-emission of an arriving trace onto the leaving half-grid."""
    geo = wall_geometry(trace.grid)
    if trace.arriving.shape[-1] == 0:
        raise ValueError("no arriving nodes at this wall")
    X = arriving_flux(trace.grid, trace.wall, trace.arriving)
    return np.multiply.outer(X, geo.emit[geo.leaving(trace.wall)])


def p_gamma_arriving(trace: TraceField) -> np.ndarray:
    """``P_gamma f`` evaluated on the arriving half-grid."""
    geo = wall_geometry(trace.grid)
    X = arriving_flux(trace.grid, trace.wall, trace.arriving)
    return np.multiply.outer(X, geo.emit[geo.arriving(trace.wall)])


def wall_mass_flux(grid: VelocityGrid, wall: int, arriving, leaving) -> np.ndarray:
    """Net normal mass flux ``sum v3 sqrt(mu) f w`` through the wall."""
    geo = wall_geometry(grid)
    ia, il = geo.arriving(wall), geo.leaving(wall)
    v3 = grid.nodes[:, 2]
    wa = grid.sqrt_mu[ia] * v3[ia] * grid.weights[ia]
    wl = grid.sqrt_mu[il] * v3[il] * grid.weights[il]
    return np.asarray(arriving) @ wa + np.asarray(leaving) @ wl


def wall_traces(state, wall: int) -> TraceField:
    """Trace of a slab state at a wall (adjacent cell values, first order)."""
    row = state.values[-1] if wall == TOP else state.values[0]
    return TraceField.from_values(state.grid, wall, row)


def trace_split(state, wall: int, half: str = "arriving"):
    """Split the wall trace into ``P_gamma f`` and ``(I - P_gamma) f``.

    ``half="arriving"`` works on the half that hits the wall (where the
    dissipation is measured); ``half="leaving"`` compares the re-emitted
    half with ``P_gamma`` of the arriving trace, which vanishes for a state
    that satisfies the boundary condition.
    """
    tr = wall_traces(state, wall)
    if half == "arriving":
        pg = p_gamma_arriving(tr)
        return pg, tr.arriving - pg
    if half == "leaving":
        pg = p_gamma(tr)
        return pg, tr.leaving - pg
    raise ValueError("half must be 'arriving' or 'leaving'")


def gamma_norm2(grid: VelocityGrid, wall: int, values) -> np.ndarray:
    """``sum_{arriving} |g|^2 |v3| w`` for values on the arriving half."""
    geo = wall_geometry(grid)
    ia = geo.arriving(wall)
    return np.abs(np.asarray(values)) ** 2 @ (np.abs(grid.nodes[ia, 2]) * grid.weights[ia])


def boundary_dissipation_rows(grid: VelocityGrid, bottom_row, top_row) -> float:
    total = 0.0
    for wall, row in ((BOTTOM, bottom_row), (TOP, top_row)):
        tr = TraceField.from_values(grid, wall, row)
        total += float(gamma_norm2(grid, wall, tr.arriving - p_gamma_arriving(tr)))
    return total


def boundary_dissipation(state) -> float:
    """``|(I - P_gamma) f|^2`` on the arriving half, summed over both walls."""
    return boundary_dissipation_rows(state.grid, state.values[0], state.values[-1])
