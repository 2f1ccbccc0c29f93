"""Linearized hard-sphere Boltzmann dynamics in a slab with diffuse walls.

The package discretizes the Fourier-reduced problem: for every tangential
frequency ``k`` it evolves ``f(t, k, x3, v)`` on ``x3 in (-1, 1)`` and a
cartesian velocity grid, with diffuse reflection at both walls.
"""
__version__ = "0.1.0"

from .velocity import VelocityGrid, WeightFunction, build_grid, maxwellian
from .collision import CollisionOperator, build_K, build_sphere, gamma, gamma_hat
from .macroscopic import moments, project_P
from .solver import RunConfig, SlabState, Trajectory, init_state, simulate, step

__all__ = [
    "VelocityGrid", "WeightFunction", "build_grid", "maxwellian",
    "CollisionOperator", "build_K", "build_sphere", "gamma", "gamma_hat",
    "moments", "project_P",
    "RunConfig", "SlabState", "Trajectory", "init_state", "simulate", "step",
]
