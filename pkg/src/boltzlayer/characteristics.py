"""Backward characteristics in the slab and stochastic diffuse-bounce cycles.

A backward trajectory from ``(x3, v)`` reaches the wall
``x_b = x3 - t_b v3`` after the exit time ``t_b``.  At a wall the next
velocity is drawn from the probability measure
``sqrt(2 pi) mu(v) |v3| dv`` on the velocities pointing into the slab, which
is the diffuse-reflection measure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

GRAZING_CUTOFF = 1e-8


def backward_exit(x3: float, v3: float):
    """Backward exit time and position: ``(t_b, x_b)`` with ``x_b`` in {-1, +1}."""
    if v3 == 0:
        raise ValueError("v3 = 0 never reaches a wall (grazing set)")
    if not -1.0 <= x3 <= 1.0:
        raise ValueError("x3 must lie in [-1, 1]")
    tb = (x3 + 1.0) / v3 if v3 > 0 else (x3 - 1.0) / v3
    return tb, (-1.0 if v3 > 0 else 1.0)


def sample_diffuse(wall: int, rng: np.random.Generator, size=None):
    """Velocities distributed by the diffuse measure at ``wall`` (+1 or -1).

    ``v1, v2`` are standard normal, ``|v3|`` is Rayleigh and ``v3`` points
    into the slab (negative at the top wall, positive at the bottom).
    Returns ``(velocities, resamples)``.
    """
    if wall not in (-1, 1):
        raise ValueError("wall must be +1 or -1")
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    v12 = rng.standard_normal(shape + (2,))
    r = rng.rayleigh(1.0, shape)
    resamples = 0
    bad = r < GRAZING_CUTOFF
    while np.any(bad):
        nb = int(np.sum(bad))
        resamples += nb
        r = np.where(bad, rng.rayleigh(1.0, shape), r)
        bad = r < GRAZING_CUTOFF
    v3 = -wall * r
    return np.concatenate([v12, np.asarray(v3)[..., None]], axis=-1), resamples


@dataclass
class Cycle:
    """One backward stochastic cycle.

    ``times[i]``, ``walls[i]`` and ``velocities[i]`` are ``t^i``, ``x_3^i``
    and ``v^i`` for ``i >= 1``; entry 0 is the starting point.
    """

    times: list
    positions: list
    velocities: list
    terminal: str = "exhausted-n"
    weight: float = 1.0
    resamples: int = 0


def sample_cycle(t0: float, x3: float, v, n: int, rng: np.random.Generator,
                 nu=None) -> Cycle:
    """Follow one backward cycle for at most ``n`` wall interactions.

    At a wall ``x3^i`` the velocity ``v^i`` is drawn from the diffuse
    measure on ``{v : v3 sign(x3^i) > 0}``, so ``t^{i+1} = t^i - 2/|v3^i|``.

    ``nu`` (a callable of velocity) switches on the importance weight
    ``prod exp(-nu(v^j) (t^j - t^{j+1}))`` of the weighted measures; the
    survival estimator does not use it.
    """
    v = np.asarray(v, dtype=float)
    tb, xb = backward_exit(x3, v[2])
    cyc = Cycle([t0], [x3], [v])
    t = t0 - tb
    pos = xb
    res = 0
    for _ in range(n):
        if t <= 0:
            cyc.terminal = "reached-initial-time"
            break
        vel, r = sample_diffuse(int(pos), rng)
        res += r
        # the cycle velocity lies in {v3 sign(x3) > 0}: the mirror of the
        # re-emitted one, so the backward ray crosses the gap
        vel[2] = -vel[2]
        cyc.times.append(t)
        cyc.positions.append(pos)
        cyc.velocities.append(vel)
        tb_i, pos_next = backward_exit(pos, vel[2])
        if nu is not None:
            cyc.weight *= math.exp(-float(nu(vel)) * min(tb_i, t))
        t -= tb_i
        pos = pos_next
    else:
        if t <= 0:
            cyc.terminal = "reached-initial-time"
    cyc.resamples = res
    return cyc


def _rayleigh_clean(rng, size, counter):
    r = rng.rayleigh(1.0, size)
    bad = r < GRAZING_CUTOFF
    while np.any(bad):
        counter[0] += int(np.sum(bad))
        r[bad] = rng.rayleigh(1.0, int(np.sum(bad)))
        bad = r < GRAZING_CUTOFF
    return r


def _tilted_proposal(T0: float, n: int):
    """Gaussian proposal for ``|v3|`` centred where ``n`` equal bounces use up ``T0``.

    Its width is the Laplace width of ``r exp(-r^2/2 - 2 s / r)`` at that
    centre, the exponentially tilted bounce law.
    """
    m = max(2.0 * n / T0, 1.05)
    s = 0.5 * (m**3 - m)
    sd = 1.0 / math.sqrt(1.0 / m**2 + 1.0 + 4.0 * s / m**3)
    return m, sd


def cycle_survival(T0: float, n: int, samples: int = 10**6, seed: int = 0,
                   chunk: int = 200_000, method: str = "plain") -> dict:
    """Monte Carlo estimate of ``P(t^n > 0)`` under the product measure.

    Chains start at the first wall hit with ``T0`` remaining; bounce ``j``
    consumes the wall-to-wall time ``2 / |v3^j|``, with ``|v3|`` Rayleigh
    distributed.  Survival after ``n`` bounces means the consumed time is
    still below ``T0``.  Chunks draw from independent streams spawned from
    ``seed``, so the result does not depend on how the work is split.

    ``method="plain"`` counts survivors.  ``method="tilted"`` draws ``|v3|``
    from a Gaussian concentrated on fast bounces and reweights by the exact
    likelihood ratio; it resolves probabilities far below ``1/samples``.
    The estimate is also returned as ``log2_p_hat`` since it can underflow.
    """
    if samples < 1000:
        raise ValueError("use at least 1000 samples")
    if n < 1 or T0 <= 0:
        raise ValueError("need n >= 1 and T0 > 0")
    if method not in ("plain", "tilted"):
        raise ValueError(f"unknown method {method!r}")
    n_chunks = -(-samples // chunk)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    counter = [0]
    alive_total = 0
    logw_parts = []
    if method == "tilted":
        m, sd = _tilted_proposal(T0, n)
        log_q0 = -math.log(sd * math.sqrt(2.0 * math.pi))
    for c, ss in enumerate(streams):
        size = min(chunk, samples - c * chunk)
        rng = np.random.default_rng(ss)
        if method == "plain":
            left = np.full(size, float(T0))
            for _ in range(n):
                live = left > 0
                nl = int(np.count_nonzero(live))
                if nl == 0:
                    break
                left[live] -= 2.0 / _rayleigh_clean(rng, nl, counter)
            alive_total += int(np.count_nonzero(left > 0))
        else:
            used = np.zeros(size)
            logw = np.zeros(size)
            ok = np.ones(size, dtype=bool)
            for _ in range(n):
                r = rng.normal(m, sd, size)
                pos = r >= GRAZING_CUTOFF
                ok &= pos
                r = np.where(pos, r, 1.0)
                used += 2.0 / r
                logw += np.log(r) - 0.5 * r * r + 0.5 * ((r - m) / sd) ** 2 - log_q0
            alive = ok & (used < T0)
            alive_total += int(np.count_nonzero(alive))
            logw_parts.append(np.where(alive, logw, -np.inf))
    if method == "plain":
        p = alive_total / samples
        se = math.sqrt(max(p * (1 - p), 0.0) / samples)
        log2p = math.log2(p) if p > 0 else float("-inf")
        rel = se / p if p > 0 else float("inf")
    else:
        from scipy.special import logsumexp

        lw = np.concatenate(logw_parts)
        if alive_total == 0:
            log2p, rel = float("-inf"), float("inf")
        else:
            lmean = logsumexp(lw) - math.log(samples)
            lsq = logsumexp(2.0 * lw) - math.log(samples)
            var_rel = max(math.exp(lsq - 2.0 * lmean) - 1.0, 0.0)
            log2p = lmean / math.log(2.0)
            rel = math.sqrt(var_rel / samples)
        p = 2.0**log2p if log2p > -1074 else 0.0
        se = p * rel
    return {"T0": float(T0), "n": int(n), "samples": int(samples), "p_hat": p,
            "stderr": se, "resamples": counter[0], "survivors": alive_total,
            "method": method, "log2_p_hat": log2p, "rel_stderr": rel}


def survival_log2_bracket(T0: float, n: int, grid_points: int = 8192) -> tuple:
    """Deterministic lower and upper bounds on ``log2 P(t^n > 0)``.

    The bounce time ``tau = 2/|v3|`` has CDF ``exp(-2 / tau^2)``.  With
    ``tau`` in cell ``j`` of a uniform grid of width ``h = T0/G``,
    ``j h <= tau < (j+1) h``, so the law of the summed cell indices ``S``
    gives ``P(S <= G - n) <= P(t^n > 0) <= P(S < G)``.  The index law is
    built by direct (not FFT) convolution, which keeps full relative
    accuracy in the far tail, with a running log-scale against underflow.
    """
    G = int(grid_points)
    if G <= 2 * n:
        raise ValueError("grid_points must be well above n")
    edges = np.arange(G + 1) * (T0 / G)
    with np.errstate(divide="ignore"):
        lc = -2.0 / edges**2
    mass = np.exp(lc[1:]) * -np.expm1(lc[:-1] - lc[1:])
    mass[0] = math.exp(lc[1])
    dens = mass.copy()
    log_scale = 0.0
    for _ in range(n - 1):
        dens = np.convolve(dens, mass)[:G]
        s = dens.max()
        dens /= s
        log_scale += math.log(s)
    lo = (math.log(dens[: G - n + 1].sum()) + log_scale) / math.log(2.0)
    hi = (math.log(dens.sum()) + log_scale) / math.log(2.0)
    return lo, hi
