import math

import numpy as np
import pytest

from boltzlayer.characteristics import (backward_exit, cycle_survival, sample_cycle,
                                        sample_diffuse, survival_log2_bracket)


def test_backward_exit():
    assert backward_exit(0.0, 2.0) == (0.5, -1.0)
    assert backward_exit(0.5, -1.0) == (0.5, 1.0)
    with pytest.raises(ValueError):
        backward_exit(0.0, 0.0)
    with pytest.raises(ValueError):
        backward_exit(1.5, 1.0)


def test_diffuse_sampler_moments(rng):
    v, res = sample_diffuse(1, rng, 200_000)
    assert res == 0
    assert np.all(v[:, 2] < 0)
    # |v3| is Rayleigh: mean sqrt(pi/2), second moment 2
    assert np.mean(-v[:, 2]) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-2)
    assert np.mean(v[:, 2] ** 2) == pytest.approx(2.0, rel=1e-2)
    assert np.mean(v[:, 0] ** 2) == pytest.approx(1.0, rel=1e-2)
    vb, _ = sample_diffuse(-1, rng, 10)
    assert np.all(vb[:, 2] > 0)
    with pytest.raises(ValueError):
        sample_diffuse(0, rng)


def test_cycle_bookkeeping(rng):
    cyc = sample_cycle(50.0, 0.0, [0.0, 0.0, 1.0], 8, rng)
    assert cyc.times[1] == pytest.approx(49.0)
    assert np.all(np.diff(cyc.times) < 0)
    assert set(cyc.positions[1:]) <= {-1.0, 1.0}
    # consecutive walls alternate and each velocity points out through its wall
    assert all(a == -b for a, b in zip(cyc.positions[1:], cyc.positions[2:]))
    for x, v in zip(cyc.positions[1:], cyc.velocities[1:]):
        assert v[2] * x > 0
    # consecutive times differ by the wall-to-wall travel 2/|v3|
    for i in range(1, len(cyc.times) - 1):
        assert cyc.times[i] - cyc.times[i + 1] == pytest.approx(2 / abs(cyc.velocities[i][2]))


def test_cycle_terminates_at_initial_time(rng):
    cyc = sample_cycle(0.5, 0.0, [0.0, 0.0, 1.0], 10, rng)
    assert cyc.terminal == "reached-initial-time"
    assert len(cyc.times) == 1


def test_cycle_importance_weight(rng):
    cyc = sample_cycle(1.0, 0.0, [0.0, 0.0, 4.0], 3, rng, nu=lambda v: 1.0)
    assert 0.0 < cyc.weight <= 1.0


def test_single_bounce_survival():
    # P(2/R < T0) = exp(-2/T0^2)
    r = cycle_survival(10.0, 1, 10**6, seed=3)
    assert abs(r["p_hat"] - math.exp(-0.02)) < 4 * r["stderr"]


def test_tilted_matches_plain_where_both_resolve():
    plain = cycle_survival(8.0, 8, 10**6, seed=1)
    tilt = cycle_survival(8.0, 8, 10**5, seed=2, method="tilted")
    assert abs(plain["p_hat"] - tilt["p_hat"]) < 4 * math.hypot(plain["stderr"], tilt["stderr"])
    lo, hi = survival_log2_bracket(8.0, 8)
    assert lo <= tilt["log2_p_hat"] + 3 * tilt["rel_stderr"] and \
        tilt["log2_p_hat"] - 3 * tilt["rel_stderr"] <= hi


def test_tilted_inside_bracket_far_tail():
    r = cycle_survival(16.0, 32, 10**5, seed=0, method="tilted")
    lo, hi = survival_log2_bracket(16.0, 32)
    assert lo - 0.1 <= r["log2_p_hat"] <= hi + 0.1
    assert r["p_hat"] > 0


def test_survival_seed_and_chunking():
    a = cycle_survival(8.0, 4, 10_000, seed=5, chunk=10_000)
    b = cycle_survival(8.0, 4, 10_000, seed=5, chunk=10_000)
    assert a == b
    with pytest.raises(ValueError):
        cycle_survival(8.0, 4, 10)
    with pytest.raises(ValueError):
        cycle_survival(8.0, 4, 10_000, method="bogus")


def test_bracket_orders():
    lo, hi = survival_log2_bracket(8.0, 4, grid_points=2048)
    assert lo <= hi
    lo2, hi2 = survival_log2_bracket(8.0, 4, grid_points=8192)
    assert lo <= lo2 <= hi2 <= hi
