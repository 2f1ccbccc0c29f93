"""Numba kernels for the collision operator.

All kernels share the conservative pair stencil: for a colliding pair
``(v_i, v_j)`` and direction ``omega`` the post-collision velocity ``v'`` is
replaced by a convex combination of two grid pairs ``(p, q)`` with
``p + q = v_i + v_j`` whose energies bracket ``|v_i|^2 + |v_j|^2``.
Mass, momentum and energy are then conserved exactly on the grid.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _stencil(i, j, midx, energy, n, y0, y1, y2):
    """Return ``(p1, q1, p2, q2, lam, inside)``.

    ``lam`` weights the pair ``(p1, q1)``; ``inside`` is False when no
    corner around ``v'`` has its partner inside the truncated grid.

    ``y`` is ``v'`` in index coordinates.  Energies are integers (doubled
    index coordinates), so the bracket test is exact.
    """
    s0 = midx[i, 0] + midx[j, 0]
    s1 = midx[i, 1] + midx[j, 1]
    s2 = midx[i, 2] + midx[j, 2]
    e_in = energy[i] + energy[j]
    f0 = int(math.floor(y0))
    f1 = int(math.floor(y1))
    f2 = int(math.floor(y2))
    lo_p = i
    lo_q = j
    lo_de = 0
    lo_d = 1e300
    hi_p = i
    hi_q = j
    hi_de = 0
    hi_d = 1e300
    inside = False
    for c in range(8):
        a0 = f0 + (c & 1)
        a1 = f1 + ((c >> 1) & 1)
        a2 = f2 + ((c >> 2) & 1)
        if a0 < 0 or a0 >= n or a1 < 0 or a1 >= n or a2 < 0 or a2 >= n:
            continue
        b0 = s0 - a0
        b1 = s1 - a1
        b2 = s2 - a2
        if b0 < 0 or b0 >= n or b1 < 0 or b1 >= n or b2 < 0 or b2 >= n:
            continue
        inside = True
        p = (a0 * n + a1) * n + a2
        q = (b0 * n + b1) * n + b2
        de = energy[p] + energy[q] - e_in
        d = (a0 - y0) ** 2 + (a1 - y1) ** 2 + (a2 - y2) ** 2
        if de <= 0 and d < lo_d:
            lo_d = d
            lo_p = p
            lo_q = q
            lo_de = de
        if de >= 0 and d < hi_d:
            hi_d = d
            hi_p = p
            hi_q = q
            hi_de = de
    if hi_de == lo_de:
        lam = 1.0
    else:
        lam = hi_de / (hi_de - lo_de)
    return lo_p, lo_q, hi_p, hi_q, lam, inside


@njit(cache=True)
def assemble_gram(nodes, weights, mu, midx, energy, n, h, vmax_c, omegas, aw):
    """Gram matrix ``A = sum W mu_i mu_j r r^T`` over pairs i<j, half sphere.

    ``omegas`` and ``aw`` hold the half-sphere directions and weights; the
    factor 1/4 of the quadratic form cancels against the two orderings of
    each pair and the two hemispheres.  Returns ``(A, total_rate, outside_rate)``: the collision rate summed over
    all triples and over triples whose post-collision pair leaves the grid.
    """
    N = nodes.shape[0]
    nd = omegas.shape[0]
    A = np.zeros((N, N))
    idx = np.empty(6, dtype=np.int64)
    cf = np.empty(6)
    w_out = 0.0
    w_tot = 0.0
    for i in range(N):
        for j in range(i + 1, N):
            g0 = nodes[j, 0] - nodes[i, 0]
            g1 = nodes[j, 1] - nodes[i, 1]
            g2 = nodes[j, 2] - nodes[i, 2]
            base = weights[i] * weights[j] * mu[i] * mu[j]
            for d in range(nd):
                dot = g0 * omegas[d, 0] + g1 * omegas[d, 1] + g2 * omegas[d, 2]
                if dot == 0.0:
                    continue
                W = base * aw[d] * abs(dot)
                w_tot += W
                y0 = (nodes[i, 0] + dot * omegas[d, 0]) / h + vmax_c
                y1 = (nodes[i, 1] + dot * omegas[d, 1]) / h + vmax_c
                y2 = (nodes[i, 2] + dot * omegas[d, 2]) / h + vmax_c
                p1, q1, p2, q2, lam, inside = _stencil(i, j, midx, energy, n, y0, y1, y2)
                if not inside:
                    w_out += W
                if lam == 1.0 and ((p1 == i and q1 == j) or (p1 == j and q1 == i)):
                    continue
                idx[0] = i
                idx[1] = j
                idx[2] = p1
                idx[3] = q1
                idx[4] = p2
                idx[5] = q2
                cf[0] = 1.0
                cf[1] = 1.0
                cf[2] = -lam
                cf[3] = -lam
                cf[4] = lam - 1.0
                cf[5] = lam - 1.0
                m = 4 if lam == 1.0 else 6
                for a in range(m):
                    wa = W * cf[a]
                    ia = idx[a]
                    for b in range(m):
                        A[ia, idx[b]] += wa * cf[b]
    return A, w_tot, w_out


@njit(cache=True)
def gamma_batch(F, G, nodes, weights, midx, energy, n, h, vmax_c, omegas, aw):
    """Symmetrized weak-form collision sums for a batch of vector pairs.

    ``F`` and ``G`` are ``(B, N)`` complex arrays of ``sqrt(mu) f``.
    Returns ``out[b, p] = sum W (F_j G_i + F_i G_j) (-r)_p`` (not yet
    divided by ``w_p sqrt(mu_p)``).
    """
    B = F.shape[0]
    N = nodes.shape[0]
    nd = omegas.shape[0]
    # batch index innermost and contiguous
    FT = np.ascontiguousarray(F.T)
    GT = np.ascontiguousarray(G.T)
    acc = np.zeros((N, B), dtype=np.complex128)
    s = np.empty(B, dtype=np.complex128)
    for i in range(N):
        for j in range(i + 1, N):
            g0 = nodes[j, 0] - nodes[i, 0]
            g1 = nodes[j, 1] - nodes[i, 1]
            g2 = nodes[j, 2] - nodes[i, 2]
            base = weights[i] * weights[j]
            for b in range(B):
                s[b] = FT[j, b] * GT[i, b] + FT[i, b] * GT[j, b]
            for d in range(nd):
                dot = g0 * omegas[d, 0] + g1 * omegas[d, 1] + g2 * omegas[d, 2]
                if dot == 0.0:
                    continue
                y0 = (nodes[i, 0] + dot * omegas[d, 0]) / h + vmax_c
                y1 = (nodes[i, 1] + dot * omegas[d, 1]) / h + vmax_c
                y2 = (nodes[i, 2] + dot * omegas[d, 2]) / h + vmax_c
                p1, q1, p2, q2, lam, _ = _stencil(i, j, midx, energy, n, y0, y1, y2)
                if lam == 1.0 and ((p1 == i and q1 == j) or (p1 == j and q1 == i)):
                    continue
                W = base * aw[d] * abs(dot)
                c1 = W * lam
                c2 = W * (1.0 - lam)
                for b in range(B):
                    sb = s[b]
                    acc[i, b] -= W * sb
                    acc[j, b] -= W * sb
                    acc[p1, b] += c1 * sb
                    acc[q1, b] += c1 * sb
                    if lam != 1.0:
                        acc[p2, b] += c2 * sb
                        acc[q2, b] += c2 * sb
    return np.ascontiguousarray(acc.T)


@njit(cache=True)
def collision_frequency_at(points, nodes, weights, mu, omegas, aw):
    """``nu(v) = sum_u w_u mu_u sum_omega a |(v - u).omega|`` (full sphere)."""
    M = points.shape[0]
    N = nodes.shape[0]
    nd = omegas.shape[0]
    out = np.zeros(M)
    for a in range(M):
        acc = 0.0
        for j in range(N):
            g0 = points[a, 0] - nodes[j, 0]
            g1 = points[a, 1] - nodes[j, 1]
            g2 = points[a, 2] - nodes[j, 2]
            s = 0.0
            for d in range(nd):
                s += aw[d] * abs(g0 * omegas[d, 0] + g1 * omegas[d, 1] + g2 * omegas[d, 2])
            acc += weights[j] * mu[j] * s
        out[a] = acc
    return out
