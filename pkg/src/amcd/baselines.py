"""Independent oracles and the two-dimensional grid-search baseline.

The brute-force oracles enumerate a simplex grid of candidate sources,
score the rate-distortion value of every candidate with the same slope
bisection used everywhere else, and optimize by exhaustion; they provide a
solver-independent answer on small alphabets.  The grid baseline
reconstructs the cost profile of a two-dimensional (slope, multiplier)
search for the inverse function: the alternating updates run with the
multiplier frozen at each grid value instead of Newton-solved, which makes
its search space a strict subset of the line-search solver's.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import AlphabetTooLargeError
from .exponent import ExponentProblem
from .inverse import InverseProblem
from .probability import _values

_FEASIBILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class SimplexGridSpec:
    """Uniform simplex grid: compositions of ``resolution`` into M parts.

    ``min_mass`` drops grid points with any coordinate strictly between zero
    and the floor, keeping divergences away from noisy boundary values.
    """

    resolution: int
    min_mass: float = 0.0

    def __post_init__(self) -> None:
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")


def simplex_grid(parts: int, resolution: int) -> np.ndarray:
    """All distributions with entries k_i/resolution, as an array (G, parts)."""
    combos = itertools.combinations(range(resolution + parts - 1), parts - 1)
    bars = np.fromiter(
        itertools.chain.from_iterable(combos), dtype=np.int64
    ).reshape(-1, parts - 1)
    edges = np.concatenate(
        [
            np.full((bars.shape[0], 1), -1, dtype=np.int64),
            bars,
            np.full((bars.shape[0], 1), resolution + parts - 1, dtype=np.int64),
        ],
        axis=1,
    )
    counts = np.diff(edges, axis=1) - 1
    return counts / float(resolution)


def _batch_rd_values(
    P: np.ndarray,
    dmat: np.ndarray,
    delta: float,
    ba_iters: int = 500,
    ba_tol: float = 1e-11,
    bisect_iters: int = 55,
) -> np.ndarray:
    """Rate-distortion values R(delta, p) for a batch of sources (G, M).

    Same slope bisection as :func:`amcd.rd.rd_at_distortion`, vectorized
    over the batch; the unit tests pin it against the scalar path.
    """
    G, M = P.shape
    N = dmat.shape[1]
    dmax = (P @ dmat).min(axis=1)
    rates = np.zeros(G)
    active = delta < dmax
    if not active.any():
        return rates
    Pa = P[active]
    ga = Pa.shape[0]
    on = Pa > 0.0

    def dist_info(zetas, r):
        K = np.exp(-zetas[:, None, None] * dmat[None, :, :])
        u = np.zeros_like(Pa)
        for _ in range(ba_iters):
            s = np.einsum("gmn,gn->gm", K, r)
            u[:] = 0.0
            np.divide(Pa, s, out=u, where=on)
            growth = np.einsum("gm,gmn->gn", u, K)
            r_new = r * growth
            if np.abs(r_new - r).max() < ba_tol and growth.max() <= 1.0 + 1e-9:
                r = r_new
                break
            r = r_new
        s = np.einsum("gmn,gn->gm", K, r)
        safe_s = np.where(on, s, 1.0)
        dist = np.einsum("gm,gmn,gn->g", Pa / safe_s, K * dmat[None, :, :], r)
        with np.errstate(divide="ignore"):
            log_s = np.log(safe_s)
        info = -np.sum(np.where(on, Pa * log_s, 0.0), axis=1) - zetas * dist
        return dist, info, r

    lo = np.zeros(ga)
    hi = np.ones(ga)
    r = np.full((ga, N), 1.0 / N)
    dist, info, r = dist_info(hi, r)
    for _ in range(60):
        need = dist > delta
        if not need.any():
            break
        hi[need] *= 2.0
        dist, info, r = dist_info(hi, r)
    mid = hi
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        dist, info, r = dist_info(mid, r)
        high_side = dist > delta
        lo = np.where(high_side, mid, lo)
        hi = np.where(high_side, hi, mid)
    rates[active] = np.maximum(info + mid * (dist - delta), 0.0)
    return rates


def _grid_candidates(q: np.ndarray, spec: SimplexGridSpec) -> np.ndarray:
    M = q.size
    if M > 4:
        raise AlphabetTooLargeError("brute-force oracle limited to alphabets of size <= 4")
    pts = simplex_grid(M, spec.resolution)
    if spec.min_mass > 0.0:
        tiny = (pts > 0.0) & (pts < spec.min_mass)
        pts = pts[~tiny.any(axis=1)]
    return np.vstack([pts, q[None, :]])


def _refine_box(center: np.ndarray, width: float, step: float) -> np.ndarray:
    """Simplex points on a local box grid around ``center``."""
    M = center.size
    offsets = np.arange(-width, width + 0.5 * step, step)
    combos = np.array(list(itertools.product(offsets, repeat=M - 1)))
    pts = np.empty((combos.shape[0], M))
    pts[:, : M - 1] = center[: M - 1] + combos
    pts[:, M - 1] = 1.0 - pts[:, : M - 1].sum(axis=1)
    ok = (pts >= 0.0).all(axis=1) & (pts <= 1.0).all(axis=1)
    return pts[ok]


def oracle_exponent(
    problem: ExponentProblem,
    grid: SimplexGridSpec,
    refine_rounds: int = 1,
) -> float:
    """Exponent by exhaustive search: min divergence over grid sources whose
    rate-distortion value clears the threshold (with a strict-side margin).

    Returns +inf when no candidate is feasible.  ``refine_rounds`` local
    box refinements around the argmin tighten the grid bias.
    """
    qv = _values(problem.q)
    dmat = problem.d.entries
    delta = problem.distortion_threshold
    rate = problem.rate_threshold
    cand = _grid_candidates(qv, grid)
    width = 2.0 / grid.resolution
    best = math.inf
    best_p = None
    for round_no in range(refine_rounds + 1):
        rates = _batch_rd_values(cand, dmat, delta)
        feasible = rates >= rate + _FEASIBILITY_MARGIN
        if feasible.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                logs = np.where(cand > 0.0, np.log(np.where(cand > 0.0, cand, 1.0)), 0.0)
            kl = np.sum(np.where(cand > 0.0, cand * (logs - np.log(qv)[None, :]), 0.0), axis=1)
            kl = np.where(feasible, kl, np.inf)
            idx = int(np.argmin(kl))
            if kl[idx] < best:
                best = float(kl[idx])
                best_p = cand[idx]
        if best_p is None or round_no == refine_rounds:
            break
        step = width / 8.0
        cand = _refine_box(best_p, width, step)
        width = 2.0 * step
    return best


def oracle_inverse(
    problem: InverseProblem,
    grid: SimplexGridSpec,
    refine_rounds: int = 1,
) -> float:
    """Inverse value by exhaustive search: max rate-distortion value over
    grid sources inside the divergence ball."""
    qv = _values(problem.q)
    dmat = problem.d.entries
    delta = problem.distortion_threshold
    budget = problem.exponent_threshold
    cand = _grid_candidates(qv, grid)
    width = 2.0 / grid.resolution
    best = -math.inf
    best_p = None
    for round_no in range(refine_rounds + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(cand > 0.0, np.log(np.where(cand > 0.0, cand, 1.0)), 0.0)
        kl = np.sum(np.where(cand > 0.0, cand * (logs - np.log(qv)[None, :]), 0.0), axis=1)
        inside = kl <= budget
        if inside.any():
            rates = np.full(cand.shape[0], -np.inf)
            rates[inside] = _batch_rd_values(cand[inside], dmat, delta)
            idx = int(np.argmax(rates))
            if rates[idx] > best:
                best = float(rates[idx])
                best_p = cand[idx]
        if best_p is None or round_no == refine_rounds:
            break
        step = width / 8.0
        cand = _refine_box(best_p, width, step)
        width = 2.0 * step
    return best


def gaussian_closed_form_check(sigma2: float, delta: float, exponent_budget: float) -> float:
    """Largest rate over the Gaussian scale family inside a divergence ball.

    Over variances v >= delta, maximize (1/2) log(v/delta) subject to the
    Gaussian divergence (1/2)(v/sigma2 - 1 - log(v/sigma2)) <= budget.  The
    rate grows with v and the divergence grows for v > sigma2, so the
    optimum sits where the divergence meets the budget.  A lower bound to
    the discretized inverse value; used as a plausibility band.
    """
    if not 0.0 < delta < sigma2:
        raise ValueError("requires 0 < delta < sigma2")
    if exponent_budget < 0.0:
        raise ValueError("exponent budget must be nonnegative")

    def div(v):
        t = v / sigma2
        return 0.5 * (t - 1.0 - math.log(t))

    if exponent_budget == 0.0:
        v_star = sigma2
    else:
        hi = 2.0 * sigma2
        while div(hi) < exponent_budget:
            hi *= 2.0
        v_star = brentq(lambda v: div(v) - exponent_budget, sigma2, hi, xtol=1e-12)
    return 0.5 * math.log(v_star / delta)


def grid_baseline_inverse(
    problem: InverseProblem,
    zeta_grid,
    xi_grid,
    inner_iters: int = 1000,
    max_outer: int = 200,
    stop_tol: float = 1e-5,
    ba_tol: float = 1e-10,
    kl_tol: float = 1e-6,
) -> tuple[float, float]:
    """Two-dimensional grid reconstruction of the inverse computation.

    For every (zeta, xi) pair the alternating (p, a) updates run with xi
    frozen (no root finding); pairs whose divergence stays within the
    budget (up to ``kl_tol``) are kept and the best rate among them is
    returned together with the wall time of the solver loops.  All xi
    values at one slope are advanced as one batch; that only tightens the
    measured cost relative to a pairwise loop.
    """
    q_full = problem.q.values
    active = q_full > 0.0
    qv = q_full[active]
    dmat = problem.d.entries[active, :]
    log_q = np.log(qv)
    delta = problem.distortion_threshold
    budget = problem.exponent_threshold
    zetas = np.asarray(zeta_grid, dtype=float)
    xis = np.asarray(xi_grid, dtype=float)
    n_xi = xis.size
    N = dmat.shape[1]

    best = -math.inf
    start = time.perf_counter()
    for zeta in zetas:
        logK = -zeta * dmat
        K = np.exp(logK)
        log_a = np.tile(log_q, (n_xi, 1))
        r = np.full((n_xi, N), 1.0 / N)
        R_prev = None
        R_vals = np.full(n_xi, -math.inf)
        P = None
        for _ in range(max_outer):
            log_t = (log_a + xis[:, None] * log_q[None, :]) / (1.0 + xis[:, None])
            log_p = log_t - logsumexp(log_t, axis=1, keepdims=True)
            P = np.exp(log_p)
            for _ in range(inner_iters):
                s = r @ K.T
                u = P / s
                growth = u @ K
                r_new = r * growth
                if np.abs(r_new - r).max() < ba_tol and growth.max() <= 1.0 + 1e-9:
                    r = r_new
                    break
                r = r_new
            with np.errstate(divide="ignore"):
                log_r = np.log(r)
            log_s = logsumexp(logK[None, :, :] + log_r[:, None, :], axis=2)
            log_a = log_p - log_s
            R_vals = -zeta * delta + np.sum(P * (log_a - log_p), axis=1)
            if R_prev is not None and np.abs(R_vals - R_prev).max() < stop_tol:
                break
            R_prev = R_vals
        kl = np.sum(P * (log_p - log_q[None, :]), axis=1)
        kept = kl <= budget + kl_tol
        if kept.any():
            best = max(best, float(R_vals[kept].max()))
    wall = time.perf_counter() - start
    return best, wall
