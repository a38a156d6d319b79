"""Exact reduced solvers for two-block exchangeable problems.

The counterexample family lives on an alphabet partitioned into two blocks
(sizes m_a and m_b, here 8 and 512) whose distortion is invariant under
permutations within each block.  Sources that are uniform within blocks
stay uniform within blocks under every update of the generic solvers, and
the per-slope subproblems are jointly convex with a symmetric feasible
set, so nothing is lost by working with one value per block.  This module
carries per-symbol values in length-2 arrays together with the block
multiplicities, which turns the 520x520 iterations into O(1) work; the
test suite checks it against the generic path on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import BisectionFailureError
from .probability import DistortionMatrix, validate_simplex
from .rd import DualCertificate
from .report import (
    CAPPED,
    CONSTRAINT_SLACK,
    FLAT,
    INFEASIBLE,
    ROOT,
    OuterIterate,
    SolveReport,
    SolverConfig,
    ZetaTrace,
    map_over_grid,
    pick_best,
)
from .roots import bracketed_root


@dataclass(frozen=True)
class TwoBlockStructure:
    """Distortion costs of a block-permutation-invariant matrix.

    ``off[t][u]`` is the cost of reproducing a block-t symbol by a
    *different* symbol of block u; ``diag[t]`` is the self-reproduction
    cost (zero for the built-in family).
    """

    sizes: tuple[int, int]
    off: tuple[tuple[float, float], tuple[float, float]]
    diag: tuple[float, float] = (0.0, 0.0)

    @property
    def counts(self) -> np.ndarray:
        return np.asarray(self.sizes, dtype=float)

    @property
    def off_matrix(self) -> np.ndarray:
        return np.asarray(self.off, dtype=float)

    @property
    def diag_vector(self) -> np.ndarray:
        return np.asarray(self.diag, dtype=float)

    def to_matrix(self) -> np.ndarray:
        """Expand to the full (m_a+m_b) x (m_a+m_b) distortion matrix."""
        ma, mb = self.sizes
        n = ma + mb
        out = np.empty((n, n))
        out[:ma, :ma] = self.off[0][0]
        out[:ma, ma:] = self.off[0][1]
        out[ma:, :ma] = self.off[1][0]
        out[ma:, ma:] = self.off[1][1]
        idx = np.arange(n)
        out[idx[:ma], idx[:ma]] = self.diag[0]
        out[idx[ma:], idx[ma:]] = self.diag[1]
        return out


def detect_two_block(d, size_a: int) -> TwoBlockStructure | None:
    """Recognize a block-permutation-invariant matrix; None when it is not.

    Requires a square matrix whose off-diagonal entries are constant within
    each of the four blocks and whose diagonal is constant per block.
    """
    entries = d.entries if isinstance(d, DistortionMatrix) else np.asarray(d, dtype=float)
    n = entries.shape[0]
    if entries.ndim != 2 or entries.shape[1] != n or not 0 < size_a < n:
        return None
    size_b = n - size_a
    diag = np.diag(entries)
    blocks = [(0, size_a), (size_a, n)]
    off = [[0.0, 0.0], [0.0, 0.0]]
    diags = [0.0, 0.0]
    for t, (t0, t1) in enumerate(blocks):
        dblk = diag[t0:t1]
        if np.ptp(dblk) > 0.0:
            return None
        diags[t] = float(dblk[0])
        for u, (u0, u1) in enumerate(blocks):
            sub = entries[t0:t1, u0:u1].copy()
            if t == u:
                np.fill_diagonal(sub, np.nan)
            vals = sub[~np.isnan(sub)]
            if vals.size == 0:  # 1x1 diagonal block has no off-diagonal entries
                off[t][u] = diags[t]
                continue
            if np.ptp(vals) > 0.0:
                return None
            off[t][u] = float(vals[0])
    return TwoBlockStructure(
        sizes=(size_a, size_b),
        off=((off[0][0], off[0][1]), (off[1][0], off[1][1])),
        diag=(diags[0], diags[1]),
    )


def expand_per_symbol(values2, sizes) -> np.ndarray:
    """Repeat per-block per-symbol values into a full-length vector."""
    v = np.asarray(values2, dtype=float)
    return np.repeat(v, np.asarray(sizes, dtype=int))


def delta_max_reduced(q2, structure: TwoBlockStructure) -> float:
    m = structure.counts
    d = structure.off_matrix
    dg = structure.diag_vector
    q2 = np.asarray(q2, dtype=float)
    col = (m * q2) @ d + q2 * (dg - np.diag(d))
    return float(col.min())


# ---------------------------------------------------------------------------
# reduced Blahut-Arimoto
# ---------------------------------------------------------------------------


def _kernels(structure: TwoBlockStructure, zeta: float):
    koff = np.exp(-zeta * structure.off_matrix)
    kdiag = np.exp(-zeta * structure.diag_vector)
    return koff, kdiag


def ba_reduced(p2, structure: TwoBlockStructure, zeta: float, r2=None,
               max_iter: int = 1000, tol: float = 1e-10):
    """Alternating updates in per-block coordinates.

    ``p2`` and the returned marginal are per-symbol values (so the block
    totals are counts * values).  Returns a dict mirroring the fields of
    :class:`amcd.rd.BAFixedPoint` that the solvers actually consume.
    """
    m = structure.counts
    d = structure.off_matrix
    dg = structure.diag_vector
    koff, kdiag = _kernels(structure, zeta)
    kd_extra = kdiag - np.diag(koff)  # diagonal correction on own column
    p = np.asarray(p2, dtype=float)
    on = p > 0.0
    n_total = m.sum()
    r = np.full(2, 1.0 / n_total) if r2 is None else np.asarray(r2, dtype=float)

    residual = np.inf
    converged = False
    it = 0
    u = np.zeros(2)
    for it in range(1, max_iter + 1):
        s = koff @ (m * r) + kd_extra * r
        np.divide(p, s, out=u, where=on)
        growth = (m * u) @ koff + u * kd_extra
        r_new = r * growth
        residual = float(np.abs(r_new - r).max())
        r = r_new
        if residual < tol and growth.max() <= 1.0 + 1e-9:
            converged = True
            break

    s = koff @ (m * r) + kd_extra * r
    np.divide(p, s, out=u, where=on)
    growth = (m * u) @ koff + u * kd_extra
    r_out = r * growth

    # per-source-block expected distortion and information, masked at zeros
    numer_d = (koff * d) @ (m * r) + (kdiag * dg - np.diag(koff) * np.diag(d)) * r
    distortion = float(np.sum(np.where(on, m * p * numer_d / np.where(on, s, 1.0), 0.0)))

    def _xlogy(w, k, s_t):
        return np.where(w > 0.0, w * (np.log(np.where(k > 0.0, k, 1.0)) - np.log(s_t)), 0.0)

    mi = 0.0
    for t in range(2):
        if not on[t]:
            continue
        w_off = koff[t] * (m * r) / s[t]  # mass on each block's "other" symbols
        w_diag = kd_extra[t] * r[t] / s[t]
        terms = _xlogy(w_off, koff[t], s[t]).sum() + float(
            _xlogy(np.array([w_diag]), np.array([kdiag[t]]), s[t])[0]
        )
        mi += m[t] * p[t] * terms
    mi = float(mi)
    if -1e-12 < mi < 0.0:
        mi = 0.0

    return {
        "r": r_out,
        "s": s,
        "mutual_information": mi,
        "expected_distortion": distortion,
        "iterations": it,
        "residual": residual,
        "converged": converged,
        "growth": growth,
    }


def rd_reduced(p2, structure: TwoBlockStructure, delta: float,
               bisect_tol: float = 1e-9, zeta_cap: float = 1e4,
               max_iter: int = 5000, tol: float = 1e-12) -> tuple[float, float]:
    """Rate-distortion value for a block-uniform source, via slope bisection."""
    p2 = np.asarray(p2, dtype=float)
    if delta >= delta_max_reduced(p2, structure):
        return 0.0, 0.0
    r_warm = None

    def evaluate(zeta):
        nonlocal r_warm
        fp = ba_reduced(p2, structure, zeta, r2=r_warm, max_iter=max_iter, tol=tol)
        r_warm = np.maximum(fp["r"], 1e-280)
        return fp

    lo = 0.0
    hi = 1.0
    fp = evaluate(hi)
    while fp["expected_distortion"] > delta:
        hi *= 2.0
        if hi > zeta_cap:
            raise BisectionFailureError(f"no slope in [0, {zeta_cap:g}] reaches {delta!r}")
        fp = evaluate(hi)
    if abs(fp["expected_distortion"] - delta) <= bisect_tol:
        return fp["mutual_information"], hi
    zeta = hi
    while True:
        zeta = 0.5 * (lo + hi)
        fp = evaluate(zeta)
        if abs(fp["expected_distortion"] - delta) <= bisect_tol:
            return fp["mutual_information"], zeta
        if fp["expected_distortion"] > delta:
            lo = zeta
        else:
            hi = zeta
        if hi - lo < 1e-13 * max(1.0, hi):
            rate = fp["mutual_information"] + zeta * (fp["expected_distortion"] - delta)
            return max(rate, 0.0), zeta


def rate_curve_reduced(p2_batch, structure: TwoBlockStructure, delta: float,
                       bisect_tol: float = 1e-8, zeta_cap: float = 1e4,
                       max_iter: int = 3000, tol: float = 1e-11) -> np.ndarray:
    """Vectorized rd_reduced over a batch of block-uniform sources.

    Used to sweep mixture weights when building the closed-form reference
    curve; one batched bisection replaces thousands of scalar solves.
    """
    P = np.asarray(p2_batch, dtype=float)  # (L, 2) per-symbol masses
    L = P.shape[0]
    m = structure.counts
    d = structure.off_matrix
    dg = structure.diag_vector

    dmax = (P * m) @ d + P * (dg - np.diag(d))
    dmax = dmax.min(axis=1)
    done = delta >= dmax
    rates = np.zeros(L)

    def distortion_at(zetas, r0):
        koff = np.exp(-zetas[:, None, None] * d[None, :, :])  # (L,2,2)
        kdiag = np.exp(-zetas[:, None] * dg[None, :])
        kd_extra = kdiag - koff[:, [0, 1], [0, 1]]
        r = r0.copy()
        on = P > 0.0
        u = np.zeros_like(P)
        for _ in range(max_iter):
            s = np.einsum("ltu,lu->lt", koff, m * r) + kd_extra * r
            u[:] = 0.0
            np.divide(P, s, out=u, where=on)
            growth = np.einsum("lt,ltu->lu", m * u, koff) + u * kd_extra
            r_new = r * growth
            if np.abs(r_new - r).max() < tol and growth.max() <= 1.0 + 1e-9:
                r = r_new
                break
            r = r_new
        s = np.einsum("ltu,lu->lt", koff, m * r) + kd_extra * r
        numer_d = np.einsum("ltu,lu->lt", koff * d[None, :, :], m * r) + (
            kdiag * dg[None, :] - koff[:, [0, 1], [0, 1]] * np.diag(d)[None, :]
        ) * r
        safe_s = np.where(on, s, 1.0)
        dist = np.sum(np.where(on, m * P * numer_d / safe_s, 0.0), axis=1)
        with np.errstate(divide="ignore"):
            log_s = np.log(safe_s)
        info = -np.sum(np.where(on, P * m * log_s, 0.0), axis=1) - zetas * dist
        return dist, info, r

    active = ~done
    if not active.any():
        return rates

    lo = np.zeros(L)
    hi = np.ones(L)
    r = np.full((L, 2), 1.0 / m.sum())
    dist, info, r = distortion_at(hi, r)
    for _ in range(60):  # geometric bracket growth, batched
        need = active & (dist > delta)
        if not need.any():
            break
        hi[need] *= 2.0
        if hi.max() > zeta_cap:
            raise BisectionFailureError("slope cap exceeded while bracketing")
        dist, info, r = distortion_at(hi, r)
    for _ in range(55):
        mid = np.where(active, 0.5 * (lo + hi), 0.0)
        dist, info, r = distortion_at(mid, r)
        high_side = dist > delta
        lo = np.where(active & high_side, mid, lo)
        hi = np.where(active & ~high_side, mid, hi)
        rates = np.where(active, info + mid * (dist - delta), rates)
    return np.maximum(rates, 0.0)


# ---------------------------------------------------------------------------
# reduced exponent solver (mirror of amcd.exponent on block coordinates)
# ---------------------------------------------------------------------------


def _tilted_moments_w(log_a, log_q, lam, counts):
    log_t = (lam * log_a + log_q) / (lam + 1.0)
    z = float(logsumexp(log_t, b=counts))
    u = counts * np.exp(log_t - z)
    g = log_a - log_q
    return z, float(u @ g), float(u @ (g * g))


def _residual_w(lam, log_a, log_q, counts, zeta, delta, rate):
    z, m1, m2 = _tilted_moments_w(log_a, log_q, lam, counts)
    return m1 / (lam + 1.0) + z - zeta * delta - rate, (m2 - m1 * m1) / (lam + 1.0) ** 3


def _solve_multiplier_w(log_a, log_q, counts, zeta, delta, rate, cfg, x0):
    g = log_a - log_q
    f0, _ = _residual_w(0.0, log_a, log_q, counts, zeta, delta, rate)
    if f0 >= 0.0:
        return 0.0, CONSTRAINT_SLACK, 1
    if float(np.ptp(g)) <= 1e-14 * (1.0 + float(np.abs(g).max())):
        return 0.0, FLAT, 1
    evals = 1
    hi = max(1.0, min(2.0 * x0, cfg.lambda_cap))
    f_hi, _ = _residual_w(hi, log_a, log_q, counts, zeta, delta, rate)
    evals += 1
    while f_hi < 0.0:
        if hi >= cfg.lambda_cap:
            return hi, INFEASIBLE, evals
        hi = min(2.0 * hi, cfg.lambda_cap)
        f_hi, _ = _residual_w(hi, log_a, log_q, counts, zeta, delta, rate)
        evals += 1
    res = bracketed_root(
        lambda x: _residual_w(x, log_a, log_q, counts, zeta, delta, rate),
        0.0, f0, hi, f_hi, x0, cfg.newton_tol, cfg.newton_max_iter,
    )
    return res.x, ROOT, evals + res.iterations


def _solve_slope_reduced(q2, log_q, counts, structure, zeta, delta, rate, cfg):
    m = counts
    r = np.full(2, 1.0 / m.sum())
    log_a = log_q.copy()
    lam = 0.0
    p_prev = None
    obj_prev = None
    p = q2
    out = None
    residual = math.nan
    iterates: list[OuterIterate] = []
    for _ in range(cfg.max_outer_iter):
        lam, mstat, n_newton = _solve_multiplier_w(
            log_a, log_q, m, zeta, delta, rate, cfg, x0=lam
        )
        if mstat == INFEASIBLE:
            return ZetaTrace(zeta, "infeasible", math.nan, tuple(iterates)), None, None, lam, math.nan
        if lam == 0.0 and mstat in (CONSTRAINT_SLACK, FLAT):
            p = q2.copy()
        else:
            log_t = (lam * log_a + log_q) / (lam + 1.0)
            p = np.exp(log_t - logsumexp(log_t, b=m))
        fp = ba_reduced(p, structure, zeta, r2=r, max_iter=cfg.max_inner_iter, tol=cfg.ba_tol)
        r = np.maximum(fp["r"], 1e-280)
        log_a = np.log(p) - np.log(fp["s"])
        log_p = np.log(p)
        objective = -float(np.sum(m * p * (log_p - log_q)))
        dual_rate = float(np.sum(m * p * (log_a - log_p)))
        residual = dual_rate - zeta * delta - rate
        dual_value = -zeta * fp["expected_distortion"] + dual_rate
        gap = abs(dual_value - fp["mutual_information"])
        change = 0.0 if p_prev is None else float(np.sum(m * np.abs(p - p_prev)))
        iterates.append(
            OuterIterate(
                objective=objective,
                p_change_l1=change,
                multiplier=lam,
                multiplier_status=mstat,
                newton_iterations=n_newton,
                ba_iterations=fp["iterations"],
                ba_residual=fp["residual"],
                ba_converged=fp["converged"],
                dual_primal_gap=gap,
                dual_feasibility_slack=max(float(fp["growth"].max()) - 1.0, 0.0),
            )
        )
        out = (p, log_a, fp)
        p_prev = p
        if obj_prev is not None and abs(objective - obj_prev) < cfg.objective_stop_tol:
            break
        obj_prev = objective
    value = iterates[-1].objective
    return ZetaTrace(zeta, "ok", value, tuple(iterates)), out[0], out[1], lam, residual


def solve_exponent_reduced(q2, structure: TwoBlockStructure, rate: float, delta: float,
                           cfg: SolverConfig | None = None, threads: int = 1) -> SolveReport:
    """Exponent line search in block coordinates; same algorithm, same
    trace, with the optimizer and certificate expanded back to full length."""
    cfg = cfg or SolverConfig()
    q2 = np.asarray(q2, dtype=float)
    counts = structure.counts
    if not (q2 > 0.0).all():
        raise ValueError("block masses must be strictly positive for the reduced solver")
    log_q = np.log(q2)

    def solve_one(zeta):
        return _solve_slope_reduced(q2, log_q, counts, structure, zeta, delta, rate, cfg)

    results = map_over_grid(solve_one, cfg.zeta_grid, threads)
    traces = tuple(res[0] for res in results)
    values = [res[0].value for res in results]
    k = pick_best(values)
    if k is None:
        return SolveReport(
            value=math.inf, p_star=None, certificate=None, multiplier=math.nan,
            zeta_star=math.nan, trace=traces, feasible=False,
            constraint_residual=math.nan, status="all_zeta_infeasible",
            explanation="rate threshold unreachable at every slope on the grid",
        )
    trace_k, p2, log_a2, lam, residual = results[k]
    sizes = structure.sizes
    p_full = expand_per_symbol(p2, sizes)
    log_a_full = expand_per_symbol(log_a2, sizes)
    fp = ba_reduced(p2, structure, trace_k.zeta, max_iter=cfg.max_inner_iter, tol=cfg.ba_tol)
    growth = fp["growth"]
    cert = DualCertificate(
        zeta=trace_k.zeta,
        a=np.exp(log_a_full),
        log_a=log_a_full,
        column_sums=expand_per_symbol(growth, sizes),
        support_equality_gap=float(np.abs(growth[fp["r"] > 0.0] - 1.0).max()),
    )
    return SolveReport(
        value=-trace_k.value + 0.0,
        p_star=validate_simplex(p_full, tol=1e-9),
        certificate=cert,
        multiplier=lam,
        zeta_star=trace_k.zeta,
        trace=traces,
        feasible=residual >= -1e-6,
        constraint_residual=residual,
    )
