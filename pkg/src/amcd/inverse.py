"""Largest rate-distortion value over a divergence ball around the source.

For a divergence budget E this solver computes

    max R(Delta, p)  over sources p with D(p || q) <= E,

the inverse of the exponent computed in :mod:`amcd.exponent`.  The line
search and alternating structure are identical; only the multiplier
equation, the tilt direction and the per-slope value differ:

    p_i ∝ exp((log a_i + xi*log q_i)/(1+xi)),
    R_k = -zeta_k*Delta + sum_i p_i log(a_i/p_i).

The multiplier residual equals D(p_xi || q) - E and is non-increasing in
xi, so a root exists whenever the residual starts nonnegative; when it
stays positive up to the cap (which happens for E = 0) the multiplier is
clamped at the cap, which drives p back onto q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exponent import _SlopeResult
from .probability import (
    DistortionMatrix,
    ProbabilityVector,
    _values,
    delta_max,
    validate_simplex,
)
from .rd import DualCertificate, ba_fixed_slope, dual_certificate
from .report import (
    CAPPED,
    CONSTRAINT_SLACK,
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
class InverseProblem:
    """Inputs of the inverse computation (exponent budget in nats)."""

    q: ProbabilityVector
    d: DistortionMatrix
    exponent_threshold: float
    distortion_threshold: float

    def __post_init__(self) -> None:
        if not isinstance(self.q, ProbabilityVector):
            object.__setattr__(self, "q", validate_simplex(self.q))
        if not isinstance(self.d, DistortionMatrix):
            object.__setattr__(self, "d", DistortionMatrix(self.d))
        if len(self.q) != self.d.shape[0]:
            raise ValueError("q and d disagree on the source alphabet size")
        if self.exponent_threshold < 0.0:
            raise ValueError("exponent_threshold must be nonnegative")
        dmax = delta_max(self.q, self.d)
        if not 0.0 <= self.distortion_threshold <= dmax + 1e-12:
            raise ValueError(
                f"distortion_threshold must lie in [0, {dmax!r}] for this source"
            )


def _tilted_moments(log_a, log_q, xi):
    log_t = (log_a + xi * log_q) / (1.0 + xi)
    z = float(logsumexp(log_t))
    u = np.exp(log_t - z)
    g = log_a - log_q
    m1 = float(u @ g)
    m2 = float(u @ (g * g))
    return z, m1, m2


def _residual(xi, log_a, log_q, budget):
    z, m1, m2 = _tilted_moments(log_a, log_q, xi)
    value = m1 / (1.0 + xi) - z - budget
    grad = -(m2 - m1 * m1) / (1.0 + xi) ** 3
    return value, grad


def divergence_constraint_residual(xi: float, a, q, budget: float) -> float:
    """Residual of the divergence constraint as a function of xi.

    Equals D(p_xi || q) - budget for the xi-tilted source, so it is
    non-increasing in xi and tends to -budget as xi grows (the tilt
    collapses onto q).
    """
    if xi < 0.0:
        raise ValueError("xi must be nonnegative")
    av, qv = _values(a), _values(q)
    if (av <= 0.0).any() or (qv <= 0.0).any():
        raise ValueError("a and q must be strictly positive")
    return _residual(xi, np.log(av), np.log(qv), budget)[0]


def _solve_multiplier(log_a, log_q, budget, cfg: SolverConfig, x0: float):
    """Root of the divergence residual, or 0 when already feasible.

    Returns (xi, status, evaluations); ``capped`` flags the no-root case
    where the residual stays positive up to the cap (iteration continues
    with xi clamped, which pushes p toward q).
    """
    f0, _ = _residual(0.0, log_a, log_q, budget)
    if f0 < 0.0:
        return 0.0, CONSTRAINT_SLACK, 1
    evals = 1
    hi = max(1.0, min(2.0 * x0, cfg.lambda_cap))
    f_hi, _ = _residual(hi, log_a, log_q, budget)
    evals += 1
    while f_hi > 0.0:
        if hi >= cfg.lambda_cap:
            return hi, CAPPED, evals
        hi = min(2.0 * hi, cfg.lambda_cap)
        f_hi, _ = _residual(hi, log_a, log_q, budget)
        evals += 1

    def fun(x):
        return _residual(x, log_a, log_q, budget)

    res = bracketed_root(fun, 0.0, f0, hi, f_hi, x0, cfg.newton_tol, cfg.newton_max_iter)
    return res.x, ROOT, evals + res.iterations


def _update_source(log_a, log_q, xi):
    log_t = (log_a + xi * log_q) / (1.0 + xi)
    return np.exp(log_t - logsumexp(log_t))


def update_source_inverse(a, q, xi: float) -> ProbabilityVector:
    """Optimal source for a fixed certificate and multiplier:
    p_i ∝ exp((log a_i + xi*log q_i)/(1+xi)).

    xi = 0 normalizes a; large xi collapses onto q.
    """
    if xi < 0.0:
        raise ValueError("xi must be nonnegative")
    av, qv = _values(a), _values(q)
    if (av <= 0.0).any() or (qv <= 0.0).any():
        raise ValueError("a and q must be strictly positive")
    return validate_simplex(_update_source(np.log(av), np.log(qv), xi))


def _solve_single_slope(qv, log_q, dmat, zeta, delta, budget, cfg: SolverConfig) -> _SlopeResult:
    n_repro = dmat.shape[1]
    r = np.full(n_repro, 1.0 / n_repro)
    log_a = log_q.copy()
    xi = 0.0
    p_prev = None
    obj_prev = None
    cert = None
    residual = math.nan
    iterates: list[OuterIterate] = []
    p = qv
    for _ in range(cfg.max_outer_iter):
        xi, mstat, n_newton = _solve_multiplier(log_a, log_q, budget, cfg, x0=xi)
        p = _update_source(log_a, log_q, xi)
        fp = ba_fixed_slope(
            p, dmat, zeta, r_init=r, max_inner_iter=cfg.max_inner_iter, ba_tol=cfg.ba_tol
        )
        r = np.maximum(fp.r.values, 1e-280)
        r = r / r.sum()
        cert = dual_certificate(p, dmat, zeta, fp)
        log_a = cert.log_a
        log_p = np.log(p)
        objective = -zeta * delta + float(np.sum(p * (log_a - log_p)))
        residual = float(np.sum(p * (log_p - log_q))) - budget
        gap = abs(cert.dual_value(p, fp.expected_distortion) - fp.mutual_information)
        change = 0.0 if p_prev is None else float(np.abs(p - p_prev).sum())
        iterates.append(
            OuterIterate(
                objective=objective,
                p_change_l1=change,
                multiplier=xi,
                multiplier_status=mstat,
                newton_iterations=n_newton,
                ba_iterations=fp.iterations,
                ba_residual=fp.residual,
                ba_converged=fp.converged,
                dual_primal_gap=gap,
                dual_feasibility_slack=max(cert.max_column_sum - 1.0, 0.0),
            )
        )
        p_prev = p
        if obj_prev is not None and abs(objective - obj_prev) < cfg.objective_stop_tol:
            break
        obj_prev = objective
    value = iterates[-1].objective
    return _SlopeResult(
        ZetaTrace(zeta, "ok", value, tuple(iterates)), p, log_a, cert, xi, residual
    )


def solve_inverse(
    problem: InverseProblem, cfg: SolverConfig | None = None, threads: int = 1
) -> SolveReport:
    """Line search over the slope grid for the inverse function.

    The per-slope value is R_k = -zeta_k*Delta + sum_i p_i log(a_i/p_i);
    the report carries max_k R_k along with the divergence residual
    D(p* || q) - E of the winning iterate (feasible when <= 1e-6).
    """
    cfg = cfg or SolverConfig()
    q_full = problem.q.values
    active = q_full > 0.0
    qv = q_full[active]
    dmat = problem.d.entries[active, :]
    log_q = np.log(qv)
    delta = problem.distortion_threshold
    budget = problem.exponent_threshold

    def solve_one(zeta: float) -> _SlopeResult:
        return _solve_single_slope(qv, log_q, dmat, zeta, delta, budget, cfg)

    results = map_over_grid(solve_one, cfg.zeta_grid, threads)
    traces = tuple(res.trace for res in results)
    values = [res.trace.value for res in results]
    k = pick_best(values)
    win = results[k]
    p_full = np.zeros_like(q_full)
    p_full[active] = win.p
    cert = win.cert
    if not active.all():
        a_full = np.zeros_like(q_full)
        a_full[active] = cert.a
        log_a_full = np.full_like(q_full, -np.inf)
        log_a_full[active] = cert.log_a
        cert = DualCertificate(
            zeta=cert.zeta,
            a=a_full,
            log_a=log_a_full,
            column_sums=cert.column_sums,
            support_equality_gap=cert.support_equality_gap,
        )
    return SolveReport(
        value=win.trace.value,
        p_star=validate_simplex(p_full, tol=1e-9),
        certificate=cert,
        multiplier=win.multiplier,
        zeta_star=win.trace.zeta,
        trace=traces,
        feasible=win.constraint_residual <= 1e-6,
        constraint_residual=win.constraint_residual,
    )
