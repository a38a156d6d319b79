"""Blahut-Arimoto solver at a fixed distortion slope and its dual certificate.

For a slope zeta >= 0 the test channel and reproduction marginal are
updated alternately,

    w_ij <- exp(-zeta*d_ij) * r_j / sum_j exp(-zeta*d_ij) * r_j,
    r_j  <- sum_i p_i * w_ij,

until the marginal stabilizes.  At the fixed point the vector
a_i = p_i / sum_j exp(-zeta*d_ij) r_j certifies optimality: the dual value
-zeta*E[d] + sum_i p_i log(a_i/p_i) matches the mutual information, and
sum_i a_i exp(-zeta*d_ij) <= 1 for every column with equality on the
support of r.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import BisectionFailureError, DegenerateDenominatorError
from .probability import (
    SUPPORT_EPSILON,
    ConditionalMatrix,
    DistortionMatrix,
    ProbabilityVector,
    _values,
    delta_max,
    validate_simplex,
)

#: slack allowed on the dual feasibility factors before declaring convergence
_DUAL_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class BAFixedPoint:
    """Converged (or iteration-capped) state of the alternating updates.

    ``converged`` is False when the iteration cap was hit with the marginal
    still moving; callers treat that as a flagged result, not a failure,
    because the outer solvers tolerate approximate inner solves.
    """

    w: ConditionalMatrix
    r: ProbabilityVector
    mutual_information: float
    expected_distortion: float
    iterations: int
    converged: bool
    residual: float
    objective_trace: tuple[float, ...] | None = None


@dataclass(frozen=True)
class DualCertificate:
    """Slope/row-weight pair (zeta, a) certifying a rate-distortion value.

    ``column_sums`` holds sum_i a_i exp(-zeta*d_ij) per reproduction symbol;
    feasibility demands max(column_sums) <= 1 + tol with equality on the
    support of the reproduction marginal.  ``support_equality_gap`` is the
    worst |column_sum - 1| over that support.
    """

    zeta: float
    a: np.ndarray
    log_a: np.ndarray = field(repr=False)
    column_sums: np.ndarray = field(repr=False)
    support_equality_gap: float

    def __post_init__(self) -> None:
        for name in ("a", "log_a", "column_sums"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def max_column_sum(self) -> float:
        return float(self.column_sums.max())

    def dual_value(self, p, expected_distortion: float) -> float:
        """-zeta*E[d] + sum_i p_i log(a_i / p_i), the dual objective."""
        pv = _values(p)
        on = pv > SUPPORT_EPSILON
        return float(
            -self.zeta * expected_distortion
            + np.sum(pv[on] * (self.log_a[on] - np.log(pv[on])))
        )


def _ba_iterate(p, logK, K, r0, max_iter, tol, record_objective):
    """Core alternating loop on raw arrays; returns (r, iterations, residual,
    converged, trace)."""
    r = np.array(r0, dtype=float)
    on = p > 0.0
    trace: list[float] | None = [] if record_objective else None
    residual = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        s = K @ r
        if not (s[on] > 0.0).all():
            # total underflow on a supported row; retry that row in log domain
            with np.errstate(divide="ignore"):
                log_r = np.log(r)
            bad = on & (s <= 0.0)
            log_s_bad = logsumexp(logK[bad] + log_r[None, :], axis=1)
            if not np.isfinite(log_s_bad).all():
                raise DegenerateDenominatorError(
                    "row denominator underflowed even in log domain"
                )
            s = s.copy()
            s[bad] = np.exp(log_s_bad)
            if not (s[on] > 0.0).all():
                raise DegenerateDenominatorError(
                    "row denominator underflowed even in log domain"
                )
        if record_objective:
            trace.append(float(-np.sum(p[on] * np.log(s[on]))))
        u = np.zeros_like(p)
        np.divide(p, s, out=u, where=on)
        growth = K.T @ u
        r_new = r * growth
        residual = float(np.abs(r_new - r).max())
        r = r_new
        if residual < tol and growth.max() <= 1.0 + _DUAL_FEAS_TOL:
            converged = True
            break
    return r, it, residual, converged, trace


def ba_fixed_slope(
    p,
    d: DistortionMatrix,
    zeta: float,
    r_init=None,
    max_inner_iter: int = 1000,
    ba_tol: float = 1e-10,
    record_objective: bool = False,
) -> BAFixedPoint:
    """Run the alternating updates at a fixed slope until the marginal is
    stable.

    Parameters
    ----------
    p : ProbabilityVector or array
        Source distribution (zero entries are allowed and stay inert).
    d : DistortionMatrix
        Distortion table, shape (M, N).
    zeta : float
        Nonnegative distortion slope.  zeta = 0 decouples reproduction from
        source and gives zero mutual information.
    r_init : optional array
        Starting reproduction marginal, strictly positive; defaults to
        uniform 1/N.
    max_inner_iter, ba_tol :
        Iteration cap and tolerance on the max-entry change of r.  The
        exponentials exp(-zeta*d) are computed once and cached for the loop.
    record_objective : bool
        When True, the per-iteration value of -sum_i p_i log(sum_j
        exp(-zeta*d_ij) r_j) is kept; it is non-increasing along the
        iteration and equals I + zeta*E[d] at the fixed point.
    """
    pv = _values(p)
    dmat = d.entries if isinstance(d, DistortionMatrix) else np.asarray(d, dtype=float)
    if zeta < 0.0:
        raise ValueError("zeta must be nonnegative")
    M, N = dmat.shape
    if pv.size != M:
        raise ValueError(f"p has length {pv.size}, expected {M}")
    if r_init is None:
        r0 = np.full(N, 1.0 / N)
    else:
        r0 = np.asarray(_values(r_init), dtype=float)
        if r0.size != N or (r0 <= 0.0).any():
            raise ValueError("r_init must be strictly positive with length N")

    logK = -zeta * dmat
    K = np.exp(logK)
    r, iterations, residual, converged, trace = _ba_iterate(
        pv, logK, K, r0, max_inner_iter, ba_tol, record_objective
    )

    # final half-step: a channel consistent with r plus its exact marginal
    s = K @ r
    bad = s <= 0.0
    safe_s = np.where(bad, 1.0, s)
    w = K * (r[None, :] / safe_s[:, None])
    if bad.any():
        with np.errstate(divide="ignore"):
            log_r = np.log(r)
        on_bad = bad & (pv > 0.0)
        if on_bad.any():
            log_s_bad = logsumexp(logK[on_bad] + log_r[None, :], axis=1)
            if not np.isfinite(log_s_bad).all():
                raise DegenerateDenominatorError(
                    "row denominator underflowed even in log domain"
                )
            w[on_bad] = np.exp(logK[on_bad] + log_r[None, :] - log_s_bad[:, None])
        w[bad & (pv == 0.0), :] = 1.0 / N  # inert rows; keep the channel valid
    r_out = pv @ w

    expected = float(np.einsum("i,ij,ij->", pv, w, dmat))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((w > 0.0) & (r_out[None, :] > 0.0), w / r_out[None, :], 1.0)
        mi_terms = w * np.log(ratio)
    mi = float(pv @ mi_terms.sum(axis=1))
    if -1e-12 < mi < 0.0:
        mi = 0.0

    return BAFixedPoint(
        w=ConditionalMatrix(w),
        r=validate_simplex(r_out, tol=1e-10),
        mutual_information=mi,
        expected_distortion=expected,
        iterations=iterations,
        converged=converged,
        residual=residual,
        objective_trace=tuple(trace) if trace is not None else None,
    )


def dual_certificate(p, d: DistortionMatrix, zeta: float, fp: BAFixedPoint) -> DualCertificate:
    """Certificate a_i = p_i / sum_j exp(-zeta*d_ij) r_j at a fixed point.

    Evaluated in the log domain so that tiny reproduction masses cannot
    underflow the denominator.  Symbols with p_i = 0 get a_i = 0; they
    contribute nothing to the column constraints.
    """
    pv = _values(p)
    dmat = d.entries if isinstance(d, DistortionMatrix) else np.asarray(d, dtype=float)
    rv = _values(fp.r)
    with np.errstate(divide="ignore"):
        log_r = np.log(rv)
        log_p = np.where(pv > 0.0, np.log(np.where(pv > 0.0, pv, 1.0)), -np.inf)
    log_s = logsumexp(-zeta * dmat + log_r[None, :], axis=1)
    on = pv > 0.0
    if not np.isfinite(log_s[on]).all():
        raise DegenerateDenominatorError("certificate denominator underflowed")
    log_a = log_p - log_s
    with np.errstate(over="ignore"):
        a = np.exp(log_a)
    col_log = logsumexp(log_a[:, None] - zeta * dmat, axis=0)
    column_sums = np.exp(col_log)
    support = rv > SUPPORT_EPSILON
    gap = float(np.abs(column_sums[support] - 1.0).max()) if support.any() else 0.0
    return DualCertificate(
        zeta=float(zeta),
        a=a,
        log_a=log_a,
        column_sums=column_sums,
        support_equality_gap=gap,
    )


def rd_at_distortion(
    p,
    d: DistortionMatrix,
    delta: float,
    bisect_tol: float = 1e-9,
    zeta_cap: float = 1e4,
    max_inner_iter: int = 5000,
    ba_tol: float = 1e-12,
) -> tuple[float, float]:
    """Evaluate the rate-distortion function R(delta, p) in nats.

    Bisects the slope until the fixed point's expected distortion matches
    ``delta`` within ``bisect_tol`` and returns ``(rate, zeta_star)``.  On the
    rare linear segments of the rate-distortion curve the slope interval
    collapses before the distortion target is met; the rate is then read off
    the tangent line ``I + zeta*(E[d] - delta)``, which is exact there.

    Returns (0, 0) immediately for delta >= delta_max(p, d) and raises
    :class:`BisectionFailureError` when no slope up to ``zeta_cap`` reaches
    the requested distortion.
    """
    pv = _values(p)
    if delta < 0.0:
        raise ValueError("delta must be nonnegative")
    dmat = d if isinstance(d, DistortionMatrix) else DistortionMatrix(np.asarray(d, float))
    if delta >= delta_max(pv, dmat):
        return 0.0, 0.0

    r_warm = None

    def evaluate(zeta: float) -> BAFixedPoint:
        nonlocal r_warm
        fp = ba_fixed_slope(
            pv, dmat, zeta, r_init=r_warm, max_inner_iter=max_inner_iter, ba_tol=ba_tol
        )
        rv = fp.r.values
        # warm-start the next slope; re-inflate exact zeros so r stays valid
        r_warm = np.maximum(rv, 1e-280)
        r_warm = r_warm / r_warm.sum()
        return fp

    lo = 0.0  # expected distortion at zeta -> 0+ is >= delta_max > delta
    hi = 1.0
    fp_hi = evaluate(hi)
    while fp_hi.expected_distortion > delta:
        hi *= 2.0
        if hi > zeta_cap:
            raise BisectionFailureError(
                f"no slope in [0, {zeta_cap:g}] reaches distortion {delta!r}"
            )
        fp_hi = evaluate(hi)
    if abs(fp_hi.expected_distortion - delta) <= bisect_tol:
        return fp_hi.mutual_information, hi

    zeta = hi
    fp = fp_hi
    while True:
        zeta = 0.5 * (lo + hi)
        fp = evaluate(zeta)
        if abs(fp.expected_distortion - delta) <= bisect_tol:
            return fp.mutual_information, zeta
        if fp.expected_distortion > delta:
            lo = zeta
        else:
            hi = zeta
        if hi - lo < 1e-13 * max(1.0, hi):
            # kink in the curve: interpolate along the supporting tangent
            rate = fp.mutual_information + zeta * (fp.expected_distortion - delta)
            return max(rate, 0.0), zeta
