"""Safeguarded Newton iteration for monotone scalar functions.

The multiplier updates of both solvers reduce to finding the root of a
monotone function on [0, cap] whose value and derivative come for free
from the same weighted moments.  Newton steps are taken whenever they stay
inside the current sign-change bracket; otherwise the step falls back to
bisection, so convergence never depends on the starting point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable


@dataclass(frozen=True)
class RootResult:
    x: float
    residual: float
    iterations: int
    converged: bool


def bracketed_root(
    fun: Callable[[float], tuple[float, float]],
    lo: float,
    f_lo: float,
    hi: float,
    f_hi: float,
    x0: float,
    tol: float,
    max_iter: int,
) -> RootResult:
    """Root of a monotone function on [lo, hi] with a sign change.

    ``fun(x)`` returns ``(value, derivative)``.  Requires
    ``sign(f_lo) != sign(f_hi)`` (one may be zero).  Stops when
    ``|value| < tol``; after ``max_iter`` evaluations returns the best
    midpoint with ``converged=False``.
    """
    if f_lo == 0.0:
        return RootResult(lo, 0.0, 0, True)
    if f_hi == 0.0:
        return RootResult(hi, 0.0, 0, True)
    if (f_lo > 0.0) == (f_hi > 0.0):
        raise ValueError("bracket endpoints must differ in sign")
    increasing = f_hi > 0.0

    x = min(max(x0, lo), hi)
    if x == lo or x == hi:
        x = 0.5 * (lo + hi)
    value = float("nan")
    for it in range(1, max_iter + 1):
        value, deriv = fun(x)
        if abs(value) < tol:
            return RootResult(x, abs(value), it, True)
        if (value > 0.0) == increasing:
            hi = x
        else:
            lo = x
        step_ok = deriv != 0.0 and abs(deriv) > 1e-300
        if step_ok:
            nxt = x - value / deriv
            step_ok = lo < nxt < hi
        x = nxt if step_ok else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, abs(hi)):
            # bracket exhausted (near-flat function); accept the midpoint
            return RootResult(x, abs(value), it, True)
    return RootResult(x, abs(value), max_iter, False)
