"""Solver configuration, per-iteration traces, and invariant audits.

Both line-search solvers emit the same report structure: the winning value
and optimizer plus, for every slope on the grid, the full outer-iteration
history.  The audit helpers below re-check the analytical guarantees
(objective ascent, the Pinsker-style descent estimate, dual-primal
consistency) on a finished report; they are used heavily by the test suite.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .probability import ProbabilityVector
from .rd import DualCertificate

_DEFAULT_ZETA_GRID = tuple(k * 0.05 for k in range(1, 101))

#: multiplier statuses recorded per outer iteration
ROOT = "root"
CONSTRAINT_SLACK = "constraint_slack"
INFEASIBLE = "infeasible"
CAPPED = "capped"
FLAT = "flat"


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by the exponent and inverse solvers.

    The default slope grid is 100 uniform points on (0, 5], i.e. zeta_k =
    k * 0.05; the grid never contains zero.  ``objective_stop_tol`` stops the
    outer loop once the objective moves less than this between iterations,
    and ``lambda_cap`` bounds the constraint multiplier for either solver.
    """

    zeta_grid: tuple[float, ...] = _DEFAULT_ZETA_GRID
    max_outer_iter: int = 200
    max_inner_iter: int = 1000
    ba_tol: float = 1e-10
    newton_tol: float = 1e-10
    newton_max_iter: int = 100
    objective_stop_tol: float = 1e-5
    lambda_cap: float = 1e8

    def __post_init__(self) -> None:
        grid = tuple(float(z) for z in self.zeta_grid)
        if not grid or any(z <= 0.0 for z in grid):
            raise ValueError("zeta_grid must be nonempty with strictly positive entries")
        object.__setattr__(self, "zeta_grid", grid)
        for name in ("newton_tol", "objective_stop_tol", "ba_tol", "lambda_cap"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def with_mesh(cls, count: int = 100, mesh: float = 0.05, **kwargs) -> "SolverConfig":
        """Grid zeta_k = k * mesh for k = 1..count."""
        if count < 1 or mesh <= 0.0:
            raise ValueError("count must be >= 1 and mesh positive")
        return cls(zeta_grid=tuple(k * mesh for k in range(1, count + 1)), **kwargs)


@dataclass(frozen=True)
class OuterIterate:
    """One outer iteration at a fixed slope."""

    objective: float
    p_change_l1: float
    multiplier: float
    multiplier_status: str
    newton_iterations: int
    ba_iterations: int
    ba_residual: float
    ba_converged: bool
    dual_primal_gap: float
    dual_feasibility_slack: float


@dataclass(frozen=True)
class ZetaTrace:
    """History of one slope on the line-search grid."""

    zeta: float
    status: str  # "ok" | "infeasible"
    value: float  # objective at the last iterate; nan when infeasible
    iterations: tuple[OuterIterate, ...] = field(repr=False)


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a line-search solve.

    ``value`` is the reported quantity (divergence exponent or rate, nats).
    ``constraint_residual`` is the signed residual of the decoupled
    constraint at the optimum: dual rate minus the threshold for the
    exponent solver, divergence minus the budget for the inverse solver.
    ``feasible`` states whether that constraint holds within 1e-6.
    """

    value: float
    p_star: ProbabilityVector | None
    certificate: DualCertificate | None
    multiplier: float
    zeta_star: float
    trace: tuple[ZetaTrace, ...]
    feasible: bool
    constraint_residual: float
    status: str = "ok"
    explanation: str = ""


def map_over_grid(fn, grid, threads: int | None):
    """Apply ``fn`` to every grid point, in order, optionally threaded.

    The returned list follows grid order regardless of thread count, so any
    reduction over it is deterministic.
    """
    if threads is None:
        threads = 1
    if threads <= 1 or len(grid) <= 1:
        return [fn(z) for z in grid]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, grid))


def pick_best(values: list[float], tie_tol: float = 1e-12) -> int | None:
    """Index of the maximum; first index within ``tie_tol`` of it wins.

    ``nan`` entries (infeasible slopes) are skipped; returns None when every
    entry is nan.
    """
    best = -math.inf
    for v in values:
        if not math.isnan(v) and v > best:
            best = v
    if best == -math.inf:
        return None
    for k, v in enumerate(values):
        if not math.isnan(v) and v >= best - tie_tol:
            return k
    return None


# ---------------------------------------------------------------------------
# invariant audits
# ---------------------------------------------------------------------------


def audit_objective_ascent(report: SolveReport, slack: float = 1e-9) -> list[str]:
    """Violations of per-slope monotone ascent of the objective trace."""
    out = []
    for tr in report.trace:
        objs = [it.objective for it in tr.iterations]
        for n in range(1, len(objs)):
            if objs[n] < objs[n - 1] - slack:
                out.append(
                    f"zeta={tr.zeta:g} iter={n}: objective fell by {objs[n-1]-objs[n]:.3e}"
                )
    return out


def audit_pinsker_descent(report: SolveReport, slack: float = 1e-8) -> list[str]:
    """Violations of the ascent estimate
    obj[n] - obj[n-1] >= 0.5 * ||p_n - p_{n-1}||_1^2 - slack."""
    out = []
    for tr in report.trace:
        its = tr.iterations
        for n in range(1, len(its)):
            gain = its[n].objective - its[n - 1].objective
            bound = 0.5 * its[n].p_change_l1 ** 2
            if gain < bound - slack:
                out.append(
                    f"zeta={tr.zeta:g} iter={n}: gain {gain:.3e} < bound {bound:.3e}"
                )
    return out


def audit_dual_consistency(report: SolveReport, tol: float = 1e-6) -> list[str]:
    """Violations of |dual value - mutual information| <= tol and of dual
    feasibility max_j sum_i a_i exp(-zeta d_ij) <= 1 + tol, per iterate."""
    out = []
    for tr in report.trace:
        for n, it in enumerate(tr.iterations):
            if it.dual_primal_gap > tol:
                out.append(f"zeta={tr.zeta:g} iter={n}: dual gap {it.dual_primal_gap:.3e}")
            if it.dual_feasibility_slack > tol:
                out.append(
                    f"zeta={tr.zeta:g} iter={n}: feasibility slack "
                    f"{it.dual_feasibility_slack:.3e}"
                )
    return out
