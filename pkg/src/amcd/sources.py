"""Experimental inputs: discretized densities and the counterexample family.

Continuous sources are truncated to [-L, L] and placed on the midpoint grid
x_i = -L + (i - 1/2) * (2L/M), with masses proportional to the density and
renormalized after truncation.  The counterexample family mixes uniform
distributions on two blocks of a partitioned alphabet; its exponent is a
discontinuous function of the rate threshold, which the reference curve
below exposes through a one-dimensional scan of the mixture weight.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateDensityError, DimensionMismatchError, MissingDistortionError
from .partitioned import TwoBlockStructure, detect_two_block, rate_curve_reduced, rd_reduced
from .probability import DistortionMatrix, ProbabilityVector, binary_kl, validate_simplex
from .rd import rd_at_distortion


@dataclass(frozen=True)
class DiscretizationSpec:
    """Truncated midpoint discretization of a density on [-L, L].

    ``family`` selects gaussian(mean, sigma), laplacian(scale), or a custom
    density callback evaluated pointwise on the grid.
    """

    half_width: float
    points: int
    family: str = "gaussian"
    mean: float = 0.0
    sigma: float = 1.0
    scale: float = 1.0
    density: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.half_width <= 0.0:
            raise ValueError("half_width must be positive")
        if self.points < 2:
            raise ValueError("points must be at least 2")
        if self.family not in ("gaussian", "laplacian", "custom"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "custom" and self.density is None:
            raise ValueError("custom family needs a density callback")


def discretize(spec: DiscretizationSpec) -> tuple[np.ndarray, ProbabilityVector]:
    """Midpoint grid and renormalized masses for a truncated density."""
    L, M = spec.half_width, spec.points
    step = 2.0 * L / M
    grid = -L + (np.arange(1, M + 1) - 0.5) * step
    if spec.family == "gaussian":
        z = (grid - spec.mean) / spec.sigma
        masses = np.exp(-0.5 * z * z)
    elif spec.family == "laplacian":
        masses = np.exp(-np.abs(grid) / spec.scale)
    else:
        masses = np.asarray(spec.density(grid), dtype=float)
        if masses.shape != grid.shape or (masses < 0).any():
            raise ValueError("density callback must return nonnegative values per grid point")
    total = float(masses.sum())
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateDensityError("all discretized masses underflowed")
    return grid, validate_simplex(masses / total)


def distortion_grid(grid_x, grid_y, kind: str = "squared") -> DistortionMatrix:
    """Pairwise distortion table between two grids."""
    gx = np.asarray(grid_x, dtype=float)
    gy = np.asarray(grid_y, dtype=float)
    if gx.ndim != 1 or gy.ndim != 1 or gx.size == 0 or gy.size == 0:
        raise DimensionMismatchError("grids must be nonempty 1-D sequences")
    diff = gx[:, None] - gy[None, :]
    if kind == "squared":
        return DistortionMatrix(diff * diff)
    if kind == "absolute":
        return DistortionMatrix(np.abs(diff))
    raise ValueError(f"unknown distortion kind {kind!r}")


# ---------------------------------------------------------------------------
# partitioned-alphabet counterexample family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AhlswedeSpec:
    """Partitioned alphabet X_A u X_B with a two-block mixture source.

    ``size_b`` defaults to size_a**3.  The distortion is either user
    supplied (``distortion_override``, which should respect the block
    symmetry for the reference curve to be exact) or the built-in default
    family: zero on the diagonal, 1 between distinct symbols of X_A and
    across blocks, and ``a_param`` between distinct symbols of X_B.
    """

    size_a: int
    size_b: int | None = None
    a_param: float = 0.340
    xi: float = 0.01
    distortion_override: DistortionMatrix | None = None
    use_default_distortion: bool = True

    def __post_init__(self) -> None:
        if self.size_a < 1:
            raise ValueError("size_a must be at least 1")
        if self.size_b is None:
            object.__setattr__(self, "size_b", self.size_a**3)
        if self.size_b < 1:
            raise ValueError("size_b must be at least 1")
        if not 0.0 < self.xi < 1.0:
            raise ValueError("xi must lie strictly inside (0, 1)")
        if self.a_param < 0.0:
            raise ValueError("a_param must be nonnegative")
        if self.distortion_override is not None:
            n = self.size_a + self.size_b
            if not isinstance(self.distortion_override, DistortionMatrix):
                object.__setattr__(
                    self, "distortion_override", DistortionMatrix(self.distortion_override)
                )
            if self.distortion_override.shape != (n, n):
                raise DimensionMismatchError(
                    f"override must be {n}x{n} for the partitioned alphabet"
                )

    @property
    def alphabet_size(self) -> int:
        return self.size_a + self.size_b


def default_partition_distortion(size_a: int, size_b: int, a_param: float) -> DistortionMatrix:
    """Built-in block-symmetric distortion: repetition cost 1 inside the
    first block and across blocks, ``a_param`` inside the second block."""
    structure = TwoBlockStructure(
        sizes=(size_a, size_b),
        off=((1.0, 1.0), (1.0, a_param)),
        diag=(0.0, 0.0),
    )
    return DistortionMatrix(structure.to_matrix())


def ahlswede_build(
    spec: AhlswedeSpec,
) -> tuple[ProbabilityVector, DistortionMatrix, ProbabilityVector, ProbabilityVector]:
    """Mixture source, distortion matrix and the pure block distributions.

    The source is xi * uniform(X_A) + (1 - xi) * uniform(X_B) laid out as a
    single vector over X_A u X_B; Y = X.
    """
    ma, mb = spec.size_a, spec.size_b
    if spec.distortion_override is not None:
        d = spec.distortion_override
    elif spec.use_default_distortion:
        d = default_partition_distortion(ma, mb, spec.a_param)
    else:
        raise MissingDistortionError(
            "no distortion override supplied and the built-in default is disabled"
        )
    q = np.concatenate([np.full(ma, spec.xi / ma), np.full(mb, (1.0 - spec.xi) / mb)])
    qa = np.concatenate([np.full(ma, 1.0 / ma), np.zeros(mb)])
    qb = np.concatenate([np.zeros(ma), np.full(mb, 1.0 / mb)])
    return validate_simplex(q), d, validate_simplex(qa), validate_simplex(qb)


def mixture_source(spec: AhlswedeSpec, weight: float) -> np.ndarray:
    """weight * uniform(X_A) + (1 - weight) * uniform(X_B) as a full vector."""
    ma, mb = spec.size_a, spec.size_b
    return np.concatenate([np.full(ma, weight / ma), np.full(mb, (1.0 - weight) / mb)])


def _structure_for(spec: AhlswedeSpec) -> TwoBlockStructure | None:
    if spec.distortion_override is not None:
        return detect_two_block(spec.distortion_override, spec.size_a)
    if spec.use_default_distortion:
        return TwoBlockStructure(
            sizes=(spec.size_a, spec.size_b),
            off=((1.0, 1.0), (1.0, spec.a_param)),
            diag=(0.0, 0.0),
        )
    raise MissingDistortionError(
        "no distortion override supplied and the built-in default is disabled"
    )


_RATE_CURVE_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _spec_key(spec: AhlswedeSpec) -> tuple:
    override = spec.distortion_override
    key = None if override is None else override.entries.tobytes()
    return (spec.size_a, spec.size_b, spec.a_param, spec.use_default_distortion, key)


def mixture_rate_curve(
    spec: AhlswedeSpec, delta: float, lambda_grid: int = 2001
) -> tuple[np.ndarray, np.ndarray]:
    """R(delta, Q_w) over a uniform grid of mixture weights w in [0, 1].

    Cached per (spec, delta, grid) since the curve does not depend on the
    rate threshold.  Block-symmetric matrices use the reduced batched
    solver; arbitrary overrides fall back to the generic scalar path.
    """
    cache_key = (_spec_key(spec), float(delta), int(lambda_grid))
    hit = _RATE_CURVE_CACHE.get(cache_key)
    if hit is not None:
        return hit
    lams = np.linspace(0.0, 1.0, lambda_grid)
    structure = _structure_for(spec)
    if structure is not None:
        ma, mb = spec.size_a, spec.size_b
        P = np.column_stack([lams / ma, (1.0 - lams) / mb])
        rates = rate_curve_reduced(P, structure, delta)
    else:
        _, d, _, _ = ahlswede_build(spec)
        rates = np.array(
            [rd_at_distortion(mixture_source(spec, w), d, delta)[0] for w in lams]
        )
    result = (lams, rates)
    _RATE_CURVE_CACHE[cache_key] = result
    return result


def _refine_boundary(spec, structure, delta, rate, w_lo, w_hi, feasible_lo, steps=40):
    """Bisect the feasibility boundary of R(delta, Q_w) >= rate in [w_lo, w_hi]."""
    ma, mb = spec.size_a, spec.size_b

    def rate_at(w):
        if structure is not None:
            return rd_reduced(np.array([w / ma, (1.0 - w) / mb]), structure, delta)[0]
        _, d, _, _ = ahlswede_build(spec)
        return rd_at_distortion(mixture_source(spec, w), d, delta)[0]

    lo, hi = w_lo, w_hi
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if (rate_at(mid) >= rate) == feasible_lo:
            lo = mid
        else:
            hi = mid
    boundary = lo if feasible_lo else hi
    return boundary


def ahlswede_theoretical_curve(
    spec: AhlswedeSpec, delta: float, rate: float, lambda_grid: int = 2001
) -> float:
    """Reference exponent from the mixture-weight scan:

        min D_2(w || xi)  over weights w with R(delta, Q_w) >= rate,

    where D_2 is the two-point divergence.  Returns +inf when no weight on
    the (boundary-refined) grid is feasible.
    """
    lams, rates = mixture_rate_curve(spec, delta, lambda_grid)
    feasible = rates >= rate
    structure = _structure_for(spec)
    candidates: list[float] = [float(w) for w in lams[feasible]]
    flips = np.nonzero(feasible[:-1] != feasible[1:])[0]
    for i in flips:
        candidates.append(
            float(
                _refine_boundary(
                    spec, structure, delta, rate, lams[i], lams[i + 1], bool(feasible[i])
                )
            )
        )
    if not candidates:
        return math.inf
    return min(binary_kl(w, spec.xi) for w in candidates)


def load_distortion_csv(path) -> DistortionMatrix:
    """Distortion matrix from a CSV file: plain decimals, comma separated,
    optional header row (rows = source symbols, columns = reproductions)."""
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as handle:
        for record in csv.reader(handle):
            cells = [c.strip() for c in record if c.strip() != ""]
            if not cells:
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                if rows:
                    raise
                continue  # header row
    if not rows:
        raise DimensionMismatchError(f"no numeric rows found in {path}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DimensionMismatchError("ragged rows in distortion CSV")
    return DistortionMatrix(np.asarray(rows, dtype=float))
