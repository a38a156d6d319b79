"""Probability-simplex primitives and divergences shared by every solver.

All logarithms throughout the package are natural, so every rate and
divergence is measured in nats.  Every type is immutable after construction
and every operation is a pure function; identical inputs give bit-identical
outputs, so concurrent use needs no locking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    DomainError,
    NegativeEntryError,
    SumNotOneError,
    SupportMismatchError,
)

#: entries at or below this are treated as exact zeros (off support)
SUPPORT_EPSILON = 1e-300

#: default tolerance on |sum - 1| for a valid distribution
SIMPLEX_TOL = 1e-12


def _as_vector(values, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionMismatchError(f"{name} must be a nonempty 1-D sequence")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ProbabilityVector:
    """A distribution over a finite alphabet.

    Construct through :func:`validate_simplex`, which checks non-negativity
    and normalization without ever renormalizing silently.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _freeze(_as_vector(self.values)))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def support_mask(self) -> np.ndarray:
        """Boolean mask of entries strictly above ``SUPPORT_EPSILON``."""
        return self.values > SUPPORT_EPSILON


@dataclass(frozen=True)
class DistortionMatrix:
    """A nonnegative, finite M-by-N distortion table d(x_i, y_j).

    Optional ``source_labels`` / ``reproduction_labels`` carry alphabet
    names for reporting; they play no numerical role.
    """

    entries: np.ndarray
    source_labels: tuple[str, ...] | None = None
    reproduction_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionMismatchError("distortion entries must form a nonempty 2-D matrix")
        if not np.isfinite(arr).all():
            raise DomainError("distortion entries must be finite")
        if (arr < 0).any():
            raise NegativeEntryError("distortion entries must be nonnegative")
        object.__setattr__(self, "entries", _freeze(arr))
        for attr in ("source_labels", "reproduction_labels"):
            labels = getattr(self, attr)
            if labels is not None:
                labels = tuple(str(s) for s in labels)
                n = arr.shape[0] if attr == "source_labels" else arr.shape[1]
                if len(labels) != n:
                    raise DimensionMismatchError(f"{attr} has wrong length")
                object.__setattr__(self, attr, labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class ConditionalMatrix:
    """A test channel: row i is a distribution over reproduction symbols."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionMismatchError("conditional entries must form a nonempty 2-D matrix")
        if (arr < 0).any():
            raise NegativeEntryError("conditional probabilities must be nonnegative")
        row_sums = arr.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > SIMPLEX_TOL:
            worst = float(np.abs(row_sums - 1.0).max())
            raise SumNotOneError(f"conditional rows must sum to 1 (worst |sum-1| = {worst:.3e})")
        object.__setattr__(self, "entries", _freeze(arr))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape  # type: ignore[return-value]


def _values(p) -> np.ndarray:
    """Accept a ProbabilityVector or a raw array-like."""
    return p.values if isinstance(p, ProbabilityVector) else _as_vector(p)


def validate_simplex(values, tol: float = SIMPLEX_TOL) -> ProbabilityVector:
    """Check that ``values`` is a distribution and wrap it.

    Raises :class:`NegativeEntryError` or :class:`SumNotOneError` instead of
    renormalizing; callers that *want* renormalization (e.g. discretizer
    output) must do it explicitly before validating.
    """
    arr = _as_vector(values)
    if not np.isfinite(arr).all():
        raise DomainError("distribution entries must be finite")
    if (arr < 0).any():
        worst = float(arr.min())
        raise NegativeEntryError(f"negative probability entry {worst:.3e}")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise SumNotOneError(f"entries sum to {total!r}, not 1 within {tol:g}")
    return ProbabilityVector(arr)


def kl_divergence(p, q) -> float:
    """Kullback-Leibler divergence D(p || q) in nats.

    Uses the convention 0*log(0) = 0.  Raises
    :class:`SupportMismatchError` when p puts mass where q vanishes,
    signalling an infinite divergence instead of returning one.
    """
    pv, qv = _values(p), _values(q)
    if pv.shape != qv.shape:
        raise DimensionMismatchError("p and q must share an alphabet")
    on = pv > SUPPORT_EPSILON
    if (qv[on] <= SUPPORT_EPSILON).any():
        raise SupportMismatchError("p is not absolutely continuous w.r.t. q")
    val = float(np.sum(pv[on] * (np.log(pv[on]) - np.log(qv[on]))))
    # cancellation can leave a tiny negative residue for p ~= q
    if -1e-12 < val < 0.0:
        return 0.0
    return val


def binary_kl(lam: float, xi: float) -> float:
    """Two-point divergence D((lam,1-lam) || (xi,1-xi)) in nats."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lam={lam!r} outside [0, 1]")
    if lam == xi:
        return 0.0
    if xi <= 0.0 or xi >= 1.0:
        raise DomainError(f"xi={xi!r} outside (0, 1) with lam != xi")
    val = 0.0
    if lam > 0.0:
        val += lam * np.log(lam / xi)
    if lam < 1.0:
        val += (1.0 - lam) * np.log((1.0 - lam) / (1.0 - xi))
    return float(max(val, 0.0))


def delta_max(q, d: DistortionMatrix) -> float:
    """Smallest expected distortion achievable by a constant reproduction.

    Above this threshold the rate-distortion function is identically zero.
    """
    qv = _values(q)
    entries = d.entries if isinstance(d, DistortionMatrix) else np.asarray(d, dtype=float)
    if entries.ndim != 2 or qv.size != entries.shape[0]:
        raise DimensionMismatchError(
            f"q has length {qv.size} but distortion matrix has {entries.shape[0]} rows"
        )
    return float((qv @ entries).min())
