"""Exact Poisson functionals behind the execution-cost formulas.

Once the execution cost is conditioned on the price path, the only remaining
randomness is a Poisson fill count whose mean is a functional of that path.
Every expectation the cost, gradient and curvature formulas need is then a
finite sum over the count's support up to the order size ``q`` (all
integrands vanish beyond it), so nothing in this module is ever sampled.

Probabilities are evaluated through the regularized incomplete gamma
function and the pmf in log space: posting very close to the fair price can
make the mean count astronomically large, and naive factorials or naive
``1 - cdf`` complements would overflow or cancel long before that.

All functions broadcast over ``mu`` and are pure, hence thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import DegenerateConditioningError

__all__ = [
    "SeriesCutoff",
    "pmf",
    "cdf",
    "sf",
    "expected_min",
    "expected_shortfall",
    "expected_penalty",
    "penalty_increment_mean",
    "penalty_second_difference_mean",
    "conditional_penalty_increment",
    "series_expectation",
]

# A penalty is any vectorized callable on non-negative reals with
# penalty(0) == 0, non-decreasing and convex (see market.PenaltySpec).
PenaltyFn = Callable[[np.ndarray], np.ndarray]


def _validate_mu(mu) -> np.ndarray:
    arr = np.asarray(mu, dtype=float)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"Poisson intensity must be finite and >= 0, got {mu!r}")
    return arr


def _validate_order(q: int) -> int:
    if q != int(q) or int(q) < 1:
        raise ValueError(f"order size q must be an integer >= 1, got {q!r}")
    return int(q)


def _scalar_like(value: np.ndarray, template) -> np.ndarray | float:
    if np.isscalar(template) or np.ndim(template) == 0:
        return float(value)
    return value


def pmf(mu, k) -> np.ndarray | float:
    """P(N = k) for N Poisson with mean ``mu``.

    Evaluated as ``exp(-mu) * mu**k / k!`` wherever that cannot overflow
    (a few ulp of error), and as ``exp(k log mu - mu - lgamma(k+1))`` for
    the extreme intensities deep posting distances produce.
    ``pmf(0, 0) == 1`` (degenerate count).  Raises on negative ``mu`` or
    negative / non-integer ``k``.
    """
    arr = _validate_mu(mu)
    karr = np.asarray(k, dtype=float)
    if np.any(karr < 0) or np.any(karr != np.floor(karr)):
        raise ValueError(f"count k must be a non-negative integer, got {k!r}")
    mu_b, k_b = np.broadcast_arrays(arr, karr)
    log_power = special.xlogy(k_b, mu_b)
    out = np.exp(log_power - mu_b - special.gammaln(k_b + 1.0))
    direct = (mu_b <= 708.0) & (k_b <= 170.0) & (np.abs(log_power) < 700.0)
    if np.any(direct):
        out = np.array(out)
        m, c = mu_b[direct], k_b[direct]
        out[direct] = np.exp(-m) * m**c / special.factorial(c)
    return _scalar_like(out, mu if np.ndim(mu) else k)


def cdf(mu, k) -> np.ndarray | float:
    """P(N <= k); ``k`` may be negative (empty event, probability 0).

    Uses the upper regularized incomplete gamma identity, exact for any
    magnitude of ``mu`` without summing the support.
    """
    arr = _validate_mu(mu)
    karr = np.asarray(k, dtype=float)
    if np.any(karr != np.floor(karr)):
        raise ValueError(f"count k must be an integer, got {k!r}")
    out = np.where(karr < 0, 0.0, special.gammaincc(np.maximum(karr, 0.0) + 1.0, arr))
    return _scalar_like(out, mu if np.ndim(mu) else k)


def sf(mu, k) -> np.ndarray | float:
    """P(N > k), the exact complement of :func:`cdf` (no cancellation)."""
    arr = _validate_mu(mu)
    karr = np.asarray(k, dtype=float)
    if np.any(karr != np.floor(karr)):
        raise ValueError(f"count k must be an integer, got {k!r}")
    out = np.where(karr < 0, 1.0, special.gammainc(np.maximum(karr, 0.0) + 1.0, arr))
    return _scalar_like(out, mu if np.ndim(mu) else k)


def expected_min(mu, q: int) -> np.ndarray | float:
    """E[min(q, N)] = q P(N > q) + mu P(N <= q - 1)."""
    q = _validate_order(q)
    arr = _validate_mu(mu)
    out = q * sf(arr, q) + arr * cdf(arr, q - 1)
    return _scalar_like(out, mu)


def expected_shortfall(mu, q: int) -> np.ndarray | float:
    """E[(q - N)_+] = q P(N <= q) - mu P(N <= q - 1)."""
    q = _validate_order(q)
    arr = _validate_mu(mu)
    out = q * cdf(arr, q) - arr * cdf(arr, q - 1)
    return _scalar_like(out, mu)


def _support_pmf(mu: np.ndarray, q: int) -> np.ndarray:
    """pmf(mu, j) for j = 0..q-1 as a (..., q) matrix."""
    j = np.arange(q, dtype=float)
    m = mu[..., None]
    return np.exp(special.xlogy(j, m) - m - special.gammaln(j + 1.0))


def _weighted_support_sum(mu, q: int, weights: np.ndarray) -> np.ndarray | float:
    arr = _validate_mu(mu)
    # row-local pairwise sum: results must not depend on how callers chunk mu
    out = (_support_pmf(arr, q) * weights).sum(axis=-1)
    return _scalar_like(out, mu)


def expected_penalty(mu, q: int, penalty: PenaltyFn) -> np.ndarray | float:
    """E[penalty((q - N)_+)] as the finite sum over j = 0..q-1.

    Terms with N >= q contribute penalty(0) = 0 and are never evaluated.
    """
    q = _validate_order(q)
    residual = np.arange(q, 0, -1, dtype=float)  # q - j for j = 0..q-1
    return _weighted_support_sum(mu, q, np.asarray(penalty(residual), dtype=float))


def penalty_increment_mean(mu, q: int, penalty: PenaltyFn) -> np.ndarray | float:
    """E[(penalty(q - N) - penalty(q - N - 1)) 1{N <= q-1}].

    The first-difference of the penalty at the unfilled residual, on the
    partial-fill event.  For the identity penalty this is exactly
    ``cdf(mu, q - 1)``.
    """
    q = _validate_order(q)
    residual = np.arange(q, 0, -1, dtype=float)
    weights = np.asarray(penalty(residual), dtype=float) - np.asarray(
        penalty(residual - 1.0), dtype=float
    )
    return _weighted_support_sum(mu, q, weights)


def penalty_second_difference_mean(mu, q: int, penalty: PenaltyFn) -> np.ndarray | float:
    """E[penalty((q-N-2)_+) - 2 penalty((q-N-1)_+) + penalty((q-N)_+)].

    Non-negative whenever the penalty is convex; for the identity penalty it
    collapses to ``pmf(mu, q - 1)``.  Terms beyond j = q-1 vanish.
    """
    q = _validate_order(q)
    residual = np.arange(q, 0, -1, dtype=float)
    weights = (
        np.asarray(penalty(np.maximum(residual - 2.0, 0.0)), dtype=float)
        - 2.0 * np.asarray(penalty(residual - 1.0), dtype=float)
        + np.asarray(penalty(residual), dtype=float)
    )
    return _weighted_support_sum(mu, q, weights)


def conditional_penalty_increment(mu, q: int, penalty: PenaltyFn) -> np.ndarray | float:
    """E[penalty(q - N) - penalty(q - N - 1) | N <= q - 1].

    Equals ``penalty(q) - penalty(q-1)`` at mu = 0 and is bounded above by
    that value for every mu (convexity).  Raises
    :class:`DegenerateConditioningError` when the conditioning event has
    underflowed to zero probability.
    """
    q = _validate_order(q)
    arr = _validate_mu(mu)
    numerator = np.asarray(penalty_increment_mean(arr, q, penalty), dtype=float)
    denominator = np.asarray(cdf(arr, q - 1), dtype=float)
    if np.any(denominator == 0.0):
        raise DegenerateConditioningError(
            f"P(N <= {q - 1}) underflowed to 0 for mu as large as {np.max(arr):g}; "
            "the conditional penalty increment is undefined there"
        )
    return _scalar_like(numerator / denominator, mu)


@dataclass(frozen=True)
class SeriesCutoff:
    """Truncation policy for explicit Poisson series.

    ``max_terms`` is the number of leading terms summed; ``tail_tolerance``
    bounds the Poisson mass allowed beyond the cutoff.  Sums that would leave
    more mass than that in the tail fail loudly instead of silently
    truncating.
    """

    max_terms: int = 200
    tail_tolerance: float = 0.0

    def __post_init__(self) -> None:
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be >= 1, got {self.max_terms}")
        if not (self.tail_tolerance >= 0.0):
            raise ValueError(f"tail_tolerance must be >= 0, got {self.tail_tolerance}")


def series_expectation(
    mu: float, fn: Callable[[np.ndarray], np.ndarray], cutoff: SeriesCutoff
) -> tuple[float, float]:
    """Direct series sum of E[fn(N)], with its reported tail-mass bound.

    Returns ``(value, tail_mass)`` where ``tail_mass = P(N >= max_terms)``.
    Raises when the tail mass exceeds ``cutoff.tail_tolerance``.  Used as the
    independent brute-force oracle for the closed forms above.
    """
    arr = _validate_mu(mu)
    if arr.ndim != 0:
        raise ValueError("series_expectation expects scalar mu")
    tail = float(sf(float(arr), cutoff.max_terms - 1))
    if tail > cutoff.tail_tolerance:
        raise ValueError(
            f"tail mass {tail:.3e} beyond {cutoff.max_terms} terms exceeds "
            f"tolerance {cutoff.tail_tolerance:.3e}"
        )
    j = np.arange(cutoff.max_terms)
    value = float(np.sum(np.asarray(fn(j), dtype=float) * pmf(float(arr), j)))
    return value, tail
