"""Special functions and Poisson series used by the closed-form expressions.

All gamma-function arithmetic is done in log space so that load caps in the
tens and Poisson means in the thousands do not overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import beta as _beta_fn
from scipy.special import betainc, gammaln, logsumexp

from .errors import DomainError, SeriesNotConverged

EULER_GAMMA = 0.5772156649015329
_EXACT_HARMONIC_LIMIT = 10**6
# Poisson pmf below this many standard deviations under the mean is < 1e-31.
_WINDOW_SIGMAS = 12.0


@dataclass(frozen=True)
class SeriesTolerance:
    """Truncation policy for the infinite Poisson sums."""

    rel_tol: float = 1e-12
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_terms < 1:
            raise DomainError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_TOL = SeriesTolerance()


def incomplete_beta(a, b: float, c: float):
    """Non-regularized incomplete beta function B(a; b, c).

    Returns the integral of t**(b-1) * (1-t)**(c-1) over [0, a]. Accepts a
    scalar or array for ``a``.
    """
    if not (b > 0 and c > 0):
        raise DomainError(f"incomplete_beta requires b, c > 0, got b={b}, c={c}")
    arr = np.asarray(a, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or np.any(np.isnan(arr)):
        raise DomainError("incomplete_beta requires 0 <= a <= 1")
    out = betainc(b, c, arr) * _beta_fn(b, c)
    return float(out) if out.ndim == 0 else out


def complete_beta(b: float, c: float) -> float:
    return float(np.exp(gammaln(b) + gammaln(c) - gammaln(b + c)))


def _poisson_logpmf(n: np.ndarray, mean: float) -> np.ndarray:
    return n * math.log(mean) - mean - gammaln(n + 1.0)


def poisson_cdf(k: int, mean: float) -> float:
    """P[Poisson(mean) <= k] by the finite sum, in log space."""
    if mean < 0:
        raise DomainError(f"Poisson mean must be >= 0, got {mean}")
    if k < 0:
        return 0.0
    if mean == 0:
        return 1.0
    n = np.arange(k + 1, dtype=float)
    return float(min(1.0, math.exp(logsumexp(_poisson_logpmf(n, mean)))))


def upper_incomplete_gamma(s: int, x: float) -> float:
    """Gamma(s, x) for integer s, via (s-1)! * P[Poisson(x) <= s-1]."""
    if int(s) != s or s < 1:
        raise DomainError(f"s must be a positive integer, got {s}")
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    s = int(s)
    if x == 0:
        return math.exp(gammaln(s))
    n = np.arange(s, dtype=float)
    log_val = gammaln(s) + logsumexp(_poisson_logpmf(n, x))
    return math.exp(log_val)


def regularized_upper_gamma(s: int, x: float) -> float:
    """Gamma(s, x) / (s-1)!, which stays finite for large s."""
    if int(s) != s or s < 1:
        raise DomainError(f"s must be a positive integer, got {s}")
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    return poisson_cdf(int(s) - 1, x)


def gamma_half_ratio_sq(n: int) -> float:
    """(Gamma(n + 1/2) / Gamma(n))**2."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return math.exp(2.0 * (gammaln(n + 0.5) - gammaln(n)))


def harmonic_number(n: int) -> float:
    """H_n; exact partial sum up to 10**6 terms, asymptotic expansion beyond."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    n = int(n)
    if n <= _EXACT_HARMONIC_LIMIT:
        # smallest terms first
        return float(np.sum(1.0 / np.arange(n, 0, -1, dtype=float)))
    return math.log(n) + EULER_GAMMA + 1.0 / (2 * n) - 1.0 / (12.0 * n * n)


WeightKind = Literal["sensing", "comm"]


def poisson_weighted_tail(
    psi: int,
    mean: float,
    weight_kind: WeightKind,
    tol: SeriesTolerance = DEFAULT_TOL,
) -> float:
    """Load-cap tail of the acceptance probability.

    ``sensing``: sum_{n >= psi+1} (psi / n) * Poisson(mean; n)
    ``comm``:    sum_{n >= psi}   ((psi-1) / (n-1)) * Poisson(mean; n)

    The sum starts at the first term that can matter (a fixed number of
    standard deviations below the mean) and stops once past the mode when a
    term falls below ``tol.rel_tol`` of the partial sum.
    """
    if int(psi) != psi or psi < 1:
        raise DomainError(f"psi must be a positive integer, got {psi}")
    if mean < 0:
        raise DomainError(f"mean must be >= 0, got {mean}")
    if weight_kind == "sensing":
        start = int(psi) + 1
    elif weight_kind == "comm":
        if psi < 2:
            raise DomainError("comm weighting needs psi >= 2 (weight divides by n-1)")
        start = int(psi)
    else:
        raise DomainError(f"unknown weight_kind {weight_kind!r}")
    if mean == 0:
        return 0.0

    lo = max(start, int(mean - _WINDOW_SIGMAS * math.sqrt(mean)) - 1)
    chunk = 256
    total = 0.0
    used = 0
    n0 = lo
    while used < tol.max_terms:
        size = min(chunk, tol.max_terms - used)
        n = np.arange(n0, n0 + size, dtype=float)
        if weight_kind == "sensing":
            w = psi / n
        else:
            w = (psi - 1) / (n - 1)
        terms = w * np.exp(_poisson_logpmf(n, mean))
        cum = total + np.cumsum(terms)
        past_mode = n > mean
        done = past_mode & (terms <= tol.rel_tol * np.maximum(cum, 1e-300))
        if np.any(done):
            idx = int(np.argmax(done))
            return float(cum[idx])
        total = float(cum[-1])
        used += size
        n0 += size
    raise SeriesNotConverged(
        f"Poisson tail (psi={psi}, mean={mean}) did not converge in {tol.max_terms} terms"
    )
