"""PPP deployments around a typical point and the related distance laws."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import DomainError

MIN_EXPECTED_POINTS = 50.0


@dataclass(frozen=True)
class PppWindow:
    """Disk of radius ``radius`` (km) holding a PPP of ``intensity`` points per km^2."""

    radius: float
    intensity: float

    def __post_init__(self):
        if not (self.radius > 0 and self.intensity > 0):
            raise DomainError("window radius and intensity must be positive")
        if self.expected_count < MIN_EXPECTED_POINTS:
            raise DomainError(
                f"window holds {self.expected_count:.1f} points on average; "
                f"need at least {MIN_EXPECTED_POINTS:g}"
            )

    @property
    def expected_count(self) -> float:
        return self.intensity * math.pi * self.radius**2


def default_window(intensity: float, order: int = 0) -> PppWindow:
    """Window large enough that lambda*pi*R^2 >= max(500, 10*order)."""
    target = max(500.0, 10.0 * order)
    return PppWindow(math.sqrt(target / (math.pi * intensity)), intensity)


@dataclass(frozen=True)
class NetworkRealization:
    """One sampled deployment, points ordered by distance from the origin."""

    distances: tuple[float, ...]
    angles: tuple[float, ...]
    seed: int

    def __post_init__(self):
        if len(self.distances) != len(self.angles):
            raise DomainError("distances and angles differ in length")
        d = np.asarray(self.distances)
        if d.size and np.any(np.diff(d) < 0):
            raise DomainError("distances must be sorted ascending")

    def __len__(self) -> int:
        return len(self.distances)

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "points": [[d, a] for d, a in zip(self.distances, self.angles)]}
        )

    @classmethod
    def from_json(cls, text: str) -> "NetworkRealization":
        obj = json.loads(text)
        pts = obj["points"]
        return cls(
            tuple(float(p[0]) for p in pts), tuple(float(p[1]) for p in pts), int(obj["seed"])
        )


def sample_realization(window: PppWindow, rng_seed: int) -> NetworkRealization:
    """Poisson count, uniform placement in the disk, sorted by range."""
    rng = np.random.default_rng(rng_seed)
    n = rng.poisson(window.expected_count)
    r = window.radius * np.sqrt(rng.random(n))
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    order = np.argsort(r, kind="stable")
    return NetworkRealization(tuple(r[order].tolist()), tuple(theta[order].tolist()), rng_seed)


def sample_ordered_distances(
    rng: np.random.Generator, trials: int, count: int, lambda_b: float
) -> np.ndarray:
    """Distances of the ``count`` nearest PPP points, shape (trials, count).

    Uses the fact that lambda*pi*d_n^2 are the arrival times of a unit-rate
    Poisson process, which is exact and avoids sampling a whole window.
    """
    g = np.cumsum(rng.standard_exponential((trials, count)), axis=1)
    return np.sqrt(g / (lambda_b * math.pi))


def expected_nth_distance(n: int, lambda_b: float, approx: bool = False) -> float:
    """Mean distance to the n-th nearest point of a PPP of intensity ``lambda_b``."""
    if n < 1 or not lambda_b > 0:
        raise DomainError("need n >= 1 and lambda_b > 0")
    if approx:
        return math.sqrt(n / (lambda_b * math.pi))
    return math.exp(gammaln(n + 0.5) - gammaln(n)) / math.sqrt(lambda_b * math.pi)


def distance_ratio_pdf(x, L: int):
    """Density of d_1/d_L for a PPP: 2(L-1) x (1-x^2)^(L-2)."""
    if L < 2:
        raise DomainError(f"L must be >= 2, got {L}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0) or np.any(arr >= 1):
        raise DomainError("distance ratio must lie in (0, 1)")
    out = 2.0 * (L - 1) * arr * (1.0 - arr**2) ** (L - 2)
    return float(out) if out.ndim == 0 else out


def expected_distance_ratio(L: int) -> float:
    """E[d_1/d_L] by adaptive quadrature."""
    if L < 2:
        raise DomainError(f"L must be >= 2, got {L}")
    val, _ = integrate.quad(
        lambda x: 2.0 * (L - 1) * x * x * (1.0 - x * x) ** (L - 2),
        0.0, 1.0, epsabs=1e-12, epsrel=1e-10, limit=200,
    )
    return val


def sample_distance_ratio(rng: np.random.Generator, L: int, size: int) -> np.ndarray:
    """Inverse-CDF draws of d_1/d_L; the CDF is 1 - (1-x^2)^(L-1)."""
    if L < 2:
        raise DomainError(f"L must be >= 2, got {L}")
    u = rng.random(size)
    return np.sqrt(1.0 - (1.0 - u) ** (1.0 / (L - 1)))


def distance_ratio_pdf_given_r(x, L: int, r: float, lambda_b: float):
    """Density of d_1/d_L conditioned on d_1 = r.

    Given d_1 = r, lambda*pi*(d_L^2 - r^2) is Gamma(L-1, 1) distributed.
    """
    if L < 2:
        raise DomainError(f"L must be >= 2, got {L}")
    arr = np.asarray(x, dtype=float)
    c = lambda_b * math.pi * r * r
    g = c * (1.0 / arr**2 - 1.0)
    log_pdf = (L - 2) * np.log(np.where(g > 0, g, 1.0)) - g - gammaln(L - 1)
    pdf = np.where(g > 0, np.exp(log_pdf), 0.0) * (2.0 * c / arr**3)
    if L == 2:
        pdf = np.exp(-g) * (2.0 * c / arr**3)
    return float(pdf) if pdf.ndim == 0 else pdf
