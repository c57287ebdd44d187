"""Cooperative localization: FIM, GDoP, CRLB closed forms and sensing acceptance."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import DomainError, SingularFim
from .special_math import (
    DEFAULT_TOL,
    SeriesTolerance,
    gamma_half_ratio_sq,
    harmonic_number,
    poisson_cdf,
    poisson_weighted_tail,
)

SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class SensingParams:
    """Link-budget constants entering the common sensing gain |zeta|^2."""

    beta: float = 2.0
    sigma_av: float = 1.0
    sigma_s_sq: float = 1e-8
    p_s: float = 0.5
    G_t: float = 3.0
    G_r: float = 5.0
    f_c: float = 3.5e9
    bandwidth_sq: float = 1e16
    zeta_sq_override: Optional[float] = None

    def __post_init__(self):
        if self.beta < 2:
            raise DomainError(f"beta must be >= 2, got {self.beta}")
        for name in ("sigma_av", "sigma_s_sq", "G_t", "G_r", "f_c", "bandwidth_sq"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.p_s < 0:
            raise DomainError("p_s must be >= 0")
        if self.zeta_sq_override is not None and not self.zeta_sq_override > 0:
            raise DomainError("zeta_sq_override must be positive")

    def with_power(self, p_s: float) -> "SensingParams":
        return replace(self, p_s=p_s)


def zeta_sq(params: SensingParams, length_unit_m: float = 1.0) -> float:
    """Common sensing gain |zeta|^2.

    The physical formula yields information per m^2 with distances in metres.
    ``length_unit_m`` rescales it so that distances and the resulting CRLB are
    expressed in that unit (1000 for km).
    """
    if params.zeta_sq_override is not None:
        return params.zeta_sq_override
    base = (
        params.p_s * params.G_t * params.G_r * params.bandwidth_sq * params.sigma_av
        / (8.0 * math.pi * params.f_c**2 * params.sigma_s_sq)
    )
    return base * length_unit_m ** (2.0 - 2.0 * params.beta)


@dataclass(frozen=True)
class Fim:
    """Symmetric 2x2 Fisher information for the target position."""

    f11: float
    f12: float
    f22: float

    @property
    def det(self) -> float:
        return self.f11 * self.f22 - self.f12 * self.f12

    @property
    def trace(self) -> float:
        return self.f11 + self.f22

    def as_array(self) -> np.ndarray:
        return np.array([[self.f11, self.f12], [self.f12, self.f22]])


def pair_coeffs(theta_i, theta_j):
    """(cos ti + cos tj, sin ti + sin tj)."""
    return np.cos(theta_i) + np.cos(theta_j), np.sin(theta_i) + np.sin(theta_j)


def build_fim_batch(distances, angles, zeta_sq: float, beta: float):
    """Vectorised FIM entries over the last axis; returns (f11, f12, f22) arrays.

    The double sum over pairs factorises: with w_i = d_i^-beta and W = sum w,
    sum_ij w_i w_j (c_i + c_j)^2 = 2 W sum w c^2 + 2 (sum w c)^2, and likewise
    for the other entries.
    """
    d = np.asarray(distances, dtype=float)
    th = np.asarray(angles, dtype=float)
    w = d ** (-beta)
    c, s = np.cos(th), np.sin(th)
    W = w.sum(axis=-1)
    wc, ws = (w * c).sum(axis=-1), (w * s).sum(axis=-1)
    f11 = 2.0 * (W * (w * c * c).sum(axis=-1) + wc * wc)
    f22 = 2.0 * (W * (w * s * s).sum(axis=-1) + ws * ws)
    f12 = 2.0 * (W * (w * c * s).sum(axis=-1) + wc * ws)
    return zeta_sq * f11, zeta_sq * f12, zeta_sq * f22


def build_fim(distances: Sequence[float], angles: Sequence[float], zeta_sq: float, beta: float) -> Fim:
    d = np.asarray(distances, dtype=float)
    th = np.asarray(angles, dtype=float)
    if d.ndim != 1 or d.shape != th.shape or d.size == 0:
        raise DomainError("distances and angles must be equal-length, non-empty 1-D sequences")
    if np.any(d <= 0):
        raise DomainError("distances must be positive")
    f11, f12, f22 = build_fim_batch(d, th, zeta_sq, beta)
    return Fim(float(f11), float(f12), float(f22))


def singular_mask(f11, f12, f22) -> np.ndarray:
    tr = f11 + f22
    return (f11 * f22 - f12 * f12) <= SINGULAR_RTOL * tr * tr


def crlb_batch(f11, f12, f22):
    """tr(F^-1) elementwise with NaN where the FIM is numerically singular."""
    f11, f12, f22 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (f11, f12, f22)))
    bad = singular_mask(f11, f12, f22)
    det = np.where(bad, 1.0, f11 * f22 - f12 * f12)
    return np.where(bad, np.nan, (f11 + f22) / det)


def crlb_of_fim(fim: Fim) -> float:
    tr = fim.trace
    if fim.det <= SINGULAR_RTOL * tr * tr:
        raise SingularFim(f"FIM is singular (det={fim.det:.3e}, trace={tr:.3e})")
    return tr / fim.det


def gdop_exact(angles: Sequence[float]) -> float:
    """tr of the inverse unit-distance, unit-gain FIM."""
    th = np.asarray(angles, dtype=float)
    if th.ndim != 1 or th.size < 2:
        raise DomainError("gdop needs at least two angles")
    return crlb_of_fim(build_fim(np.ones_like(th), th, 1.0, 2.0))


def gdop_exact_batch(angles) -> np.ndarray:
    """GDoP for each row of an (trials, N) angle array; NaN marks singular rows."""
    th = np.asarray(angles, dtype=float)
    return crlb_batch(*build_fim_batch(np.ones_like(th), th, 1.0, 2.0))


def gdop_approx(N: int) -> float:
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    return (2.0 * N + 2.0) / (N**3 - N**2)


def gdop_asymptotic(N: int) -> float:
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    return 2.0 / N**2


PairSet = Literal["all", "distinct"]


def _pair_sum(N: int, beta: float, pairs: PairSet) -> float:
    if beta == 2.0:
        h = harmonic_number(N)
        full = h * h
        diag = float(np.sum(1.0 / np.arange(N, 0, -1, dtype=float) ** 2)) if pairs == "distinct" else 0.0
        return full - diag
    k = np.arange(N, 0, -1, dtype=float) ** (-beta / 2.0)
    full = float(k.sum()) ** 2
    return full - (float((k * k).sum()) if pairs == "distinct" else 0.0)


def crlb_closed_form(
    N: int, lambda_b: float, beta: float, zeta_sq: float, pairs: PairSet = "all"
) -> float:
    """Mean-distance CRLB approximation with E[d_k] ~ sqrt(k / (lambda pi)).

    ``pairs="distinct"`` drops the l == k terms, for sensitivity studies.
    """
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    if pairs not in ("all", "distinct"):
        raise DomainError(f"unknown pair set {pairs!r}")
    s = _pair_sum(N, beta, pairs)
    return 2.0 / (zeta_sq * (lambda_b * math.pi) ** beta * s)


def crlb_scaling_coefficient(lambda_b: float, zeta_sq: float) -> float:
    """Limit of CRLB * ln^2 N for beta = 2."""
    return 1.0 / (zeta_sq * lambda_b**2 * math.pi**2)


AcceptanceConvention = Literal["exact", "strict", "scaled"]


def kappa_s(
    N: int,
    mu_s: float,
    psi: int,
    convention: AcceptanceConvention = "exact",
    tol: SeriesTolerance = DEFAULT_TOL,
) -> float:
    """Probability that a BS accepts a localization request.

    Each BS sees Poisson(mu_s * Nbar) requests and serves at most ``psi`` of
    them at random. The default ``exact`` convention keeps every load n <= psi
    in the leading term, which equals E[min(1, psi/n)]. ``strict`` stops the
    leading term at psi - 1 and ``scaled`` additionally divides it by psi;
    both are kept for comparison only.
    """
    if N < 1 or psi < 1 or mu_s < 0:
        raise DomainError("need N >= 1, psi >= 1, mu_s >= 0")
    mean = mu_s * gamma_half_ratio_sq(N)
    tail = poisson_weighted_tail(psi, mean, "sensing", tol)
    if convention == "exact":
        lead = poisson_cdf(psi, mean)
    elif convention == "strict":
        lead = poisson_cdf(psi - 1, mean)
    elif convention == "scaled":
        lead = poisson_cdf(psi - 1, mean) / psi
    else:
        raise DomainError(f"unknown convention {convention!r}")
    return min(1.0, lead + tail)


def crlb_with_acceptance(
    N: int,
    lambda_b: float,
    zeta_sq: float,
    mu_s: float,
    psi: int,
    finite_n_mode: bool = False,
    convention: AcceptanceConvention = "exact",
) -> float:
    """CRLB scaled by the squared acceptance probability (beta = 2).

    The default uses ln^2 N; ``finite_n_mode`` uses H_N^2 instead.
    """
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    k = kappa_s(N, mu_s, psi, convention)
    denom = harmonic_number(N) ** 2 if finite_n_mode else math.log(N) ** 2
    return 1.0 / (k * k * zeta_sq * lambda_b**2 * math.pi**2 * denom)


def sensing_optimal_n(
    mu_s: float,
    psi: int,
    n_max: int = 60,
    finite_n_mode: bool = False,
    convention: AcceptanceConvention = "exact",
) -> int:
    """Cluster size in [2, n_max] minimising crlb_with_acceptance; ties go to smaller N.

    The minimiser does not depend on lambda_b or |zeta|^2, which only scale the curve.
    """
    best_n, best = 2, math.inf
    for n in range(2, n_max + 1):
        v = crlb_with_acceptance(n, 1.0, 1.0, mu_s, psi, finite_n_mode, convention)
        if v < best:
            best_n, best = n, v
    return best_n
