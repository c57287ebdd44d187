"""Cooperative transmission: acceptance, Laplace transforms, rate integrals, cluster sizing."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize
from scipy.special import beta as beta_fn
from scipy.special import betainc

from .errors import DomainError, QuadratureFailure
from .network_geometry import distance_ratio_pdf, distance_ratio_pdf_given_r, expected_distance_ratio
from .special_math import (
    DEFAULT_TOL,
    SeriesTolerance,
    gamma_half_ratio_sq,
    poisson_cdf,
    poisson_weighted_tail,
)

# Largest Poisson mean the load series is evaluated at; bounds eta from below.
_MAX_LOAD_MEAN = 1e5


@dataclass(frozen=True)
class CommParams:
    """Communication-side constants; powers in W, density per km^2."""

    alpha: float = 4.0
    m_t: int = 4
    p_c: float = 0.5
    p_t: float = 1.0
    lambda_b: float = 1.0
    mu_c: float = 1.0
    psi: int = 15

    def __post_init__(self):
        if not self.alpha > 2:
            raise DomainError(f"alpha must exceed 2, got {self.alpha}")
        if self.m_t < 2:
            raise DomainError(f"m_t must be >= 2, got {self.m_t}")
        if not self.p_t > 0:
            raise DomainError("p_t must be positive")
        if not 0 <= self.p_c <= self.p_t:
            raise DomainError(f"p_c must lie in [0, p_t], got {self.p_c}")
        if not self.lambda_b > 0:
            raise DomainError("lambda_b must be positive")
        if self.mu_c < 0:
            raise DomainError("mu_c must be >= 0")
        if self.psi < 2:
            raise DomainError(f"psi must be >= 2, got {self.psi}")

    @property
    def p_s(self) -> float:
        return self.p_t - self.p_c

    def with_power(self, p_c: float) -> "CommParams":
        return replace(self, p_c=p_c)


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration scheme for the rate integrals.

    The z axis is mapped to t in (0, 1) by z = t / (1 - t) and integrated
    adaptively; the eta axis uses a fixed Gauss-Legendre rule up to
    ``max_gauss_L`` and stratified inverse-CDF samples beyond it.
    """

    z_rel_tol: float = 1e-6
    eta_nodes: int = 64
    sample_draws: int = 100_000
    max_gauss_L: int = 64
    z_limit: int = 200

    def __post_init__(self):
        if not self.z_rel_tol > 0:
            raise DomainError("z_rel_tol must be positive")
        if self.eta_nodes < 2 or self.sample_draws < 1:
            raise DomainError("eta_nodes >= 2 and sample_draws >= 1 required")


DEFAULT_QUAD = QuadratureSpec()


def kappa_c(L: int, mu_c: float, psi: int, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Probability a BS accepts a joint-transmission request from a size-L cluster."""
    if L < 1 or psi < 2 or mu_c < 0:
        raise DomainError("need L >= 1, psi >= 2, mu_c >= 0")
    return _kappa_comm(mu_c * gamma_half_ratio_sq(L), psi, tol)


def _kappa_comm(mean: float, psi: int, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    return min(1.0, poisson_cdf(psi - 1, mean) + poisson_weighted_tail(psi, mean, "comm", tol))


def _ibeta(u, a: float, b: float):
    return betainc(a, b, u) * beta_fn(a, b)


def h1(x, K: int, alpha: float, eta):
    """Exponent of the Laplace transform for the cluster members between r and r_L."""
    if not alpha > 2 or K < 1:
        raise DomainError("need alpha > 2 and K >= 1")
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(x < 0) or np.any(eta <= 0) or np.any(eta > 1):
        raise DomainError("need x >= 0 and eta in (0, 1]")
    d = 2.0 / alpha
    xe = x * eta**alpha
    out = (
        (1.0 - (1.0 + xe) ** (-K)) / eta**2
        + (1.0 + x) ** (-K)
        - 1.0
        + K * x**d * (_ibeta(x / (x + 1.0), 1.0 - d, K + d) - _ibeta(xe / (xe + 1.0), 1.0 - d, K + d))
    )
    return out[()] if out.ndim == 0 else out


def h2(x, alpha: float, eta):
    """Exponent of the Laplace transform for interferers outside the cluster."""
    if not alpha > 2:
        raise DomainError("need alpha > 2")
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(x < 0) or np.any(eta <= 0) or np.any(eta > 1):
        raise DomainError("need x >= 0 and eta in (0, 1]")
    d = 2.0 / alpha
    xe = x * eta**alpha
    out = x**d * _ibeta(xe / (xe + 1.0), 1.0 - d, 1.0 + d) + (1.0 / (1.0 + xe) - 1.0) / eta**2
    return out[()] if out.ndim == 0 else out


def h0(z, alpha: float):
    """Denominator function of the single-BS rate; equals 1 + h2(z, alpha, 1)."""
    if not alpha > 2:
        raise DomainError("need alpha > 2")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("need z >= 0")
    d = 2.0 / alpha
    out = z**d * _ibeta(z / (z + 1.0), 1.0 - d, 1.0 + d) + 1.0 / (1.0 + z)
    return out[()] if out.ndim == 0 else out


def laplace_useful(z, r: float, eta, params: CommParams, kappa: float):
    """E[exp(-z U)] given the serving distance r and ratio eta."""
    return np.exp(-math.pi * kappa * params.lambda_b * r * r
                  * h1(np.asarray(z) * params.p_c, params.m_t - 1, params.alpha, eta))


def laplace_i1(z, r: float, eta, params: CommParams, kappa: float):
    """E[exp(-z I1)]: interference from cluster members that declined."""
    return np.exp(-math.pi * (1.0 - kappa) * params.lambda_b * r * r
                  * h1(np.asarray(z) * params.p_t, 1, params.alpha, eta))


def laplace_i2(z, r: float, eta, params: CommParams):
    """E[exp(-z I2)]: interference from outside the cluster."""
    return np.exp(-math.pi * params.lambda_b * r * r * h2(np.asarray(z) * params.p_t, params.alpha, eta))


LaplaceKind = Literal["U", "I1", "I2"]


def laplace_marginal(
    which: LaplaceKind,
    z: float,
    r: float,
    L: int,
    params: CommParams,
    kappa: float,
    weighting: Literal["conditional", "unconditional"] = "conditional",
    nodes: int = 256,
) -> float:
    """Laplace transform at serving distance r, averaged over eta = r / r_L.

    ``conditional`` weights eta by its law given d_1 = r; ``unconditional``
    uses the marginal distance-ratio density.
    """
    x, w = leggauss(nodes)
    eta = 0.5 * (x + 1.0)
    w = 0.5 * w
    if weighting == "conditional":
        pdf = distance_ratio_pdf_given_r(eta, L, r, params.lambda_b)
    elif weighting == "unconditional":
        pdf = distance_ratio_pdf(eta, L)
    else:
        raise DomainError(f"unknown weighting {weighting!r}")
    if which == "U":
        vals = laplace_useful(z, r, eta, params, kappa)
    elif which == "I1":
        vals = laplace_i1(z, r, eta, params, kappa)
    elif which == "I2":
        vals = laplace_i2(z, r, eta, params)
    else:
        raise DomainError(f"unknown transform {which!r}")
    return float(np.dot(w * pdf, vals))


def _eta_rule(L: int, quad: QuadratureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating f(eta) against the distance-ratio density."""
    if L <= quad.max_gauss_L:
        x, w = leggauss(quad.eta_nodes)
        eta = 0.5 * (x + 1.0)
        return eta, 0.5 * w * distance_ratio_pdf(eta, L)
    # stratified midpoints pushed through the inverse CDF
    u = (np.arange(quad.sample_draws) + 0.5) / quad.sample_draws
    eta = np.sqrt(1.0 - (1.0 - u) ** (1.0 / (L - 1)))
    return eta, np.full(eta.shape, 1.0 / quad.sample_draws)


def _checked_z_integral(f, quad: QuadratureSpec, what: str, z_scales=()) -> float:
    def g(t: float) -> float:
        if t <= 0.0 or t >= 1.0:
            return 0.0
        return f(t / (1.0 - t)) / (1.0 - t) ** 2

    # break points where z * power ~ 1, i.e. where the transforms bend
    pts = sorted({s / (1.0 + s) for s in (1.0 / p for p in z_scales if p > 0)})
    out = integrate.quad(
        g, 0.0, 1.0, epsabs=0.0, epsrel=quad.z_rel_tol, limit=quad.z_limit,
        points=pts or None, full_output=True,
    )
    val = out[0]
    if len(out) > 3 or not math.isfinite(val):
        msg = out[3] if len(out) > 3 else "non-finite result"
        raise QuadratureFailure(f"{what}: z-integral did not converge ({msg})")
    return val


def rate_coop(
    L: int,
    params: CommParams,
    quad: QuadratureSpec = DEFAULT_QUAD,
    kappa: float | None = None,
) -> float:
    """Mean rate (nats) of a user served by its L nearest BSs with non-coherent joint transmission.

    ``kappa`` overrides the acceptance probability; by default it follows
    from the load model. L = 1 reduces to :func:`rate_single`.
    """
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    if params.p_c == 0.0:
        return 0.0
    if L == 1:
        return rate_single(params, quad)
    k = kappa_c(L, params.mu_c, params.psi) if kappa is None else float(kappa)
    if not 0 <= k <= 1:
        raise DomainError("kappa must lie in [0, 1]")
    eta, wt = _eta_rule(L, quad)
    alpha, M, P, pc = params.alpha, params.m_t, params.p_t, params.p_c
    d = 2.0 / alpha
    K = M - 1
    ea = eta**alpha
    inv_e2 = 1.0 / eta**2
    b1 = beta_fn(1.0 - d, 1.0 + d)
    bK = beta_fn(1.0 - d, K + d)

    def f(z: float) -> float:
        X = z * P
        xe = X * ea
        inner = betainc(1.0 - d, 1.0 + d, xe / (xe + 1.0)) * b1
        outer = betainc(1.0 - d, 1.0 + d, X / (X + 1.0)) * b1
        Xd = X**d
        h2v = Xd * inner + inv_e2 * (1.0 / (1.0 + xe) - 1.0)
        h1P = inv_e2 * (1.0 - 1.0 / (1.0 + xe)) + 1.0 / (1.0 + X) - 1.0 + Xd * (outer - inner)
        Y = z * pc
        ye = Y * ea
        h1c = (
            inv_e2 * (1.0 - (1.0 + ye) ** (-K)) + (1.0 + Y) ** (-K) - 1.0
            + K * Y**d * bK * (betainc(1.0 - d, K + d, Y / (Y + 1.0)) - betainc(1.0 - d, K + d, ye / (ye + 1.0)))
        )
        base = (1.0 - k) * h1P + h2v + 1.0
        a = 1.0 / base
        b = (1.0 + Y) ** (1 - M) / (k * h1c + base)
        return float(np.dot(wt, a - b)) / z

    return max(0.0, _checked_z_integral(f, quad, f"rate_coop(L={L})", (P, pc)))


def rate_single(params: CommParams, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Mean rate (nats) with nearest-BS service only; independent of lambda_b."""
    if params.p_c == 0.0:
        return 0.0
    M, P, pc, alpha = params.m_t, params.p_t, params.p_c, params.alpha

    def f(z: float) -> float:
        return (1.0 - (1.0 + pc * z) ** (1 - M)) / (z * float(h0(z * P, alpha)))

    return _checked_z_integral(f, quad, "rate_single", (P, pc))


def sir_bar(r: float, eta: float, L: int, params: CommParams) -> float:
    """Ratio of mean useful power to mean interference at serving distance r.

    Returns +inf when the interference term vanishes.
    """
    if not (r > 0 and 0 < eta <= 1):
        raise DomainError("need r > 0 and eta in (0, 1]")
    a = params.alpha
    k = kappa_c(L, params.mu_c, params.psi)
    coop = math.pi * params.lambda_b * k / (a - 2.0) * (1.0 - eta ** (a - 2.0))
    num = r ** (-a) + coop * r ** (2.0 - a)
    den = (math.pi * params.lambda_b / (a - 2.0) - coop) * r ** (2.0 - a)
    if den <= 0.0:
        return math.inf
    return num / den


def kappa_c_tilde(eta: float, mu_c: float, psi: int, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Acceptance probability with the cluster load expressed through eta (load mu_c / eta^2)."""
    if not eta > 0:
        raise DomainError("eta must be positive")
    if psi < 2 or mu_c < 0:
        raise DomainError("need psi >= 2 and mu_c >= 0")
    return _kappa_comm(mu_c / eta**2, psi, tol)


class EtaOptimum(NamedTuple):
    eta: float
    objective: float
    clamped: bool


def _eta_floor(mu_c: float) -> float:
    return max(1e-4, math.sqrt(mu_c / _MAX_LOAD_MEAN))


def eta_objective(eta: float, mu_c: float, psi: int, alpha: float) -> float:
    return kappa_c_tilde(eta, mu_c, psi) * (1.0 - eta ** (alpha - 2.0))


def optimal_eta(mu_c: float, psi: int, alpha: float, grid: int = 400, xtol: float = 1e-4) -> EtaOptimum:
    """Maximise kappa_c_tilde(eta) * (1 - eta^(alpha-2)) over eta in (0, 1).

    A coarse grid brackets the peak, then golden-section search refines it.
    If the peak sits at the lower end of the admissible range the bound is
    returned with ``clamped=True``.
    """
    if not alpha > 2:
        raise DomainError("need alpha > 2")
    lo = _eta_floor(mu_c)
    g = np.linspace(lo, 1.0, grid + 1)[:-1]
    vals = np.array([eta_objective(e, mu_c, psi, alpha) for e in g])
    i = int(np.argmax(vals))
    if i == 0:
        return EtaOptimum(float(lo), float(vals[0]), True)
    if i == len(g) - 1:
        return EtaOptimum(float(g[i]), float(vals[i]), False)

    res = optimize.minimize_scalar(
        lambda e: -eta_objective(e, mu_c, psi, alpha),
        bracket=(g[i - 1], g[i], g[i + 1]),
        method="golden",
        options={"xtol": xtol / max(g[i], 1e-12)},
    )
    e = float(res.x)
    if not g[i - 1] <= e <= g[i + 1] or -res.fun < vals[i]:
        e = float(g[i])
    return EtaOptimum(e, eta_objective(e, mu_c, psi, alpha), False)


RatioModel = Literal["load", "distance"]


def optimal_cluster_size(
    mu_c: float, psi: int, alpha: float, ratio_model: RatioModel = "load", L_max: int = 500
) -> int:
    """Cluster size L >= 2 matched to the optimal distance ratio eta*.

    ``load`` picks L whose mean cluster load Lbar(L) is closest to 1/eta*^2,
    the same substitution used inside kappa_c_tilde. ``distance`` picks L
    whose E[d_1/d_L] is closest to eta*. Ties go to the smaller L.
    """
    eta = optimal_eta(mu_c, psi, alpha).eta
    Ls = range(2, L_max + 1)
    if ratio_model == "load":
        target = 1.0 / eta**2
        key = lambda L: abs(gamma_half_ratio_sq(L) - target)
    elif ratio_model == "distance":
        key = lambda L: abs(expected_distance_ratio(L) - eta)
    else:
        raise DomainError(f"unknown ratio model {ratio_model!r}")
    return min(Ls, key=lambda L: (key(L), L))


def exhaustive_cluster_size(
    params: CommParams, L_max: int, quad: QuadratureSpec = DEFAULT_QUAD, L_min: int = 2
) -> tuple[int, list[float]]:
    """argmax over L in [L_min, L_max] of rate_coop; ties go to the smaller L."""
    rates = [rate_coop(L, params, quad) for L in range(L_min, L_max + 1)]
    best = int(np.argmax(rates))
    return L_min + best, rates
