from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from coopisac.errors import DomainError, SingularFim
from coopisac.sensing import (
    Fim,
    SensingParams,
    build_fim,
    build_fim_batch,
    crlb_batch,
    crlb_closed_form,
    crlb_of_fim,
    crlb_scaling_coefficient,
    crlb_with_acceptance,
    gdop_approx,
    gdop_asymptotic,
    gdop_exact,
    gdop_exact_batch,
    kappa_s,
    pair_coeffs,
    sensing_optimal_n,
    zeta_sq,
)
from coopisac.special_math import gamma_half_ratio_sq, harmonic_number


def _fim_double_loop(d, th, zs, beta):
    F = np.zeros((2, 2))
    for i in range(len(d)):
        for j in range(len(d)):
            a, b = pair_coeffs(th[i], th[j])
            F += d[i] ** -beta * d[j] ** -beta * np.array([[a * a, a * b], [a * b, b * b]])
    return zs * F


def test_zeta_sq_formula_and_unit_scaling():
    p = SensingParams()
    ref = 0.5 * 3.0 * 5.0 * 1e16 * 1.0 / (8 * math.pi * 3.5e9**2 * 1e-8)
    np.testing.assert_allclose(zeta_sq(p), ref, rtol=1e-14)
    # beta = 2: metres -> km multiplies by 1000^(2 - 4)
    np.testing.assert_allclose(zeta_sq(p, 1000.0), ref * 1e-6, rtol=1e-14)
    np.testing.assert_allclose(zeta_sq(p.with_power(1.0)), 2 * ref, rtol=1e-14)
    assert zeta_sq(SensingParams(zeta_sq_override=3.0), 1000.0) == 3.0


def test_sensing_params_validation():
    with pytest.raises(DomainError):
        SensingParams(beta=1.5)
    with pytest.raises(DomainError):
        SensingParams(p_s=-1.0)
    with pytest.raises(DomainError):
        SensingParams(zeta_sq_override=0.0)


def test_fim_factorization_matches_double_loop():
    rng = np.random.default_rng(21)
    for _ in range(25):
        n = int(rng.integers(2, 12))
        d = rng.uniform(0.1, 3.0, n)
        th = rng.uniform(0, 2 * np.pi, n)
        beta = float(rng.choice([2.0, 3.0, 4.0]))
        zs = float(rng.uniform(0.1, 5.0))
        np.testing.assert_allclose(build_fim(d, th, zs, beta).as_array(), _fim_double_loop(d, th, zs, beta),
                                   rtol=1e-11, atol=1e-12)


def test_fim_batch_matches_scalar():
    rng = np.random.default_rng(4)
    d = rng.uniform(0.2, 2.0, (7, 5))
    th = rng.uniform(0, 2 * np.pi, (7, 5))
    f11, f12, f22 = build_fim_batch(d, th, 2.0, 2.0)
    for k in range(7):
        fim = build_fim(d[k], th[k], 2.0, 2.0)
        np.testing.assert_allclose([f11[k], f12[k], f22[k]], [fim.f11, fim.f12, fim.f22], rtol=1e-13)
        np.testing.assert_allclose(crlb_batch(f11, f12, f22)[k], np.trace(np.linalg.inv(fim.as_array())), rtol=1e-10)


def test_pair_sum_identity():
    # sum_ij (a_ij^2 + b_ij^2) = 2 N^2 + 2 sum_ij cos(t_i - t_j)
    rng = np.random.default_rng(8)
    for n in (2, 5, 13):
        th = rng.uniform(0, 2 * np.pi, n)
        a, b = pair_coeffs(th[:, None], th[None, :])
        lhs = np.sum(a * a + b * b)
        rhs = 2 * n * n + 2 * np.sum(np.cos(th[:, None] - th[None, :]))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9)


def test_uniform_angle_cosine_mean_is_zero():
    th = np.random.default_rng(2).uniform(0, 2 * np.pi, (100000, 2))
    c = np.cos(th[:, 0] - th[:, 1])
    assert abs(c.mean()) < 3 * c.std() / math.sqrt(c.size)


def test_equal_distance_reduces_to_gdop():
    rng = np.random.default_rng(6)
    for _ in range(10):
        n = int(rng.integers(3, 9))
        th = rng.uniform(0, 2 * np.pi, n)
        d, zs, beta = float(rng.uniform(0.3, 2.0)), float(rng.uniform(0.5, 2.0)), 2.0
        crlb = crlb_of_fim(build_fim(np.full(n, d), th, zs, beta))
        np.testing.assert_allclose(crlb, gdop_exact(th) / (zs * d ** (-2 * beta)), rtol=1e-9)


@pytest.mark.parametrize("n", [3, 4, 7, 16])
def test_gdop_regular_polygon(n):
    # equally spaced angles: F = N^2 I, so GDoP = 2 / N^2
    th = 2 * np.pi * np.arange(n) / n + 0.3
    np.testing.assert_allclose(gdop_exact(th), gdop_asymptotic(n), rtol=1e-10)


def test_singular_geometry():
    with pytest.raises(SingularFim):
        gdop_exact([0.4, 0.4, 0.4])
    with pytest.raises(SingularFim):
        gdop_exact([0.0, np.pi])  # collinear pair
    out = gdop_exact_batch(np.array([[0.4, 0.4], [0.0, 1.0]]))
    assert np.isnan(out[0]) and np.isfinite(out[1])
    assert Fim(1.0, 0.0, 2.0).det == 2.0


def test_gdop_formulas():
    np.testing.assert_allclose(gdop_approx(6), 14.0 / 180.0, rtol=1e-15)
    assert gdop_asymptotic(10) == 0.02
    r = gdop_approx(1000) / gdop_asymptotic(1000)
    assert 0.999 <= r <= 1.003
    with pytest.raises(DomainError):
        gdop_approx(1)


def test_crlb_closed_form_values():
    np.testing.assert_allclose(crlb_closed_form(4, 1 / math.pi, 2.0, 1.0), 2.0 / (25.0 / 12.0) ** 2, rtol=1e-14)
    np.testing.assert_allclose(crlb_closed_form(4, 1 / math.pi, 2.0, 1.0), 0.46080, rtol=1e-5)
    # general beta against an explicit double sum
    for beta in (3.0, 4.0):
        for n in (2, 6):
            s = sum(k ** (-beta / 2) * l ** (-beta / 2) for k in range(1, n + 1) for l in range(1, n + 1))
            np.testing.assert_allclose(crlb_closed_form(n, 0.8, beta, 1.7), 2 / (1.7 * (0.8 * math.pi) ** beta * s), rtol=1e-12)
    s_distinct = sum(1 / (k * l) for k in range(1, 6) for l in range(1, 6) if k != l)
    np.testing.assert_allclose(crlb_closed_form(5, 1.0, 2.0, 1.0, pairs="distinct"), 2 / (math.pi**2 * s_distinct), rtol=1e-12)


def test_crlb_closed_form_monotone():
    vals = [crlb_closed_form(n, 1.0, 2.0, 1.0) for n in range(2, 40)]
    assert np.all(np.diff(vals) < 0)
    assert crlb_closed_form(5, 2.0, 2.0, 1.0) < crlb_closed_form(5, 1.0, 2.0, 1.0)
    assert crlb_closed_form(5, 1.0, 2.0, 2.0) < crlb_closed_form(5, 1.0, 2.0, 1.0)


def test_crlb_harmonic_scaling():
    lam, zs = 1.3, 0.7
    coef = crlb_scaling_coefficient(lam, zs)
    np.testing.assert_allclose(crlb_scaling_coefficient(1 / math.pi, 1.0), 1.0, rtol=1e-14)
    prods = [crlb_closed_form(n, lam, 2.0, zs) * harmonic_number(n) ** 2 for n in (2, 10, 100, 5000)]
    np.testing.assert_allclose(prods, 2 * coef, rtol=1e-12)


def _kappa_s_oracle(N, mu, psi):
    mean = mu * gamma_half_ratio_sq(N)
    n = np.arange(0, int(mean + 50 * math.sqrt(mean + 1) + psi + 50))
    return float(np.sum(np.minimum(1.0, psi / np.maximum(n, 1)) * stats.poisson.pmf(n, mean)))


def test_kappa_s_limits_and_oracle():
    assert kappa_s(10, 0.0, 3) == 1.0
    np.testing.assert_allclose(kappa_s(15, 15 / gamma_half_ratio_sq(15), 1000), 1.0, atol=1e-9)
    rng = np.random.default_rng(13)
    for _ in range(20):
        N, mu, psi = int(rng.integers(1, 40)), float(rng.uniform(0.05, 6)), int(rng.integers(1, 40))
        np.testing.assert_allclose(kappa_s(N, mu, psi), _kappa_s_oracle(N, mu, psi), rtol=1e-10)


def test_kappa_s_monotonicity_and_conventions():
    ks = [kappa_s(n, 1.0, 15) for n in range(1, 60)]
    assert np.all(np.diff(ks) <= 1e-15)
    assert np.all(np.diff([kappa_s(15, m, 15) for m in np.linspace(0.1, 5, 30)]) <= 1e-15)
    assert np.all(np.diff([kappa_s(15, 1.0, p) for p in range(1, 40)]) >= -1e-15)
    assert kappa_s(15, 1.0, 15, "scaled") < kappa_s(15, 1.0, 15, "strict") < kappa_s(15, 1.0, 15)
    with pytest.raises(DomainError):
        kappa_s(15, 1.0, 15, "other")


def test_crlb_with_acceptance_forms():
    lam, zs = 1.0, 0.3
    np.testing.assert_allclose(crlb_with_acceptance(9, lam, zs, 0.0, 15),
                               crlb_scaling_coefficient(lam, zs) / math.log(9) ** 2, rtol=1e-14)
    k = kappa_s(4, 1.0, 15)
    np.testing.assert_allclose(crlb_with_acceptance(4, lam, zs, 1.0, 15, finite_n_mode=True),
                               1 / (k * k * zs * math.pi**2 * (25 / 12) ** 2), rtol=1e-14)
    with pytest.raises(DomainError):
        crlb_with_acceptance(1, lam, zs, 1.0, 15)


def test_sensing_optimum_near_load_cap():
    assert sensing_optimal_n(1.0, 15) in (14, 15, 16)
    assert sensing_optimal_n(1.0, 15, finite_n_mode=True) in (14, 15, 16)
    # scaling invariance: the minimiser ignores lambda_b and zeta
    curve = [crlb_with_acceptance(n, 3.0, 9.0, 1.0, 15) for n in range(2, 61)]
    assert int(np.argmin(curve)) + 2 == sensing_optimal_n(1.0, 15)
