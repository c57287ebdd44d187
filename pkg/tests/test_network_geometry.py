from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from coopisac.errors import DomainError
from coopisac.network_geometry import (
    NetworkRealization,
    PppWindow,
    default_window,
    distance_ratio_pdf,
    distance_ratio_pdf_given_r,
    expected_distance_ratio,
    expected_nth_distance,
    sample_distance_ratio,
    sample_ordered_distances,
    sample_realization,
)


def test_window_validation_and_default_size():
    with pytest.raises(DomainError):
        PppWindow(1.0, 1.0)  # about 3 points expected
    w = default_window(2.0)
    np.testing.assert_allclose(w.expected_count, 500.0, rtol=1e-12)
    np.testing.assert_allclose(default_window(1.0, order=80).expected_count, 800.0, rtol=1e-12)


def test_realization_sorted_and_json_round_trip():
    real = sample_realization(default_window(1.0), 42)
    assert np.all(np.diff(real.distances) >= 0)
    assert all(0 <= a < 2 * math.pi for a in real.angles)
    back = NetworkRealization.from_json(real.to_json())
    assert back == real
    assert sample_realization(default_window(1.0), 42) == real


def test_realization_rejects_unsorted():
    with pytest.raises(DomainError):
        NetworkRealization((2.0, 1.0), (0.0, 0.0), 0)


def test_gamma_arrival_sampler_matches_window_sampler():
    lam = 1.5
    rng = np.random.default_rng(5)
    fast = sample_ordered_distances(rng, 20000, 6, lam)
    window = default_window(lam)
    slow = np.array([sample_realization(window, s).distances[:6] for s in range(3000)])
    for k in range(6):
        res = stats.ks_2samp(fast[:, k], slow[:, k])
        assert res.pvalue > 1e-3, (k, res)


def test_expected_nth_distance_against_quadrature_and_samples():
    lam = 0.7
    for n in (1, 3, 10):
        # density of d_n: 2 (lam pi)^n r^(2n-1) exp(-lam pi r^2) / Gamma(n)
        pdf = lambda r: 2 * (lam * math.pi) ** n * r ** (2 * n - 1) * math.exp(-lam * math.pi * r * r) / math.gamma(n)
        ref = integrate.quad(lambda r: r * pdf(r), 0, np.inf)[0]
        np.testing.assert_allclose(expected_nth_distance(n, lam), ref, rtol=1e-9)
    d = sample_ordered_distances(np.random.default_rng(1), 200000, 4, lam)
    np.testing.assert_allclose(d[:, 3].mean(), expected_nth_distance(4, lam), rtol=5e-3)
    np.testing.assert_allclose(expected_nth_distance(400, lam, approx=True),
                               expected_nth_distance(400, lam), rtol=1e-3)


@pytest.mark.parametrize("L", [2, 3, 7, 30])
def test_distance_ratio_law(L):
    total = integrate.quad(lambda x: distance_ratio_pdf(x, L), 0, 1, points=[1 / math.sqrt(2 * L)])[0]
    np.testing.assert_allclose(total, 1.0, rtol=1e-9)
    # E[d1/dL] = (L-1) B(3/2, L-1)
    np.testing.assert_allclose(expected_distance_ratio(L), (L - 1) * special.beta(1.5, L - 1), rtol=1e-9)
    x = sample_distance_ratio(np.random.default_rng(L), L, 50000)
    cdf = lambda v: 1.0 - (1.0 - v**2) ** (L - 1)
    assert stats.kstest(x, cdf).pvalue > 1e-3


def test_distance_ratio_sampler_matches_ordered_distances():
    L = 5
    d = sample_ordered_distances(np.random.default_rng(9), 40000, L, 1.0)
    x = sample_distance_ratio(np.random.default_rng(10), L, 40000)
    assert stats.ks_2samp(d[:, 0] / d[:, L - 1], x).pvalue > 1e-3


@pytest.mark.parametrize("L", [2, 5])
def test_conditional_ratio_density(L):
    r, lam = 0.4, 1.0
    total = integrate.quad(lambda x: distance_ratio_pdf_given_r(x, L, r, lam), 1e-9, 1 - 1e-12, limit=200)[0]
    np.testing.assert_allclose(total, 1.0, rtol=1e-7)
    # sample d_L given d_1 = r from gamma arrivals and compare CDFs
    rng = np.random.default_rng(77)
    g = rng.gamma(L - 1, size=40000)
    ratio = r / np.sqrt(r * r + g / (lam * math.pi))
    cdf = lambda v: np.array([integrate.quad(lambda t: distance_ratio_pdf_given_r(t, L, r, lam), 1e-9, vi)[0] for vi in np.atleast_1d(v)])
    qs = np.quantile(ratio, [0.1, 0.5, 0.9])
    np.testing.assert_allclose(cdf(qs), [0.1, 0.5, 0.9], atol=0.01)


def test_ratio_functions_reject_small_L():
    for fn in (lambda: distance_ratio_pdf(0.5, 1), lambda: expected_distance_ratio(1),
               lambda: sample_distance_ratio(np.random.default_rng(0), 1, 3)):
        with pytest.raises(DomainError):
            fn()
    with pytest.raises(DomainError):
        distance_ratio_pdf(1.2, 3)
