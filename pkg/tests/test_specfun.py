import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hpmodulus.specfun import (
    HypergeometricConvergenceError,
    agm,
    beta_function,
    elliptic_k,
    gauss_hypergeometric,
    gauss_rule,
    integrated_legendre,
    integrated_legendre_table,
    legendre,
    legendre_derivative,
    mu,
    mu_half,
    mu_inverse,
    mu_inverse_pair,
    teichmuller_tau,
)

# reference values computed with mpmath at 40 digits
K_HALF = 1.685750354812596042871203657799
F_03_07_12_06 = 1.159276274794191101607729491404
F_025_075_1_095 = 1.618623452857967149370042031958
F_HALF_HALF_1_0999 = 3.081960708698816016357273024155
MU_025_04 = 2.942005584230779583692202176212
TAU_3 = 1.563401922696111506950488128678
BETA_03_17 = 2.718255454215653352607822745747


def test_legendre_small_cases():
    assert legendre(0, 0.37) == 1.0
    assert legendre(1, 0.5) == 0.5
    assert legendre(2, 1.0) == pytest.approx(1.0, abs=1e-15)
    x = np.linspace(-1, 1, 201)
    for n in range(12):
        assert np.all(np.abs(legendre(n, x)) <= 1 + 1e-14)


def test_legendre_derivative():
    assert legendre_derivative(1, 0.3) == pytest.approx(1.0, abs=1e-15)
    assert legendre_derivative(2, 0.0) == pytest.approx(0.0, abs=1e-15)
    h = 1e-5
    fd = (legendre(3, 0.5 + h) - legendre(3, 0.5 - h)) / (2 * h)
    assert legendre_derivative(3, 0.5) == pytest.approx(fd, abs=1e-8)
    for n in range(1, 9):
        assert legendre_derivative(n, 1.0) == pytest.approx(n * (n + 1) / 2, abs=1e-12)
        assert legendre_derivative(n, -1.0) == pytest.approx((-1) ** (n + 1) * n * (n + 1) / 2, abs=1e-12)


def test_integrated_legendre_values():
    assert integrated_legendre(2, 1.0) == pytest.approx(0.0, abs=1e-16)
    assert integrated_legendre(2, -1.0) == pytest.approx(0.0, abs=1e-16)
    assert integrated_legendre(2, 0.0) == pytest.approx(-math.sqrt(1.5) / 2, abs=1e-15)
    with pytest.raises(ValueError):
        integrated_legendre(1, 0.0)


def test_integrated_legendre_endpoints_vanish():
    for n in range(2, 26):
        assert abs(integrated_legendre(n, 1.0)) < 1e-14
        assert abs(integrated_legendre(n, -1.0)) < 1e-14


def test_integrated_legendre_orthonormal_derivatives():
    rule = gauss_rule(26)
    _, d = integrated_legendre_table(20, rule.nodes)
    gram = (d * rule.weights) @ d.T
    assert np.max(np.abs(gram - np.eye(gram.shape[0]))) < 1e-12


def test_gauss_rule_small():
    r1 = gauss_rule(1)
    assert r1.nodes.tolist() == [0.0] and r1.weights.tolist() == [2.0]
    r2 = gauss_rule(2)
    assert np.allclose(r2.nodes, [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)
    assert np.allclose(r2.weights, [1.0, 1.0], atol=1e-15)
    r8 = gauss_rule(8)
    assert abs(np.sum(r8.weights * r8.nodes ** 14) - 2 / 15) < 1e-14


@pytest.mark.parametrize("n", [1, 3, 7, 16, 33, 64])
def test_gauss_rule_invariants(n):
    r = gauss_rule(n)
    assert len(r.nodes) == len(r.weights) == n
    assert abs(r.weights.sum() - 2) < 1e-14
    assert np.all(np.diff(r.nodes) > 0) and np.all(r.weights > 0)
    for k in range(0, 2 * n, max(1, n // 4)):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(np.sum(r.weights * r.nodes ** k) - exact) < 1e-13


def test_gauss_rule_range():
    with pytest.raises(ValueError):
        gauss_rule(0)
    with pytest.raises(ValueError):
        gauss_rule(65)


def test_elliptic_k():
    s = 1 / math.sqrt(2)
    pair = elliptic_k(s)
    assert pair.k == pytest.approx(pair.k_prime, rel=1e-15)
    half = elliptic_k(0.5)
    assert half.k == pytest.approx(K_HALF, rel=1e-14)
    assert half.k == pytest.approx(math.pi / 2 * gauss_hypergeometric(0.5, 0.5, 1, 0.25), abs=1e-13)
    assert elliptic_k(1e-9).k == pytest.approx(math.pi / 2, rel=1e-15)
    ks = [elliptic_k(r).k for r in np.linspace(0.05, 0.95, 10)]
    assert np.all(np.diff(ks) > 0)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            elliptic_k(bad)


def test_agm_series_equivalence():
    for r in np.linspace(0.01, 0.95, 40):
        assert elliptic_k(r).k == pytest.approx(math.pi / 2 * gauss_hypergeometric(0.5, 0.5, 1, r * r), abs=1e-12)


def test_agm_symmetric():
    assert agm(1.0, 1.0) == 1.0
    assert agm(1.0, 0.5) == pytest.approx(agm(0.5, 1.0), rel=1e-15)


def test_hypergeometric_values():
    assert gauss_hypergeometric(0.5, 0.5, 1, 0) == 1.0
    assert gauss_hypergeometric(0.0, 2.3, 1.7, 0.8) == 1.0
    assert gauss_hypergeometric(0.5, 0.5, 1, 0.25) == pytest.approx(2 / math.pi * elliptic_k(0.5).k, abs=1e-13)
    assert gauss_hypergeometric(0.3, 0.7, 1.2, 0.6) == pytest.approx(F_03_07_12_06, rel=1e-14)
    # zero-balanced parameters near z = 1 take the logarithmic expansion
    assert gauss_hypergeometric(0.25, 0.75, 1, 0.95) == pytest.approx(F_025_075_1_095, rel=1e-13)
    assert gauss_hypergeometric(0.5, 0.5, 1, 0.999) == pytest.approx(F_HALF_HALF_1_0999, rel=1e-13)


def test_hypergeometric_errors():
    with pytest.raises(ValueError):
        gauss_hypergeometric(0.5, 0.5, -1.0, 0.3)
    with pytest.raises(ValueError):
        gauss_hypergeometric(0.5, 0.5, 1.0, 1.0)
    with pytest.raises(HypergeometricConvergenceError):
        gauss_hypergeometric(2.5, 2.5, 1.0, 1 - 1e-9)


def test_mu_values():
    assert mu(0.5, 1 / math.sqrt(2)) == pytest.approx(math.pi / 2, rel=1e-14)
    k = elliptic_k(0.3)
    assert mu(0.5, 0.3) == pytest.approx(math.pi / 2 * k.k_prime / k.k, abs=1e-13)
    assert mu(0.5, 0.3) == pytest.approx(mu_half(0.3), rel=1e-13)
    assert mu(0.25, 0.4) == pytest.approx(MU_025_04, rel=1e-13)


@pytest.mark.parametrize("a", [0.25, 0.5, 0.75])
def test_mu_decreasing(a):
    vals = [mu(a, r) for r in np.linspace(0.02, 0.98, 30)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_mu_inverse():
    assert mu_inverse(0.5, math.pi / 2) == pytest.approx(1 / math.sqrt(2), abs=1e-13)
    for y in (0.5, 1.0, 2.0, 5.0):
        assert mu(0.5, mu_inverse(0.5, y)) == pytest.approx(y, abs=1e-12)
    assert mu_inverse(0.25, mu(0.25, 0.4)) == pytest.approx(0.4, abs=1e-12)
    with pytest.raises(ValueError):
        mu_inverse(0.5, -1.0)


@settings(max_examples=40, deadline=None)
@given(a=st.sampled_from([0.25, 0.5, 0.75]), y=st.floats(0.2, 6.0))
def test_mu_round_trip(a, y):
    r, rp = mu_inverse_pair(a, y)
    assert r * r + rp * rp == pytest.approx(1.0, abs=1e-15)
    assert abs(mu(a, r, rp) - y) <= 1e-11 * max(1.0, y)


def test_teichmuller_tau():
    assert teichmuller_tau(1.0) == pytest.approx(2.0, rel=1e-14)
    assert teichmuller_tau(3.0) == pytest.approx(math.pi / mu_half(0.5), rel=1e-14)
    assert teichmuller_tau(3.0) == pytest.approx(TAU_3, rel=1e-13)
    # r = 1/sqrt(1+t) falls as t grows, so mu rises and tau falls
    vals = [teichmuller_tau(t) for t in (0.5, 1, 2, 4)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_beta_function():
    assert beta_function(1, 1) == pytest.approx(1.0, rel=1e-14)
    assert beta_function(2, 1) == pytest.approx(0.5, rel=1e-14)
    numeric, _ = quad(lambda t: t ** -0.5 * (1 - t) ** -0.5, 0, 1, epsabs=1e-13)
    assert beta_function(0.5, 0.5) == pytest.approx(math.pi, rel=1e-13)
    assert numeric == pytest.approx(math.pi, rel=1e-9)
    assert beta_function(0.3, 1.7) == pytest.approx(BETA_03_17, rel=1e-13)
    with pytest.raises(ValueError):
        beta_function(0.0, 1.0)
