"""Special functions used by the analytic reference formulas and the hp basis.

Legendre polynomials and their integrals, Gauss-Legendre rules, the Gauss
hypergeometric series, complete elliptic integrals through the arithmetic
geometric mean, and the modulus function ``mu_a`` with its inverse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import digamma

__all__ = [
    "QuadratureRule",
    "EllipticPair",
    "HypergeometricConvergenceError",
    "legendre",
    "legendre_derivative",
    "legendre_table",
    "integrated_legendre",
    "integrated_legendre_table",
    "agm",
    "elliptic_k",
    "gauss_hypergeometric",
    "mu",
    "mu_half",
    "mu_inverse",
    "mu_inverse_pair",
    "teichmuller_tau",
    "beta_function",
    "gauss_rule",
]

HYP_TOL = 1e-16
HYP_MAX_TERMS = 20000


class HypergeometricConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class EllipticPair:
    """Complete elliptic integral K(r) and its complement K'(r) = K(r')."""

    k: float
    k_prime: float


# ---------------------------------------------------------------- Legendre


def legendre(n: int, x):
    """P_n(x) by the three-term recursion. Accepts scalars or arrays."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    p_prev, p = np.ones_like(x), x.copy()
    if n == 0:
        return _maybe_scalar(p_prev)
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return _maybe_scalar(p)


def legendre_derivative(n: int, x):
    """P'_n(x) from (1 - x^2) P'_n = -n x P_n + n P_{n-1}.

    At x = +-1 the recursion is singular and the limit n(n+1)/2 (+-1)^(n+1)
    is returned instead.
    """
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    if n == 0:
        return _maybe_scalar(np.zeros_like(x))
    pn = np.asarray(legendre(n, x))
    pm = np.asarray(legendre(n - 1, x))
    one_m = 1.0 - x * x
    end = one_m == 0.0
    safe = np.where(end, 1.0, one_m)
    d = (-n * x * pn + n * pm) / safe
    limit = 0.5 * n * (n + 1) * np.sign(x) ** (n + 1)
    return _maybe_scalar(np.where(end, limit, d))


def legendre_table(n_max: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of P_0..P_n_max at the points x.

    Derivatives use the recursion P'_{k+1} = P'_{k-1} + (2k+1) P_k, which is
    regular at the endpoints.
    """
    x = np.asarray(x, dtype=float)
    vals = np.zeros((n_max + 1,) + x.shape)
    ders = np.zeros_like(vals)
    vals[0] = 1.0
    if n_max >= 1:
        vals[1] = x
        ders[1] = 1.0
    for k in range(1, n_max):
        vals[k + 1] = ((2 * k + 1) * x * vals[k] - k * vals[k - 1]) / (k + 1)
        ders[k + 1] = ders[k - 1] + (2 * k + 1) * vals[k]
    return vals, ders


def integrated_legendre(n: int, xi):
    """phi_n(xi) = (P_n - P_{n-2}) / sqrt(2(2n-1)), n >= 2."""
    if n < 2:
        raise ValueError("integrated Legendre polynomials start at n = 2")
    xi = np.asarray(xi, dtype=float)
    val = (np.asarray(legendre(n, xi)) - np.asarray(legendre(n - 2, xi))) / math.sqrt(
        2.0 * (2 * n - 1)
    )
    return _maybe_scalar(val)


def integrated_legendre_table(p: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows n = 2..p of phi_n and phi_n' at the points x.

    phi_n' = sqrt((2n-1)/2) P_{n-1}.
    """
    x = np.asarray(x, dtype=float)
    vals, _ = legendre_table(max(p, 1), x)
    phi = np.zeros((max(p - 1, 0),) + x.shape)
    dphi = np.zeros_like(phi)
    for n in range(2, p + 1):
        phi[n - 2] = (vals[n] - vals[n - 2]) / math.sqrt(2.0 * (2 * n - 1))
        dphi[n - 2] = math.sqrt((2 * n - 1) / 2.0) * vals[n - 1]
    return phi, dphi


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1], nodes ascending."""
    if not 1 <= n <= 64:
        raise ValueError("gauss_rule supports 1 <= n <= 64")
    nodes, weights = np.polynomial.legendre.leggauss(n)
    # symmetrize to kill rounding drift
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights)


# ------------------------------------------------------ elliptic integrals


def agm(a: float, b: float) -> float:
    """Arithmetic-geometric mean of two positive numbers."""
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def _complement(r: float) -> float:
    return math.sqrt((1.0 - r) * (1.0 + r))


def elliptic_k(r: float, r_prime: float | None = None) -> EllipticPair:
    """K(r) and K'(r) via AGM(1, r') and AGM(1, r).

    ``r_prime`` may be supplied when it is known more accurately than
    sqrt(1 - r^2) (r close to 1).
    """
    if not 0.0 < r < 1.0:
        raise ValueError("elliptic_k requires 0 < r < 1")
    rp = _complement(r) if r_prime is None else r_prime
    return EllipticPair(math.pi / (2.0 * agm(1.0, rp)), math.pi / (2.0 * agm(1.0, r)))


# ---------------------------------------------------------- hypergeometric


def _series(a: float, b: float, c: float, z: float) -> float:
    term = 1.0
    total = 1.0
    for n in range(HYP_MAX_TERMS):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1)) * z
        total += term
        if abs(term) < HYP_TOL * abs(total):
            return total
    raise HypergeometricConvergenceError(
        f"2F1({a}, {b}; {c}; {z}) series did not converge in {HYP_MAX_TERMS} terms"
    )


def _log_case(a: float, b: float, w: float) -> float:
    """F(a, b; a+b; z) around z = 1, with w = 1 - z (A&S 15.3.10)."""
    log_w = math.log(w)
    psi_a, psi_b, psi_1 = digamma(a), digamma(b), digamma(1.0)
    coef = 1.0
    total = 0.0
    for n in range(HYP_MAX_TERMS):
        term = coef * (2.0 * psi_1 - psi_a - psi_b - log_w)
        total += term
        if n > 0 and abs(term) < HYP_TOL * abs(total):
            return total * math.gamma(a + b) / (math.gamma(a) * math.gamma(b))
        coef *= (a + n) * (b + n) / ((n + 1) ** 2) * w
        psi_1 += 1.0 / (n + 1)
        psi_a += 1.0 / (a + n)
        psi_b += 1.0 / (b + n)
    raise HypergeometricConvergenceError("logarithmic continuation did not converge")


def gauss_hypergeometric(a: float, b: float, c: float, z: float, z_comp: float | None = None) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; z) for real 0 <= z < 1.

    The power series is summed until the relative term size drops below 1e-16.
    In the zero-balanced case c = a + b with z > 1/2 the expansion about
    z = 1 is used instead, since the series converges too slowly there;
    ``z_comp`` is 1 - z, passed separately when z is near 1.
    """
    if c <= 0 and float(c).is_integer():
        raise ValueError("c must not be a nonpositive integer")
    if z_comp is None:
        z_comp = 1.0 - z
    if not (0.0 <= z <= 1.0) or z_comp <= 0.0:
        raise ValueError("gauss_hypergeometric requires 0 <= z < 1")
    if a == 0.0 or b == 0.0 or z == 0.0:
        return 1.0
    if z > 0.5 and abs(c - a - b) < 1e-15 and a > 0 and b > 0:
        return _log_case(a, b, z_comp)
    return _series(a, b, c, z)


# ---------------------------------------------------------------- mu_a


def _check_pair(r: float, r_prime: float | None) -> float:
    if r_prime is None:
        if not 0.0 < r < 1.0:
            raise ValueError("mu requires 0 < r < 1")
        return _complement(r)
    if not (0.0 < r <= 1.0 and 0.0 < r_prime <= 1.0):
        raise ValueError("mu requires 0 < r < 1")
    return r_prime


def mu_half(r: float, r_prime: float | None = None) -> float:
    """mu_{1/2}(r) = (pi/2) K(r')/K(r) = (pi/2) AGM(1, r')/AGM(1, r)."""
    rp = _check_pair(r, r_prime)
    return 0.5 * math.pi * agm(1.0, rp) / agm(1.0, r)


def mu(a_param: float, r: float, r_prime: float | None = None) -> float:
    """mu_a(r) = pi/(2 sin(pi a)) F(a,1-a;1;r'^2) / F(a,1-a;1;r^2)."""
    if not 0.0 < a_param < 1.0:
        raise ValueError("mu requires 0 < a < 1")
    rp = _check_pair(r, r_prime)
    r2, rp2 = r * r, rp * rp
    num = gauss_hypergeometric(a_param, 1.0 - a_param, 1.0, rp2, z_comp=r2)
    den = gauss_hypergeometric(a_param, 1.0 - a_param, 1.0, r2, z_comp=rp2)
    return math.pi / (2.0 * math.sin(math.pi * a_param)) * num / den


def _logit_pair(s: float) -> tuple[float, float]:
    # r/r' = e^s, computed without cancellation at either end
    if s >= 0:
        e = math.exp(-2.0 * s)
        return 1.0 / math.sqrt(1.0 + e), math.sqrt(e / (1.0 + e))
    e = math.exp(2.0 * s)
    return math.sqrt(e / (1.0 + e)), 1.0 / math.sqrt(1.0 + e)


def mu_inverse_pair(a_param: float, y: float, tol: float = 1e-14) -> tuple[float, float]:
    """Solve mu_a(r) = y; returns (r, r').

    Newton iteration on s = log(r/r') with a centred-difference derivative,
    falling back to bisection on s in [-40, 40].
    """
    if y <= 0:
        raise ValueError("mu_inverse requires y > 0")
    if a_param == 0.5:
        def forward(s: float) -> float:
            return mu_half(*_logit_pair(s))
    else:
        def forward(s: float) -> float:
            return mu(a_param, *_logit_pair(s))

    lo, hi = -40.0, 40.0
    f_lo, f_hi = forward(lo) - y, forward(hi) - y
    if f_lo < 0 or f_hi > 0:
        raise ArithmeticError(f"mu_inverse: y={y} outside the representable range")
    # mu(r) ~ log(4/r) for small r, mu(r) ~ pi^2/(4 log(4/r')) for r near 1
    if y > math.pi / 2:
        s = math.log(4.0) - y
    else:
        s = math.pi**2 / (4.0 * y) - math.log(4.0)
    s = min(max(s, lo), hi)
    target = tol * max(1.0, y)
    for _ in range(100):
        f = forward(s) - y
        if abs(f) <= target:
            return _logit_pair(s)
        if f > 0:
            lo = s
        else:
            hi = s
        h = 1e-6
        df = (forward(s + h) - forward(s - h)) / (2 * h)
        s_new = s - f / df if df < 0 else 0.5 * (lo + hi)
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        if s_new == s:
            break
        s = s_new
    f = forward(s) - y
    if abs(f) <= 10 * target:
        return _logit_pair(s)
    raise ArithmeticError(f"mu_inverse({a_param}, {y}) failed to converge (residual {f:.3e})")


def mu_inverse(a_param: float, y: float) -> float:
    return mu_inverse_pair(a_param, y)[0]


def teichmuller_tau(t: float) -> float:
    """Capacity of the plane Teichmuller ring, pi / mu_{1/2}(1/sqrt(1+t))."""
    if t <= 0:
        raise ValueError("teichmuller_tau requires t > 0")
    r = 1.0 / math.sqrt(1.0 + t)
    rp = math.sqrt(t / (1.0 + t))
    return math.pi / mu_half(r, rp)


def beta_function(x: float, y: float) -> float:
    if x <= 0 or y <= 0:
        raise ValueError("beta_function requires positive arguments")
    if x + y < 170:
        return math.gamma(x) * math.gamma(y) / math.gamma(x + y)
    return math.exp(math.lgamma(x) + math.lgamma(y) - math.lgamma(x + y))


def _maybe_scalar(v: np.ndarray):
    return float(v) if v.ndim == 0 else v
