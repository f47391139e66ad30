"""Closed-form and semi-closed-form reference moduli.

All moduli use the convention QM(z1, z2, z3, z4): the conformal image is the
rectangle 1+ih, ih, 0, 1 with the z_k going to the vertices in that order.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .specfun import (
    HypergeometricConvergenceError,
    agm,
    beta_function,
    gauss_hypergeometric,
    mu_half,
    mu_inverse_pair,
    teichmuller_tau,
)

__all__ = [
    "ConvexQuadSpec",
    "CircularQuadSpec",
    "RootBracketError",
    "absolute_ratio",
    "parallelogram_modulus",
    "square_frame_modulus",
    "hvv_quad_modulus",
    "square_in_square_capacity",
    "circular_quad_type_a",
    "circular_quad_type_b",
]


class RootBracketError(ArithmeticError):
    pass


def _k_ratio(r: float, rp: float) -> float:
    """K(r')/K(r) for a complementary pair."""
    return agm(1.0, rp) / agm(1.0, r)


def _interior_angle(prev: complex, here: complex, nxt: complex) -> float:
    """Interior angle at ``here`` of a positively oriented polygon, in (0, 2pi)."""
    turn = cmath.phase((nxt - here) / (here - prev))
    return math.pi - turn


@dataclass(frozen=True)
class ConvexQuadSpec:
    """Quadrilateral with vertices A, B, 0, 1 in the upper half plane.

    Interior angles are b*pi at 0, (c-b)*pi at 1, (1-a)*pi at A and
    (1+a-c)*pi at B.
    """

    a_param: float
    b_param: float
    c_param: float
    A: complex
    B: complex

    @classmethod
    def from_vertices(cls, A: complex, B: complex) -> "ConvexQuadSpec":
        A, B = complex(A), complex(B)
        pts = [A, B, 0j, 1 + 0j]
        ang = [_interior_angle(pts[k - 1], pts[k], pts[(k + 1) % 4]) for k in range(4)]
        if abs(sum(ang) - 2 * math.pi) > 1e-10:
            raise ValueError("vertices A, B, 0, 1 are not a positively oriented simple quadrilateral")
        b = ang[2] / math.pi
        c = b + ang[3] / math.pi
        a = 1.0 - ang[0] / math.pi
        if abs((1 + a - c) * math.pi - ang[1]) > 1e-10:
            raise ValueError("inconsistent angles")
        return cls(a, b, c, A, B)

    @property
    def in_theorem_range(self) -> bool:
        a, b, c = self.a_param, self.b_param, self.c_param
        eps = 1e-12
        return (
            0 < a < 1
            and 0 < b < 1
            and max(a + b, 1.0) - eps <= c <= 1.0 + min(a, b) + eps
        )

    @property
    def is_convex(self) -> bool:
        a, b, c = self.a_param, self.b_param, self.c_param
        return all(0 < t < 1 for t in (b, c - b, 1 - a, 1 + a - c))


@dataclass(frozen=True)
class CircularQuadSpec:
    """Boundary points e^{ia}, e^{ib}, e^{ic}, 1 on the unit circle."""

    a: float
    b: float
    c: float
    kind: str = "A"

    def __post_init__(self):
        if not 0 < self.a < self.b < self.c < 2 * math.pi:
            raise ValueError("need 0 < a < b < c < 2 pi")
        if self.kind not in ("A", "B"):
            raise ValueError("kind must be 'A' or 'B'")

    @classmethod
    def from_nodes(cls, m: int, n: int, r: int, kind: str = "A") -> "CircularQuadSpec":
        """Angles given in units of pi/24, as in the usual tables."""
        s = math.pi / 24
        return cls(m * s, n * s, r * s, kind)

    @property
    def points(self) -> tuple[complex, complex, complex, complex]:
        return (cmath.exp(1j * self.a), cmath.exp(1j * self.b), cmath.exp(1j * self.c), 1 + 0j)

    def ratio(self) -> float:
        a, b, c = self.a, self.b, self.c
        return math.sin(b / 2) * math.sin((c - a) / 2) / (math.sin(a / 2) * math.sin((c - b) / 2))

    def ratio_minus_one(self) -> float:
        # sin(b/2) sin((c-a)/2) - sin(a/2) sin((c-b)/2) = sin(c/2) sin((b-a)/2)
        a, b, c = self.a, self.b, self.c
        return math.sin(c / 2) * math.sin((b - a) / 2) / (math.sin(a / 2) * math.sin((c - b) / 2))


def absolute_ratio(a: complex, b: complex, c: complex, d: complex) -> float:
    """|a,b,c,d| = |a-c||b-d| / (|a-b||c-d|)."""
    den = abs(a - b) * abs(c - d)
    if den == 0:
        raise ZeroDivisionError("absolute ratio undefined for coincident points")
    return abs(a - c) * abs(b - d) / den


def parallelogram_modulus(t: float, h: float) -> float:
    """QM(1 + h e^{it}, h e^{it}, 0, 1)."""
    if not 0 < t < math.pi or h <= 0:
        raise ValueError("need 0 < t < pi and h > 0")
    a = t / math.pi
    if a == 0.5:
        r, rp = mu_inverse_pair(0.5, math.pi * h / 2)
    else:
        r, rp = mu_inverse_pair(a, math.pi * h / (2 * math.sin(math.pi * a)))
    return _k_ratio(r, rp)


def _trapezoid_pair(c: float) -> tuple[float, float]:
    """(r, r') with r = ((u-v)/(u+v))^2, u = mu^-1(pi c/2), v = mu^-1(pi/(2c))."""
    v, u = mu_inverse_pair(0.5, math.pi / (2 * c))  # u = v' by mu(r) mu(r') = pi^2/4
    s = u + v
    r = ((u - v) / s) ** 2
    rp = math.sqrt(8 * u * v * (u * u + v * v)) / (s * s)
    return r, rp


def square_frame_modulus(h: float) -> float:
    """M(h) = QM(1 + hi, (h-1)i, 0, 1) for h > 1."""
    if h <= 1:
        raise ValueError("square_frame_modulus requires h > 1")
    r, rp = _trapezoid_pair(2 * h - 1)
    return _k_ratio(rp, r)


def square_in_square_capacity(a: float) -> float:
    """Capacity of the ring between [-a,a]^2 and the boundary of (-1,1)^2."""
    if not 0 < a < 1:
        raise ValueError("square_in_square_capacity requires 0 < a < 1")
    r, rp = _trapezoid_pair((1 - a) / (1 + a))
    return 4 * math.pi / mu_half(r, rp)


def circular_quad_type_a(spec: CircularQuadSpec) -> float:
    """Disk with two orthogonal-arc caps removed: pi / log t."""
    u = spec.ratio()
    if u <= 1:
        raise ValueError("absolute ratio must exceed 1")
    # t = 2u - 1 + 2 sqrt(u^2 - u) = (sqrt(u) + sqrt(u-1))^2
    return math.pi / (2 * math.acosh(math.sqrt(u)))


def circular_quad_type_b(spec: CircularQuadSpec) -> float:
    """Full disk with four boundary vertices: tau(u - 1) / 2."""
    t = spec.ratio_minus_one()
    if t <= 0:
        raise ValueError("absolute ratio must exceed 1")
    return 0.5 * teichmuller_tau(t)


# -------------------------------------------------------- convex quadrilateral


def _pair_from_logit(s: float) -> tuple[float, float]:
    if s >= 0:
        e = math.exp(-2 * s)
        return 1 / math.sqrt(1 + e), math.sqrt(e / (1 + e))
    e = math.exp(2 * s)
    return math.sqrt(e / (1 + e)), 1 / math.sqrt(1 + e)


def _hvv_rhs(spec: ConvexQuadSpec, r: float, rp: float) -> float:
    a, b, c = spec.a_param, spec.b_param, spec.c_param
    L = beta_function(c - b, 1 - a) / beta_function(b, c - b)
    r2, rp2 = r * r, rp * rp
    num = gauss_hypergeometric(c - a, c - b, c + 1 - a - b, rp2, z_comp=r2)
    den = gauss_hypergeometric(a, b, c, r2, z_comp=rp2)
    return L * rp ** (2 * (c - a - b)) * num / den


def hvv_quad_modulus(spec: ConvexQuadSpec, strict: bool = False, samples: int = 33) -> float:
    """QM(A, B, 0, 1) = K(r')/K(r), r solving |A - 1| = |RHS(r)|.

    The root is bracketed in s = log(r/r') over [-11.5, 11.5]
    (r roughly in (1e-5, 1 - 1e-10)); sampled values must be monotone.
    With ``strict`` the angle parameters must satisfy
    max(a+b, 1) <= c <= 1 + min(a, b); otherwise the formula is evaluated
    anyway and the caller decides how far to trust it.
    """
    if strict and not spec.in_theorem_range:
        raise RootBracketError("angle parameters outside the theorem's range")
    a, b, c = spec.a_param, spec.b_param, spec.c_param
    target = abs(spec.A - 1)
    phase = (b + 1 - c) * math.pi
    if abs(cmath.phase((spec.A - 1) * cmath.exp(-1j * phase))) > 1e-8:
        raise RootBracketError("phase of A - 1 does not match the theorem's constant")

    def f(s: float) -> float:
        return math.log(_hvv_rhs(spec, *_pair_from_logit(s))) - math.log(target)

    grid = np.linspace(-11.5, 11.5, samples)
    vals = []
    for s in grid:
        try:
            vals.append((s, f(s)))
        except HypergeometricConvergenceError:
            continue
    if len(vals) < 2:
        raise RootBracketError("no usable samples for the root bracket")
    diffs = np.diff([v for _, v in vals])
    if not (np.all(diffs < 0) or np.all(diffs > 0)):
        raise RootBracketError("right-hand side is not monotone on the sample grid")
    for (s0, f0), (s1, f1) in zip(vals, vals[1:]):
        if f0 == 0:
            s_root = s0
            break
        if f0 * f1 < 0:
            s_root = brentq(f, s0, s1, xtol=1e-15, rtol=1e-15, maxiter=200)
            break
    else:
        raise RootBracketError("no sign change of the modulus equation on the sample grid")
    r, rp = _pair_from_logit(s_root)
    resid = abs(_hvv_rhs(spec, r, rp) - target)
    if resid > 1e-12 * target:
        raise RootBracketError(f"root residual {resid:.2e} too large")
    return _k_ratio(r, rp)
