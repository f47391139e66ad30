"""Parameterized boundary curves on t in [-1, 1].

Points are complex numbers. Every curve evaluates vectorized over t and
provides its exact derivative, which the blending map needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Curve", "Line", "Arc", "SineGraph", "PolarCurve", "QuadBezier", "SubCurve"]


class Curve:
    kind = "curve"

    def point(self, t):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    @property
    def start(self) -> complex:
        return complex(self.point(np.array(-1.0)))

    @property
    def end(self) -> complex:
        return complex(self.point(np.array(1.0)))

    @property
    def is_straight(self) -> bool:
        return False

    def sub(self, t0: float, t1: float) -> "Curve":
        return SubCurve(self, t0, t1)

    def reversed(self) -> "Curve":
        return self.sub(1.0, -1.0)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Line(Curve):
    z0: complex
    z1: complex
    kind = "line"

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.z0 + 0.5 * (t + 1.0) * (self.z1 - self.z0)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, 0.5 * (self.z1 - self.z0), dtype=complex)

    @property
    def is_straight(self) -> bool:
        return True

    def sub(self, t0, t1):
        return Line(complex(self.point(np.array(t0))), complex(self.point(np.array(t1))))

    def to_dict(self):
        return {"kind": "line"}


@dataclass(frozen=True, eq=False)
class Arc(Curve):
    """Circular arc center + radius * exp(i theta), theta from theta0 to theta1."""

    center: complex
    radius: float
    theta0: float
    theta1: float
    kind = "arc"

    def _theta(self, t):
        return self.theta0 + 0.5 * (np.asarray(t, dtype=float) + 1.0) * (self.theta1 - self.theta0)

    def point(self, t):
        return self.center + self.radius * np.exp(1j * self._theta(t))

    def deriv(self, t):
        return 1j * self.radius * np.exp(1j * self._theta(t)) * 0.5 * (self.theta1 - self.theta0)

    def sub(self, t0, t1):
        return Arc(self.center, self.radius, float(self._theta(t0)), float(self._theta(t1)))

    def to_dict(self):
        return {
            "kind": "arc",
            "center": [self.center.real, self.center.imag],
            "radius": self.radius,
            "theta0": self.theta0,
            "theta1": self.theta1,
        }

    @classmethod
    def through(cls, z0: complex, z1: complex, center: complex) -> "Arc":
        """Shorter arc of the circle about ``center`` from z0 to z1."""
        th0 = math.atan2((z0 - center).imag, (z0 - center).real)
        th1 = math.atan2((z1 - center).imag, (z1 - center).real)
        d = (th1 - th0 + math.pi) % (2 * math.pi) - math.pi
        return cls(center, abs(z0 - center), th0, th0 + d)


@dataclass(frozen=True, eq=False)
class SineGraph(Curve):
    """Graph y = offset + amplitude * sin(2 pi freq x), x from x0 to x1."""

    x0: float
    x1: float
    offset: float
    amplitude: float = 0.25
    freq: float = 1.0
    kind = "sine"

    def point(self, t):
        x = self.x0 + 0.5 * (np.asarray(t, dtype=float) + 1.0) * (self.x1 - self.x0)
        return x + 1j * (self.offset + self.amplitude * np.sin(2 * np.pi * self.freq * x))

    def deriv(self, t):
        x = self.x0 + 0.5 * (np.asarray(t, dtype=float) + 1.0) * (self.x1 - self.x0)
        dx = 0.5 * (self.x1 - self.x0)
        dy = self.amplitude * 2 * np.pi * self.freq * np.cos(2 * np.pi * self.freq * x) * dx
        return dx + 1j * dy

    def to_dict(self):
        return {
            "kind": "sine",
            "x0": self.x0,
            "x1": self.x1,
            "offset": self.offset,
            "amplitude": self.amplitude,
            "freq": self.freq,
        }


@dataclass(frozen=True, eq=False)
class PolarCurve(Curve):
    """r(theta) = base + amp * cos(freq * theta), theta from theta0 to theta1."""

    theta0: float
    theta1: float
    base: float = 0.8
    amp: float = 0.1
    freq: float = 4.0
    kind = "flower"

    def _theta(self, t):
        return self.theta0 + 0.5 * (np.asarray(t, dtype=float) + 1.0) * (self.theta1 - self.theta0)

    def point(self, t):
        th = self._theta(t)
        return (self.base + self.amp * np.cos(self.freq * th)) * np.exp(1j * th)

    def deriv(self, t):
        th = self._theta(t)
        r = self.base + self.amp * np.cos(self.freq * th)
        dr = -self.amp * self.freq * np.sin(self.freq * th)
        return (dr + 1j * r) * np.exp(1j * th) * 0.5 * (self.theta1 - self.theta0)

    def to_dict(self):
        return {
            "kind": "flower",
            "theta0": self.theta0,
            "theta1": self.theta1,
            "base": self.base,
            "amp": self.amp,
            "freq": self.freq,
        }


@dataclass(frozen=True, eq=False)
class QuadBezier(Curve):
    """Quadratic Bezier curve z0 -> z1 with control point zc."""

    z0: complex
    zc: complex
    z1: complex
    kind = "bezier"

    def point(self, t):
        s = 0.5 * (np.asarray(t, dtype=float) + 1.0)
        return (1 - s) ** 2 * self.z0 + 2 * s * (1 - s) * self.zc + s * s * self.z1

    def deriv(self, t):
        s = 0.5 * (np.asarray(t, dtype=float) + 1.0)
        return (1 - s) * (self.zc - self.z0) + s * (self.z1 - self.zc) + 0j

    def to_dict(self):
        return {"kind": "bezier", "control": [self.zc.real, self.zc.imag]}


@dataclass(frozen=True, eq=False)
class SubCurve(Curve):
    """Restriction of ``parent`` to [t0, t1], reparameterized onto [-1, 1]."""

    parent: Curve
    t0: float
    t1: float

    @property
    def kind(self):
        return self.parent.kind

    def _map(self, t):
        return self.t0 + 0.5 * (np.asarray(t, dtype=float) + 1.0) * (self.t1 - self.t0)

    def point(self, t):
        return self.parent.point(self._map(t))

    def deriv(self, t):
        return self.parent.deriv(self._map(t)) * 0.5 * (self.t1 - self.t0)

    @property
    def is_straight(self) -> bool:
        return self.parent.is_straight

    def sub(self, t0, t1):
        a, b = float(self._map(t0)), float(self._map(t1))
        return SubCurve(self.parent, a, b)

    def to_dict(self):
        d = dict(self.parent.to_dict())
        d["t0"], d["t1"] = self.t0, self.t1
        return d


def curve_from_dict(d: dict, z0: complex, z1: complex) -> Curve:
    kind = d.get("kind", "line")
    if kind == "line":
        curve: Curve = Line(z0, z1)
    elif kind == "arc":
        if "theta0" in d:
            curve = Arc(complex(*d["center"]), float(d["radius"]), float(d["theta0"]), float(d["theta1"]))
        else:
            curve = Arc.through(z0, z1, complex(*d["center"]))
    elif kind == "sine":
        curve = SineGraph(d["x0"], d["x1"], d["offset"], d.get("amplitude", 0.25), d.get("freq", 1.0))
    elif kind == "bezier":
        curve = QuadBezier(z0, complex(*d["control"]), z1)
    elif kind == "flower":
        curve = PolarCurve(d["theta0"], d["theta1"], d.get("base", 0.8), d.get("amp", 0.1), d.get("freq", 4.0))
    else:
        raise ValueError(f"unknown segment kind {kind!r}")
    if "t0" in d:
        curve = SubCurve(curve, d["t0"], d["t1"])
    return curve
