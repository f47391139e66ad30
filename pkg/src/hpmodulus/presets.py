"""Named domains and problems with their coarse templates.

Templates are generated from the shape parameters: axis-aligned grids for
rectilinear domains, a "spider" (boundary ring plus a star of inner cells)
for star-shaped curved domains, and a sheared grid for the wave.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .analytic import CircularQuadSpec
from .geometry import Arc, Curve, Line, PolarCurve, QuadBezier, SineGraph
from .mesh import (
    DomainSpec,
    GradingParams,
    MeshError,
    QuadrilateralProblem,
    RingProblem,
    Segment,
    Template,
)

__all__ = [
    "polygon_domain",
    "grid_template",
    "spider_template",
    "rectangle",
    "polygon_quad",
    "l_shape",
    "wave",
    "circular_quad",
    "flower",
    "square_in_square",
    "cross_in_square",
    "rectangle_in_rectangle",
    "QUAD_PRESETS",
    "RING_PRESETS",
]


def polygon_domain(outer, inner=(), name: str = "") -> DomainSpec:
    outer = [complex(z) for z in outer]
    inner = [complex(z) for z in inner]
    verts = outer + inner
    n = len(outer)
    segs = [Segment(k, (k + 1) % n, Line(outer[k], outer[(k + 1) % n])) for k in range(n)]
    isegs = [
        Segment(n + k, n + (k + 1) % len(inner), Line(inner[k], inner[(k + 1) % len(inner)]))
        for k in range(len(inner))
    ]
    return DomainSpec(verts, segs, isegs, None, name)


def _on_segment(z: complex, a: complex, b: complex, tol: float = 1e-12) -> bool:
    t = (z - a) / (b - a)
    return abs(t.imag) < tol and -tol <= t.real <= 1 + tol


def grid_template(domain: DomainSpec, xs, ys, keep, targets=()) -> Template:
    """Axis-aligned grid over the cells (i, j) with keep(x0, x1, y0, y1) true.

    Grid lines are bisected where a cell would touch two targets, so each
    cell ends up with at most one refinement corner.
    """
    xs, ys = sorted(set(xs)), sorted(set(ys))
    tpts = [domain.vertices[t] for t in targets]
    for _ in range(8):
        cells = [
            (i, j)
            for i in range(len(xs) - 1)
            for j in range(len(ys) - 1)
            if keep(xs[i], xs[i + 1], ys[j], ys[j + 1])
        ]
        extra_x, extra_y = set(), set()
        for i, j in cells:
            corners = [complex(xs[i + a], ys[j + b]) for a, b in ((0, 0), (1, 0), (1, 1), (0, 1))]
            hit = [z for z in tpts if any(abs(z - c) < 1e-12 for c in corners)]
            if len(hit) > 1:
                if len({z.real for z in hit}) > 1:
                    extra_x.add(0.5 * (xs[i] + xs[i + 1]))
                if len({z.imag for z in hit}) > 1:
                    extra_y.add(0.5 * (ys[j] + ys[j + 1]))
        if not extra_x and not extra_y:
            break
        xs, ys = sorted(set(xs) | extra_x), sorted(set(ys) | extra_y)
    else:
        raise MeshError("grid could not isolate the refinement corners")

    pts = list(domain.vertices)
    index = {}
    for k, z in enumerate(pts):
        index[(round(z.real, 12), round(z.imag, 12))] = k

    def vid(x: float, y: float) -> int:
        key = (round(x, 12), round(y, 12))
        if key not in index:
            index[key] = len(pts)
            pts.append(complex(x, y))
        return index[key]

    tcells = [
        tuple(vid(xs[i + a], ys[j + b]) for a, b in ((0, 0), (1, 0), (1, 1), (0, 1))) for i, j in cells
    ]
    count: dict = {}
    for c in tcells:
        for k in range(4):
            a, b = c[k], c[(k + 1) % 4]
            count[(min(a, b), max(a, b))] = count.get((min(a, b), max(a, b)), 0) + 1
    boundary = {}
    segs = domain.segments
    for c in tcells:
        for k in range(4):
            a, b = c[k], c[(k + 1) % 4]
            if count[(min(a, b), max(a, b))] == 1:
                for s, seg in enumerate(segs):
                    za, zb = domain.vertices[seg.start], domain.vertices[seg.end]
                    if _on_segment(pts[a], za, zb) and _on_segment(pts[b], za, zb):
                        boundary[(a, b)] = s
                        break
                else:
                    raise MeshError(f"grid edge {pts[a]} - {pts[b]} is not on the domain boundary")
    return Template(pts, tcells, {}, boundary)


def spider_template(domain: DomainSpec, pieces, lam: float = 0.5, centre: complex = 0j) -> Template:
    """Template for a domain star-shaped about ``centre``.

    Outer segment s is cut into pieces[s] sub-arcs. With N boundary points
    B_k and the inner ring P_k on the circle of radius lam * mean|B_k - centre|
    along the rays to B_k, the cells are
    [B_k, B_k+1, P_k+1, P_k] and the inner fans [centre, P_2j, P_2j+1, P_2j+2].
    """
    if domain.inner:
        raise MeshError("spider templates cover simply connected domains")
    pts = list(domain.vertices)
    bids: list[int] = []
    curves: dict = {}
    boundary: dict = {}
    for s, seg in enumerate(domain.outer):
        m = int(pieces[s])
        ts = np.linspace(-1.0, 1.0, m + 1)
        ids = [seg.start]
        for t in ts[1:-1]:
            ids.append(len(pts))
            pts.append(complex(seg.curve.point(np.array(t))))
        ids.append(seg.end)
        for k in range(m):
            a, b = ids[k], ids[k + 1]
            sub = seg.curve if m == 1 else seg.curve.sub(ts[k], ts[k + 1])
            if not sub.is_straight:
                curves[(a, b)] = sub
            boundary[(a, b)] = s
        bids += ids[:-1]
    n = len(bids)
    if n % 2 or n < 6:
        raise MeshError("spider template needs an even number (>= 6) of boundary points")
    c = len(pts)
    pts.append(complex(centre))
    # spokes run straight toward the centre; at corners they leave along the
    # interior bisector instead (an arc meeting a radial spoke tangentially,
    # as orthogonal circles do, would pinch the cell)
    angle = dict(domain.corners())
    rbar = float(np.mean([abs(pts[b] - centre) for b in bids]))
    pids = []
    for b in bids:
        z = pts[b]
        pids.append(len(pts))
        pts.append(centre + lam * rbar * (z - centre) / abs(z - centre))
        if b in angle and abs(angle[b] - math.pi) > 1e-6:
            seg = next(sg for sg in domain.outer if sg.start == b)
            t_out = complex(seg.curve.deriv(np.array(-1.0)))
            d = t_out / abs(t_out) * cmath.exp(0.5j * angle[b])
            ctrl = z + 0.5 * abs(pts[-1] - z) * d
            curves[(b, pids[-1])] = QuadBezier(z, ctrl, pts[-1])
    cells = [(bids[k], bids[(k + 1) % n], pids[(k + 1) % n], pids[k]) for k in range(n)]
    cells += [(c, pids[2 * j], pids[2 * j + 1], pids[(2 * j + 2) % n]) for j in range(n // 2)]
    return Template(pts, cells, curves, boundary)


def _pieces_for(domain: DomainSpec, max_angle: float, centre: complex = 0j) -> list[int]:
    """Sub-arc counts so each piece spans at most ``max_angle`` about ``centre``."""
    out = []
    for seg in domain.outer:
        t = np.linspace(-1, 1, 201)
        z = seg.curve.point(t) - centre
        span = float(np.sum(np.abs(np.angle(z[1:] / z[:-1]))))
        out.append(max(1, math.ceil(span / max_angle - 1e-9)))
    if sum(out) % 2:
        # add a piece to the longest-per-piece segment
        k = max(range(len(out)), key=lambda s: _span(domain.outer[s].curve, centre) / out[s])
        out[k] += 1
    return out


def _span(curve: Curve, centre: complex) -> float:
    z = curve.point(np.linspace(-1, 1, 201)) - centre
    return float(np.sum(np.abs(np.angle(z[1:] / z[:-1]))))


# ---------------------------------------------------------------- quadrilaterals


def rectangle(h: float = 1.0) -> QuadrilateralProblem:
    """(R; 1+ih, ih, 0, 1), modulus h."""
    dom = polygon_domain([0, 1, 1 + 1j * h, 1j * h], name=f"rectangle h={h}")
    return QuadrilateralProblem(dom, (2, 3, 0, 1), name=dom.name)


def polygon_quad(A: complex, B: complex) -> QuadrilateralProblem:
    """Polygonal quadrilateral (Q; A, B, 0, 1)."""
    dom = polygon_domain([0, 1, A, B], name=f"quad A={A} B={B}")
    return QuadrilateralProblem(dom, (2, 3, 0, 1), name=dom.name)


def l_shape(marked=(2, 4, 6, 1), a: int = 3, b: int = 1, c: int = 2, d: int = 2) -> QuadrilateralProblem:
    """L(a, b, c, d) = (0,a)x(0,b) U (0,d)x(0,c); vertices z1..z6 from the origin.

    ``marked`` lists 1-based vertex labels, e.g. (2, 4, 6, 1).
    """
    if not (0 < d < a and 0 < b < c):
        raise ValueError("need 0 < d < a and 0 < b < c")
    verts = [0, a, a + 1j * b, d + 1j * b, d + 1j * c, 1j * c]
    dom = polygon_domain(verts, name="l-shape")
    m = tuple(k - 1 for k in marked)
    targets = tuple(dict.fromkeys(list(m) + [3]))

    def keep(x0, x1, y0, y1):
        return (x1 <= a and y1 <= b) or (x1 <= d and y1 <= c)

    xs = list(range(0, a + 1)) + [d]
    ys = list(range(0, c + 1)) + [b]
    dom.template = grid_template(dom, xs, ys, keep, targets)
    return QuadrilateralProblem(dom, m, targets, name=f"l-shape{tuple(marked)}")


def wave(divisions: int = 4) -> QuadrilateralProblem:
    """0 < x < 1, sin(2 pi x)/4 < y < 1 + sin(2 pi x)/4 with (Q; z2, z3, z4, z1)."""
    nd = int(divisions)
    if nd < 2 or nd % 2:
        raise ValueError("divisions must be even and >= 2")
    f = lambda x: 0.25 * math.sin(2 * math.pi * x)
    verts = [0j, 1 + 1j * f(1), 1 + 1j * (1 + f(1)), 1j]
    outer = [
        Segment(0, 1, SineGraph(0.0, 1.0, 0.0)),
        Segment(1, 2, Line(verts[1], verts[2])),
        Segment(2, 3, SineGraph(1.0, 0.0, 1.0)),
        Segment(3, 0, Line(verts[3], verts[0])),
    ]
    dom = DomainSpec(verts, outer, name="wave")
    # sheared grid: horizontal lines follow the sine
    pts = list(verts)
    h = 1.0 / nd

    def pid(i, j):
        x, y = h * i, h * j
        z = complex(x, y + f(x))
        for k, v in enumerate(pts):
            if abs(v - z) < 1e-14:
                return k
        pts.append(z)
        return len(pts) - 1

    grid = {(i, j): pid(i, j) for i in range(nd + 1) for j in range(nd + 1)}
    curves, boundary = {}, {}
    for j in range(nd + 1):
        for i in range(nd):
            a, b = grid[(i, j)], grid[(i + 1, j)]
            curves[(a, b)] = SineGraph(h * i, h * (i + 1), h * j)
    for i in range(nd):
        boundary[(grid[(i, 0)], grid[(i + 1, 0)])] = 0
        boundary[(grid[(nd - i, nd)], grid[(nd - 1 - i, nd)])] = 2
    for j in range(nd):
        boundary[(grid[(nd, j)], grid[(nd, j + 1)])] = 1
        boundary[(grid[(0, nd - j)], grid[(0, nd - 1 - j)])] = 3
    cells = [
        (grid[(i, j)], grid[(i + 1, j)], grid[(i + 1, j + 1)], grid[(i, j + 1)])
        for i in range(nd)
        for j in range(nd)
    ]
    dom.template = Template(pts, cells, curves, boundary)
    return QuadrilateralProblem(dom, (1, 2, 3, 0), name="wave")


def _orthogonal_arc(z0: complex, z1: complex) -> Arc:
    """Arc inside the unit disk orthogonal to the circle, from z0 to z1 (clockwise about its centre)."""
    th0, th1 = np.angle(z0), np.angle(z1)
    half = ((th1 - th0) % (2 * math.pi)) / 2
    mid = th0 + half
    centre = complex(np.exp(1j * mid)) / math.cos(half)
    return Arc.through(z0, z1, centre)


def circular_quad(m: int, n: int, r: int, kind: str = "B", lam: float = 0.5,
                  max_angle: float = math.pi / 4) -> QuadrilateralProblem:
    """(Q; e^{ia}, e^{ib}, e^{ic}, 1) with a, b, c = (m, n, r) pi/24.

    Kind A removes the caps cut off by the circles orthogonal to the unit
    circle through {1, e^{ia}} and {e^{ib}, e^{ic}}; kind B is the disk.
    """
    spec = CircularQuadSpec.from_nodes(m, n, r, kind)
    z4 = 1 + 0j
    z1, z2, z3 = (complex(np.exp(1j * t)) for t in (spec.a, spec.b, spec.c))
    verts = [z1, z2, z3, z4]
    unit = lambda t0, t1: Arc(0j, 1.0, t0, t1)
    if kind == "B":
        outer = [
            Segment(0, 1, unit(spec.a, spec.b)),
            Segment(1, 2, unit(spec.b, spec.c)),
            Segment(2, 3, unit(spec.c, 2 * math.pi)),
            Segment(3, 0, unit(0.0, spec.a)),
        ]
    else:
        outer = [
            Segment(0, 1, unit(spec.a, spec.b)),
            Segment(1, 2, _orthogonal_arc(z2, z3)),
            Segment(2, 3, unit(spec.c, 2 * math.pi)),
            Segment(3, 0, _orthogonal_arc(z4, z1)),
        ]
    dom = DomainSpec(verts, outer, name=f"Q_{kind}({m},{n},{r})")
    pieces = _pieces_for(dom, max_angle)
    dom.template = spider_template(dom, pieces, lam)
    return QuadrilateralProblem(dom, (0, 1, 2, 3), (0, 1, 2, 3), name=dom.name)


def flower(n: int = 4, t: float = 0.1, kind: str = "I", freq: float | None = None, phase: float = 0.0,
           lam: float = 0.5, max_angle: float | None = None) -> QuadrilateralProblem:
    """Domain inside r(theta) = 0.8 + t cos(freq theta + phase), freq defaulting to n.

    Marked points at theta = 0, pi/2, pi and 3pi/2 (type I) or 5pi/4 (type II).
    """
    if kind not in ("I", "II"):
        raise ValueError("flower type must be 'I' or 'II'")
    freq = float(n if freq is None else freq)
    th = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2 if kind == "I" else 5 * math.pi / 4]
    # fold the phase into the angle origin so PolarCurve keeps its simple form
    amp = t
    if abs(math.cos(phase) + 1) < 1e-15:
        amp, phase = -t, 0.0
    elif phase:
        raise ValueError("phase must be 0 or pi")
    r = lambda s: 0.8 + amp * math.cos(freq * s)
    verts = [r(s) * complex(math.cos(s), math.sin(s)) for s in th]
    bounds = th + [2 * math.pi]
    outer = [Segment(k, (k + 1) % 4, PolarCurve(bounds[k], bounds[k + 1], 0.8, amp, freq)) for k in range(4)]
    dom = DomainSpec(verts, outer, name=f"flower-{kind}(n={n}, t={t})")
    if max_angle is None:
        max_angle = min(math.pi / 4, math.pi / (2 * freq))
    dom.template = spider_template(dom, _pieces_for(dom, max_angle), lam)
    return QuadrilateralProblem(dom, (0, 1, 2, 3), (0, 1, 2, 3), name=dom.name)


# ---------------------------------------------------------------- rings


def square_in_square(a: float) -> RingProblem:
    """Ring between [-a, a]^2 and the unit square boundary, via one quadrant."""
    if not 0 < a < 1:
        raise ValueError("need 0 < a < 1")
    verts = [a, 1, 1 + 1j, 1j, 1j * a, a + 1j * a]
    dom = polygon_domain(verts, name=f"square-in-square a={a}")
    targets = (5,)

    def keep(x0, x1, y0, y1):
        return not (x1 <= a and y1 <= a)

    dom.template = grid_template(dom, [0, a, 1], [0, a, 1], keep, targets)
    q = QuadrilateralProblem(dom, (0, 1, 3, 4), targets, name=dom.name)
    return RingProblem.from_quarter(q, 4, name=dom.name)


def cross_in_square(a: float, b: float, c: float) -> RingProblem:
    """Ring between the cross G_ab and the square |x|, |y| < c, via one quadrant."""
    if not (0 < a < c and 0 < b < c):
        raise ValueError("need 0 < a < c and 0 < b < c")
    if a >= b:
        raise ValueError("need a < b for a cross with reentrant corners")
    verts = [b, c, c + 1j * c, 1j * c, 1j * b, a + 1j * b, a + 1j * a, b + 1j * a]
    dom = polygon_domain(verts, name=f"cross-in-square ({a}, {b}, {c})")
    targets = (5, 7)

    def keep(x0, x1, y0, y1):
        return not ((x1 <= a and y1 <= b) or (x1 <= b and y1 <= a))

    dom.template = grid_template(dom, [0, a, b, c], [0, a, b, c], keep, targets)
    q = QuadrilateralProblem(dom, (0, 1, 3, 4), targets, name=dom.name)
    return RingProblem.from_quarter(q, 4, name=dom.name)


def rectangle_in_rectangle(a: int, b: int, c: int, d: int, width: int = 7, height: int = 4) -> RingProblem:
    """Ring between [a, c] x [b, d] and the boundary of [0, width] x [0, height]."""
    if not (0 < a < c < width and 0 < b < d < height):
        raise ValueError("inner rectangle must lie strictly inside the outer one")
    outer = [0, width, width + 1j * height, 1j * height]
    inner = [a + 1j * b, a + 1j * d, c + 1j * d, c + 1j * b]  # clockwise
    dom = polygon_domain(outer, inner, name=f"rectangle-in-rectangle ({a}, {b}, {c}, {d})")
    targets = (4, 5, 6, 7)

    def keep(x0, x1, y0, y1):
        return not (a <= x0 and x1 <= c and b <= y0 and y1 <= d)

    xs = sorted(set(range(width + 1)) | {a, c})
    ys = sorted(set(range(height + 1)) | {b, d})
    dom.template = grid_template(dom, xs, ys, keep, targets)
    return RingProblem.plates(dom, targets=targets, name=dom.name)


@dataclass(frozen=True)
class PresetInfo:
    build: object
    params: GradingParams
    description: str


QUAD_PRESETS = {
    "square": PresetInfo(lambda **kw: rectangle(1.0), GradingParams(0.15, 0, 4), "unit square, modulus 1"),
    "rectangle": PresetInfo(lambda h=2.0, **kw: rectangle(float(h)), GradingParams(0.15, 0, 4), "(R; 1+ih, ih, 0, 1)"),
    "l-shape": PresetInfo(l_shape, GradingParams(0.15, 18, 16), "L(3,1,2,2) with (z2, z4, z6, z1)"),
    "wave": PresetInfo(lambda **kw: wave(), GradingParams(0.15, 12, 20), "sine-bounded strip"),
}

RING_PRESETS = {
    "square-in-square": square_in_square,
    "cross-in-square": cross_in_square,
    "rectangle-in-rectangle": rectangle_in_rectangle,
}
