"""Domains, quadrilateral templates, geometric corner refinement and element maps.

A mesh is built in two stages. A coarse *template* of curvilinear
quadrilateral cells covers the domain; each cell carries four side curves
and its boundary sides remember the domain segment they lie on. Geometric
refinement then subdivides every cell that touches a target corner in the
cell's own reference coordinates, so element maps are compositions of an
affine-in-(u, w) map with the cell's Gordon-Hall blend. Jacobians are
formed as products, which keeps them accurate on elements of size 1e-15.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import Curve, Line, curve_from_dict
from .specfun import gauss_rule

__all__ = [
    "MeshError",
    "GradingParams",
    "Segment",
    "DomainSpec",
    "Template",
    "CellGeometry",
    "Element",
    "Mesh",
    "QuadrilateralProblem",
    "RingProblem",
    "blending_map",
    "minimal_mesh",
    "refine_geometric",
    "orient_edges",
    "conjugate_problem",
    "build_mesh",
    "load_domain",
]

# reference corners of [-1, 1]^2 in counterclockwise order
REF_CORNERS = ((-1, -1), (1, -1), (1, 1), (-1, 1))
# local side k runs from LOCAL_SIDES[k][0] to LOCAL_SIDES[k][1] in its own parameter
LOCAL_SIDES = ((0, 1), (1, 2), (3, 2), (0, 3))


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class GradingParams:
    alpha: float = 0.15
    nu: int = 12
    p: int = 12

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if int(self.nu) != self.nu or self.nu < 0:
            raise ValueError("nu must be a nonnegative integer")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be an integer >= 1")


# ---------------------------------------------------------------- domains


@dataclass(frozen=True, eq=False)
class Segment:
    start: int
    end: int
    curve: Curve


def _signed_area(segments: list[Segment], n: int = 24) -> float:
    rule = gauss_rule(n)
    total = 0.0
    for seg in segments:
        z = seg.curve.point(rule.nodes)
        dz = seg.curve.deriv(rule.nodes)
        total += 0.5 * float(np.sum(rule.weights * (z.real * dz.imag - z.imag * dz.real)))
    return total


@dataclass(eq=False)
class DomainSpec:
    """Outer cycle (counterclockwise) and optional inner cycle (clockwise).

    ``vertices`` holds the segment endpoints; segment ids number the outer
    cycle first, then the inner one.
    """

    vertices: list[complex]
    outer: list[Segment]
    inner: list[Segment] = field(default_factory=list)
    template: "Template | None" = None
    name: str = ""

    def __post_init__(self):
        self.vertices = [complex(v) for v in self.vertices]
        scale = max(abs(v) for v in self.vertices) + 1.0
        for cyc in (self.outer, self.inner):
            for k, seg in enumerate(cyc):
                if seg.end != cyc[(k + 1) % len(cyc)].start:
                    raise MeshError("boundary cycle is not closed")
                for vid, z in ((seg.start, seg.curve.start), (seg.end, seg.curve.end)):
                    if abs(z - self.vertices[vid]) > 1e-12 * scale:
                        raise MeshError(f"segment endpoint does not match vertex {vid}")
        if _signed_area(self.outer) <= 0:
            raise MeshError("outer boundary must be positively oriented")
        if self.inner and _signed_area(self.inner) >= 0:
            raise MeshError("inner boundary must be negatively oriented")

    @property
    def segments(self) -> list[Segment]:
        return list(self.outer) + list(self.inner)

    @property
    def is_ring(self) -> bool:
        return bool(self.inner)

    def area(self) -> float:
        return _signed_area(self.outer) + (_signed_area(self.inner) if self.inner else 0.0)

    def corners(self) -> list[tuple[int, float]]:
        """(vertex id, interior angle) at every segment junction."""
        out = []
        for cyc in (self.outer, self.inner):
            for k, seg in enumerate(cyc):
                prev = cyc[k - 1]
                t_in = complex(prev.curve.deriv(np.array(1.0)))
                t_out = complex(seg.curve.deriv(np.array(-1.0)))
                out.append((seg.start, math.pi - cmath.phase(t_out / t_in)))
        return out

    def reentrant_corners(self, tol: float = 1e-9) -> list[int]:
        return [v for v, ang in self.corners() if ang > math.pi + tol]

    def segment_ids_outer(self) -> list[int]:
        return list(range(len(self.outer)))

    def segment_ids_inner(self) -> list[int]:
        return list(range(len(self.outer), len(self.outer) + len(self.inner)))


# ---------------------------------------------------------------- templates


@dataclass(frozen=True)
class CellGeometry:
    """Four corners and four counterclockwise side curves (side k: V_k -> V_k+1)."""

    corners: tuple[complex, complex, complex, complex]
    sides: tuple[Curve, Curve, Curve, Curve]

    @property
    def curved(self) -> bool:
        return not all(s.is_straight for s in self.sides)

    def map(self, xi, eta):
        """Gordon-Hall blend: points (complex) and d/dxi, d/deta (complex)."""
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        V1, V2, V3, V4 = self.corners
        s1, s2, s3, s4 = self.sides
        if not self.curved:
            x = 0.25 * ((1 - xi) * (1 - eta) * V1 + (1 + xi) * (1 - eta) * V2
                        + (1 + xi) * (1 + eta) * V3 + (1 - xi) * (1 + eta) * V4)
            dxi = 0.25 * ((1 - eta) * (V2 - V1) + (1 + eta) * (V3 - V4))
            deta = 0.25 * ((1 - xi) * (V4 - V1) + (1 + xi) * (V3 - V2))
            return x, dxi, deta
        c1, c2, c3, c4 = s1.point(xi), s2.point(eta), s3.point(-xi), s4.point(-eta)
        d1, d2, d3, d4 = s1.deriv(xi), s2.deriv(eta), s3.deriv(-xi), s4.deriv(-eta)
        bil = 0.25 * ((1 - xi) * (1 - eta) * V1 + (1 + xi) * (1 - eta) * V2
                      + (1 + xi) * (1 + eta) * V3 + (1 - xi) * (1 + eta) * V4)
        x = 0.5 * ((1 - eta) * c1 + (1 + xi) * c2 + (1 + eta) * c3 + (1 - xi) * c4) - bil
        dbil_xi = 0.25 * ((1 - eta) * (V2 - V1) + (1 + eta) * (V3 - V4))
        dbil_eta = 0.25 * ((1 - xi) * (V4 - V1) + (1 + xi) * (V3 - V2))
        dxi = 0.5 * ((1 - eta) * d1 + c2 - (1 + eta) * d3 - c4) - dbil_xi
        deta = 0.5 * (-c1 + (1 + xi) * d2 + c3 - (1 - xi) * d4) - dbil_eta
        return x, dxi, deta


def blending_map(cell: CellGeometry, xi, eta):
    """Point and 2x2 Jacobian of the blended map at (xi, eta)."""
    x, dxi, deta = cell.map(xi, eta)
    jac = np.stack(
        [np.stack([dxi.real, deta.real], axis=-1), np.stack([dxi.imag, deta.imag], axis=-1)],
        axis=-2,
    )
    return x, jac


@dataclass(eq=False)
class Template:
    """Coarse conforming quadrilateral cover of a domain.

    ``curves`` maps directed vertex pairs to side curves (straight when
    absent); ``boundary`` maps counterclockwise boundary edges to the id of
    the domain segment they lie on.
    """

    points: list[complex]
    cells: list[tuple[int, int, int, int]]
    curves: dict[tuple[int, int], Curve] = field(default_factory=dict)
    boundary: dict[tuple[int, int], int] = field(default_factory=dict)

    def side_curve(self, i: int, j: int) -> Curve:
        if (i, j) in self.curves:
            return self.curves[(i, j)]
        if (j, i) in self.curves:
            return self.curves[(j, i)].reversed()
        return Line(self.points[i], self.points[j])

    def cell_geometry(self, c: int) -> CellGeometry:
        v = self.cells[c]
        sides = tuple(self.side_curve(v[k], v[(k + 1) % 4]) for k in range(4))
        return CellGeometry(tuple(self.points[i] for i in v), sides)

    def edge_cells(self) -> dict[tuple[int, int], list[int]]:
        out: dict[tuple[int, int], list[int]] = {}
        for c, v in enumerate(self.cells):
            for k in range(4):
                a, b = v[k], v[(k + 1) % 4]
                out.setdefault((min(a, b), max(a, b)), []).append(c)
        return out

    def validate(self) -> None:
        for key, cells in self.edge_cells().items():
            if len(cells) > 2:
                raise MeshError(f"template edge {key} shared by {len(cells)} cells")
        for c, v in enumerate(self.cells):
            if len(set(v)) != 4:
                raise MeshError(f"template cell {c} is degenerate")
            for k in range(4):
                a, b = v[k], v[(k + 1) % 4]
                shared = len(self.edge_cells()[(min(a, b), max(a, b))]) == 2
                if not shared and (a, b) not in self.boundary:
                    raise MeshError(f"boundary edge {(a, b)} of cell {c} has no segment")

    def split(self) -> "Template":
        """Uniform refinement of every cell into four."""
        pts = list(self.points)
        curves: dict[tuple[int, int], Curve] = {}
        boundary: dict[tuple[int, int], int] = {}
        mids: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in mids:
                cur = self.side_curve(*key)
                mids[key] = len(pts)
                pts.append(complex(cur.point(np.array(0.0))))
                if not cur.is_straight:
                    curves[(key[0], mids[key])] = cur.sub(-1.0, 0.0)
                    curves[(mids[key], key[1])] = cur.sub(0.0, 1.0)
            m = mids[key]
            if (a, b) in self.boundary:
                boundary[(a, m)] = boundary[(m, b)] = self.boundary[(a, b)]
            return m

        cells = []
        for c, v in enumerate(self.cells):
            m = [mid(v[k], v[(k + 1) % 4]) for k in range(4)]
            centre = len(pts)
            pts.append(complex(self.cell_geometry(c).map(0.0, 0.0)[0]))
            cells += [
                (v[0], m[0], centre, m[3]),
                (m[0], v[1], m[1], centre),
                (centre, m[1], v[2], m[2]),
                (m[3], centre, m[2], v[3]),
            ]
        return Template(pts, cells, curves, boundary)

    def to_dict(self) -> dict:
        return {
            "points": [[z.real, z.imag] for z in self.points],
            "cells": [list(c) for c in self.cells],
            "curves": [[i, j, cur.to_dict()] for (i, j), cur in self.curves.items()],
            "boundary": [[i, j, s] for (i, j), s in self.boundary.items()],
        }


def template_from_polygon(domain: DomainSpec, max_quad_angle: float = 0.6 * math.pi) -> Template:
    """Quadrilateral template for a straight-sided domain.

    A convex quadrilateral with all angles below ``max_quad_angle`` is its
    own cell. Anything else is triangulated
    (constrained Delaunay) and each triangle is split into three
    quadrilaterals through its centroid and edge midpoints, so every cell
    touches at most one domain vertex.
    """
    if not all(s.curve.is_straight for s in domain.segments):
        raise MeshError("curved domains need an explicit template")
    nout = len(domain.outer)
    pts = list(domain.vertices)
    boundary = {(s.start, s.end): k for k, s in enumerate(domain.segments)}
    if nout == 4 and not domain.inner:
        ring = [s.start for s in domain.outer]
        ang = [a for v, a in domain.corners()]
        if all(a < max_quad_angle for a in ang):
            return Template(pts, [tuple(ring)], {}, boundary)

    import shapely
    from shapely.geometry import Polygon

    outer = [pts[s.start] for s in domain.outer]
    holes = [[pts[s.start] for s in domain.inner]] if domain.inner else []
    poly = Polygon([(z.real, z.imag) for z in outer], [[(z.real, z.imag) for z in h] for h in holes])
    if not poly.is_valid:
        raise MeshError("self-intersecting boundary")
    tris = shapely.constrained_delaunay_triangles(poly)
    scale = max(abs(z) for z in pts) + 1.0

    def vid(x: float, y: float) -> int:
        d = [abs(complex(x, y) - z) for z in pts[: len(domain.vertices)]]
        k = int(np.argmin(d))
        if d[k] > 1e-10 * scale:
            raise MeshError("triangulation introduced a new vertex")
        return k

    mids: dict[tuple[int, int], int] = {}
    cells = []
    new_boundary: dict[tuple[int, int], int] = {}

    def mid(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in mids:
            mids[key] = len(pts)
            pts.append(0.5 * (pts[a] + pts[b]))
        m = mids[key]
        if (a, b) in boundary:
            new_boundary[(a, m)] = new_boundary[(m, b)] = boundary[(a, b)]
        return m

    for tri in tris.geoms:
        coords = list(tri.exterior.coords)[:3]
        a, b, c = (vid(x, y) for x, y in coords)
        za, zb, zc = pts[a], pts[b], pts[c]
        if ((zb - za).conjugate() * (zc - za)).imag < 0:
            b, c = c, b
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        g = len(pts)
        pts.append((pts[a] + pts[b] + pts[c]) / 3)
        cells += [(a, mab, g, mca), (b, mbc, g, mab), (c, mca, g, mbc)]
    return Template(pts, cells, {}, new_boundary)


# ---------------------------------------------------------------- refinement


@dataclass(frozen=True)
class Element:
    cell: int
    vertices: tuple[int, int, int, int]
    anchor: tuple[int, int]
    scale: float
    uv: tuple[tuple[float, float], ...]
    layer: int
    boundary: tuple[int | None, int | None, int | None, int | None]


@dataclass(eq=False)
class Mesh:
    template: Template
    elements: list[Element]
    vertex_keys: list
    vertices: np.ndarray
    params: GradingParams | None = None
    targets: tuple[int, ...] = ()
    edges: np.ndarray | None = None
    element_edges: np.ndarray | None = None
    parity: np.ndarray | None = None

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def cell_geometry(self, c: int) -> CellGeometry:
        return self.template.cell_geometry(c)

    def element_curved(self, e: int) -> bool:
        return self.template.cell_geometry(self.elements[e].cell).curved

    def map(self, e: int, xi, eta):
        """Point and Jacobian of element ``e`` at reference coordinates."""
        pts, jac = self.map_many([e], np.asarray(xi, float).ravel(), np.asarray(eta, float).ravel())
        shape = np.shape(xi)
        return pts[0].reshape(shape), jac[0].reshape(shape + (2, 2))

    def map_many(self, elems, xi: np.ndarray, eta: np.ndarray):
        """Points (ne, n) and Jacobians (ne, n, 2, 2) at the points (xi, eta)."""
        elems = list(elems)
        n = xi.size
        pts = np.empty((len(elems), n), dtype=complex)
        jac = np.empty((len(elems), n, 2, 2))
        n0 = 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])
        dn_xi = 0.25 * np.array([-(1 - eta), 1 - eta, 1 + eta, -(1 + eta)])
        dn_eta = 0.25 * np.array([-(1 - xi), -(1 + xi), 1 + xi, 1 - xi])
        by_cell: dict[int, list[int]] = {}
        for i, e in enumerate(elems):
            by_cell.setdefault(self.elements[e].cell, []).append(i)
        for c, rows in by_cell.items():
            geom = self.template.cell_geometry(c)
            bx, by, loc = [], [], []
            for i in rows:
                el = self.elements[elems[i]]
                uv = np.array(el.uv)
                ax, ay = el.anchor
                u = el.scale * (uv[:, 0] @ n0)
                w = el.scale * (uv[:, 1] @ n0)
                bx.append(ax * (1 - 2 * u))
                by.append(ay * (1 - 2 * w))
                jl = np.empty((n, 2, 2))
                jl[:, 0, 0] = -2 * ax * el.scale * (uv[:, 0] @ dn_xi)
                jl[:, 0, 1] = -2 * ax * el.scale * (uv[:, 0] @ dn_eta)
                jl[:, 1, 0] = -2 * ay * el.scale * (uv[:, 1] @ dn_xi)
                jl[:, 1, 1] = -2 * ay * el.scale * (uv[:, 1] @ dn_eta)
                loc.append(jl)
            x, jg = blending_map(geom, np.concatenate(bx), np.concatenate(by))
            jg = jg.reshape(len(rows), n, 2, 2)
            x = x.reshape(len(rows), n)
            for k, i in enumerate(rows):
                pts[i] = x[k]
                jac[i] = jg[k] @ loc[k]
        return pts, jac

    def local_side_vertices(self, e: int, k: int) -> tuple[int, int]:
        v = self.elements[e].vertices
        a, b = LOCAL_SIDES[k]
        return v[a], v[b]

    def boundary_edges(self) -> list[tuple[int, int, int]]:
        """(element, local side, segment id) for every boundary side."""
        return [
            (e, k, s)
            for e, el in enumerate(self.elements)
            for k, s in enumerate(el.boundary)
            if s is not None
        ]

    def area(self, n: int = 24) -> float:
        rule = gauss_rule(n)
        xi, eta = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
        w = np.outer(rule.weights, rule.weights).ravel()
        _, jac = self.map_many(range(self.n_elements), xi.ravel(), eta.ravel())
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        return float(np.sum(det @ w))

    def to_dict(self) -> dict:
        return {
            "vertices": [[z.real, z.imag] for z in self.vertices],
            "elements": [list(el.vertices) for el in self.elements],
            "parity": self.parity.tolist() if self.parity is not None else None,
            "layers": [el.layer for el in self.elements],
            "cells": [el.cell for el in self.elements],
        }


_CELL_VERTS_UNIT = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


def _unrefined_element(c: int, cell: tuple[int, ...], template: Template) -> tuple:
    bnd = tuple(template.boundary.get((cell[k], cell[(k + 1) % 4])) for k in range(4))
    keys = tuple(("v", i) for i in cell)
    return keys, Element(c, (0, 0, 0, 0), (-1, -1), 1.0, _CELL_VERTS_UNIT, 0, bnd)


def _refined_elements(c: int, cell: tuple[int, ...], kc: int, template: Template, alpha: float, nu: int):
    """Geometric refinement of cell ``c`` toward its corner ``kc``.

    Points are tracked as exponent pairs (eu, ew): None means coordinate 0,
    j means alpha**j, in corner-relative coordinates (u, w) in [0, 1]^2.
    """
    ax, ay = REF_CORNERS[kc]
    corner_of = {ref: k for k, ref in enumerate(REF_CORNERS)}

    def base_vertex(eu, ew) -> int:
        xi = ax if eu is None else -ax
        eta = ay if ew is None else -ay
        return cell[corner_of[(xi, eta)]]

    anchor_vid = cell[kc]

    def key(pt):
        eu, ew = pt
        if eu in (None, 0) and ew in (None, 0):
            return ("v", base_vertex(eu, ew))
        if ew is None:
            return ("e", anchor_vid, base_vertex(0, None), eu)
        if eu is None:
            return ("e", anchor_vid, base_vertex(None, 0), ew)
        assert eu == ew
        return ("i", c, eu)

    # base sides in (u, w) terms -> template side index
    def side_of(p, q):
        (pu, pw), (qu, qw) = p, q
        if pu is None and qu is None:
            ref = ("xi", ax)
        elif pu == 0 and qu == 0:
            ref = ("xi", -ax)
        elif pw is None and qw is None:
            ref = ("eta", ay)
        elif pw == 0 and qw == 0:
            ref = ("eta", -ay)
        else:
            return None
        k = {("eta", -1): 0, ("xi", 1): 1, ("eta", 1): 2, ("xi", -1): 3}[ref]
        return template.boundary.get((cell[k], cell[(k + 1) % 4]))

    N = None
    a = alpha
    shapes = []
    for k in range(nu):
        shapes.append((k, [(k + 1, N), (k, N), (k, k), (k + 1, k + 1)], ((a, 0.0), (1.0, 0.0), (1.0, 1.0), (a, a))))
        shapes.append((k, [(N, k + 1), (k + 1, k + 1), (k, k), (N, k)], ((0.0, a), (a, a), (1.0, 1.0), (0.0, 1.0))))
    shapes.append((nu, [(N, N), (nu, N), (nu, nu), (N, nu)], _CELL_VERTS_UNIT))

    out = []
    flip = ax * ay < 0
    for layer, exps, uv in shapes:
        scale = alpha ** layer
        if flip:
            exps = [exps[0], exps[3], exps[2], exps[1]]
            uv = (uv[0], uv[3], uv[2], uv[1])
        sides = [(exps[i], exps[j]) for i, j in ((0, 1), (1, 2), (2, 3), (3, 0))]
        bnd = tuple(side_of(p, q) for p, q in sides)
        keys = tuple(key(pt) for pt in exps)
        out.append((keys, Element(c, (0, 0, 0, 0), (ax, ay), scale, tuple(uv), layer, bnd)))
    return out


def _assemble_mesh(template: Template, items: list, params, targets) -> Mesh:
    index: dict = {}
    keys: list = []
    elements = []
    for vkeys, el in items:
        ids = []
        for kk in vkeys:
            if kk not in index:
                index[kk] = len(keys)
                keys.append(kk)
            ids.append(index[kk])
        elements.append(replace(el, vertices=tuple(ids)))
    mesh = Mesh(template, elements, keys, np.zeros(len(keys), dtype=complex), params, tuple(targets))
    # vertex positions from the first element that owns each vertex
    ref = np.array([c[0] for c in REF_CORNERS], float), np.array([c[1] for c in REF_CORNERS], float)
    pts, _ = mesh.map_many(range(len(elements)), ref[0], ref[1])
    seen = np.zeros(len(keys), bool)
    for e, el in enumerate(elements):
        for k, v in enumerate(el.vertices):
            if not seen[v]:
                mesh.vertices[v] = pts[e, k]
                seen[v] = True
    return orient_edges(mesh)


def minimal_mesh(domain: DomainSpec) -> Mesh:
    """Unrefined mesh: one element per template cell."""
    template = domain.template if domain.template is not None else template_from_polygon(domain)
    template.validate()
    items = [_unrefined_element(c, cell, template) for c, cell in enumerate(template.cells)]
    return _assemble_mesh(template, items, None, ())


def refine_geometric(mesh: Mesh, params: GradingParams, targets) -> Mesh:
    """(alpha, nu)-refinement of an unrefined mesh toward template vertices ``targets``.

    Cells touching more than one target are first split uniformly until
    every cell touches at most one.
    """
    if any(el.layer or el.scale != 1.0 for el in mesh.elements):
        raise MeshError("refine_geometric expects an unrefined mesh")
    targets = tuple(dict.fromkeys(int(t) for t in targets))
    template = mesh.template
    npts = len(template.points)
    for t in targets:
        if not 0 <= t < npts:
            raise MeshError(f"refinement target {t} is not a mesh vertex")
    if params.nu == 0 or not targets:
        items = [_unrefined_element(c, cell, template) for c, cell in enumerate(template.cells)]
        return _assemble_mesh(template, items, params, targets)
    tset = set(targets)
    for _ in range(4):
        if all(len(tset.intersection(cell)) <= 1 for cell in template.cells):
            break
        template = template.split()
    else:
        raise MeshError("could not isolate refinement corners")
    items = []
    for c, cell in enumerate(template.cells):
        hit = [k for k, v in enumerate(cell) if v in tset]
        if hit:
            items += _refined_elements(c, cell, hit[0], template, params.alpha, params.nu)
        else:
            items.append(_unrefined_element(c, cell, template))
    return _assemble_mesh(template, items, params, targets)


def orient_edges(mesh: Mesh) -> Mesh:
    """Canonical edge list (low -> high vertex id) and per-side parity flags."""
    index: dict[tuple[int, int], int] = {}
    el_edges = np.empty((mesh.n_elements, 4), dtype=np.int64)
    parity = np.empty((mesh.n_elements, 4), dtype=np.int64)
    for e, el in enumerate(mesh.elements):
        for k, (a, b) in enumerate(LOCAL_SIDES):
            va, vb = el.vertices[a], el.vertices[b]
            key = (min(va, vb), max(va, vb))
            if key not in index:
                index[key] = len(index)
            el_edges[e, k] = index[key]
            parity[e, k] = 1 if va < vb else -1
    edges = np.array(sorted(index, key=index.get), dtype=np.int64).reshape(-1, 2)
    return replace(mesh, edges=edges, element_edges=el_edges, parity=parity)


def build_mesh(domain: DomainSpec, params: GradingParams, targets) -> Mesh:
    return refine_geometric(minimal_mesh(domain), params, targets)


# ---------------------------------------------------------------- problems


def _cycle_order(domain: DomainSpec) -> list[int]:
    return [s.start for s in domain.outer]


@dataclass(frozen=True, eq=False)
class QuadrilateralProblem:
    """Domain with four marked outer-boundary vertices z1..z4 in positive order.

    The potential is 1 on the arc (z4, z1), 0 on (z2, z3) and has zero
    normal derivative on (z1, z2) and (z3, z4). Its Dirichlet energy is
    the modulus.
    """

    domain: DomainSpec
    marked: tuple[int, int, int, int]
    targets: tuple[int, ...] | None = None
    name: str = ""

    def __post_init__(self):
        if self.domain.is_ring:
            raise MeshError("a quadrilateral needs a simply connected domain")
        m = tuple(int(v) for v in self.marked)
        if len(m) != 4 or len(set(m)) != 4:
            raise MeshError("need four distinct marked points")
        order = _cycle_order(self.domain)
        for v in m:
            if v not in order:
                raise MeshError(f"marked point {v} is not a boundary vertex")
        pos = [order.index(v) for v in m]
        shift = [(p - pos[0]) % len(order) for p in pos]
        if shift != sorted(shift):
            raise MeshError("marked points are not in positive order")
        object.__setattr__(self, "marked", m)

    def arcs(self) -> list[list[int]]:
        """Segment ids of the arcs (z1,z2), (z2,z3), (z3,z4), (z4,z1)."""
        order = _cycle_order(self.domain)
        n = len(order)
        start = order.index(self.marked[0])
        arcs: list[list[int]] = [[], [], [], []]
        k = -1
        for i in range(n):
            s = (start + i) % n
            if self.domain.outer[s].start in self.marked:
                k += 1
            arcs[k].append(s)
        return arcs

    def boundary_values(self) -> dict[int, float]:
        arcs = self.arcs()
        vals = {s: 0.0 for s in arcs[1]}
        vals.update({s: 1.0 for s in arcs[3]})
        return vals

    def default_targets(self) -> tuple[int, ...]:
        if self.targets is not None:
            return self.targets
        return tuple(dict.fromkeys(list(self.marked) + self.domain.reentrant_corners()))


def conjugate_problem(q: QuadrilateralProblem) -> QuadrilateralProblem:
    m = q.marked
    return replace(q, marked=(m[1], m[2], m[3], m[0]))


@dataclass(frozen=True, eq=False)
class RingProblem:
    """Condenser problem: u = 1 on ``one``, u = 0 on ``zero`` (segment ids).

    With ``quad`` set the ring is solved through one of ``symmetry``
    congruent quadrilateral pieces, which also yields a reciprocal error.
    """

    domain: DomainSpec
    one: tuple[int, ...] = ()
    zero: tuple[int, ...] = ()
    symmetry: int = 1
    quad: QuadrilateralProblem | None = None
    targets: tuple[int, ...] | None = None
    name: str = ""

    @classmethod
    def plates(cls, domain: DomainSpec, **kw) -> "RingProblem":
        if not domain.is_ring:
            raise MeshError("a ring problem needs two boundary cycles")
        return cls(domain, tuple(domain.segment_ids_inner()), tuple(domain.segment_ids_outer()), **kw)

    @classmethod
    def from_quarter(cls, quad: QuadrilateralProblem, symmetry: int = 4, name: str = "") -> "RingProblem":
        return cls(quad.domain, symmetry=symmetry, quad=quad, targets=quad.targets, name=name)

    def boundary_values(self) -> dict[int, float]:
        if self.quad is not None:
            return self.quad.boundary_values()
        vals = {s: 0.0 for s in self.zero}
        vals.update({s: 1.0 for s in self.one})
        return vals

    def default_targets(self) -> tuple[int, ...]:
        if self.targets is not None:
            return self.targets
        return tuple(self.domain.reentrant_corners())


# ---------------------------------------------------------------- domain files


def _seg_list(entries, verts) -> list[Segment]:
    out = []
    for d in entries:
        i, j = int(d["from"]), int(d["to"])
        out.append(Segment(i, j, curve_from_dict(d, verts[i], verts[j])))
    return out


def load_domain(path: str | Path) -> tuple[DomainSpec, dict]:
    """Read a JSON domain file.

    Keys: ``vertices`` ([[x, y], ...]), ``outer`` and optional ``inner``
    (lists of {"from", "to", "kind", ...}), optional ``template``
    ({"cells", "points", "curves", "boundary"}), and free-form problem data
    (``marked``, ``targets``, ``symmetry``) returned alongside.
    """
    data = json.loads(Path(path).read_text())
    verts = [complex(x, y) for x, y in data["vertices"]]
    outer = _seg_list(data["outer"], verts)
    inner = _seg_list(data.get("inner", []), verts)
    template = None
    if "template" in data:
        t = data["template"]
        pts = [complex(x, y) for x, y in t.get("points", data["vertices"])]
        curves = {(i, j): curve_from_dict(d, pts[i], pts[j]) for i, j, d in t.get("curves", [])}
        boundary = {(i, j): s for i, j, s in t.get("boundary", [])}
        template = Template(pts, [tuple(c) for c in t["cells"]], curves, boundary)
    dom = DomainSpec(verts, outer, inner, template, data.get("name", Path(path).stem))
    extra = {k: v for k, v in data.items() if k not in ("vertices", "outer", "inner", "template", "name")}
    return dom, extra
