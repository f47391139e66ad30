import json
import math

import numpy as np
import pytest

from hpmodulus import presets
from hpmodulus.fem import ShapeBasis, eval_basis
from hpmodulus.geometry import Arc, Line, PolarCurve, QuadBezier, SineGraph, curve_from_dict
from hpmodulus.mesh import (
    LOCAL_SIDES,
    CellGeometry,
    DomainSpec,
    GradingParams,
    MeshError,
    QuadrilateralProblem,
    Segment,
    blending_map,
    build_mesh,
    conjugate_problem,
    load_domain,
    minimal_mesh,
    orient_edges,
    refine_geometric,
)
from hpmodulus.specfun import gauss_rule

CURVES = [
    Line(0.2 + 0.1j, 1.5 - 0.3j),
    Arc(0.1j, 1.3, 0.2, 1.9),
    SineGraph(0.0, 1.0, 0.5),
    PolarCurve(0.1, 1.4, 0.8, 0.2, 6.0),
    QuadBezier(0j, 0.5 + 0.6j, 1 + 0j),
]


def side_points(k: int, s: np.ndarray):
    one = np.ones_like(s)
    return [(s, -one), (one, s), (s, one), (-one, s)][k]


# ---------------------------------------------------------------- curves


@pytest.mark.parametrize("curve", CURVES, ids=lambda c: c.kind)
def test_curve_derivative(curve):
    t = np.linspace(-0.9, 0.9, 7)
    h = 1e-6
    fd = (curve.point(t + h) - curve.point(t - h)) / (2 * h)
    assert np.max(np.abs(fd - curve.deriv(t))) < 1e-7
    assert np.all(np.abs(curve.deriv(t)) > 0)


@pytest.mark.parametrize("curve", CURVES, ids=lambda c: c.kind)
def test_curve_sub_and_reverse(curve):
    sub = curve.sub(-0.3, 0.5)
    assert abs(sub.start - curve.point(np.array(-0.3))) < 1e-14
    assert abs(sub.end - curve.point(np.array(0.5))) < 1e-14
    rev = curve.reversed()
    t = np.linspace(-1, 1, 5)
    assert np.allclose(rev.point(t), curve.point(-t), atol=1e-14)
    assert np.allclose(rev.deriv(t), -curve.deriv(-t), atol=1e-13)


def test_curve_from_dict_round_trip():
    for c in CURVES[1:]:
        d = c.to_dict()
        back = curve_from_dict(d, c.start, c.end)
        t = np.linspace(-1, 1, 9)
        assert np.allclose(back.point(t), c.point(t), atol=1e-14)
    with pytest.raises(ValueError):
        curve_from_dict({"kind": "spline"}, 0j, 1 + 0j)


def test_arc_through_takes_short_way():
    arc = Arc.through(1 + 0j, 1j, 0j)
    assert abs(arc.theta1 - arc.theta0 - math.pi / 2) < 1e-15
    mid = complex(arc.point(np.array(0.0)))
    assert abs(mid - complex(math.sqrt(0.5), math.sqrt(0.5))) < 1e-15


# ---------------------------------------------------------------- domains


def test_domain_validation():
    sq = [0, 1, 1 + 1j, 1j]
    dom = presets.polygon_domain(sq)
    assert dom.area() == pytest.approx(1.0, abs=1e-15)
    assert [round(a / math.pi, 12) for _, a in dom.corners()] == [0.5] * 4
    with pytest.raises(MeshError):
        presets.polygon_domain(sq[::-1])
    segs = [Segment(k, (k + 1) % 4, Line(sq[k], sq[(k + 1) % 4])) for k in range(4)]
    with pytest.raises(MeshError):
        DomainSpec(sq, segs[:3])
    with pytest.raises(MeshError):
        DomainSpec([0, 1, 1 + 1j, 2j], segs)


def test_reentrant_corner_detected():
    q = presets.l_shape()
    assert q.domain.reentrant_corners() == [3]
    assert q.domain.area() == pytest.approx(5.0, abs=1e-14)


def test_problem_validation():
    dom = presets.polygon_domain([0, 1, 1 + 1j, 1j])
    with pytest.raises(MeshError):
        QuadrilateralProblem(dom, (0, 1, 1, 2))
    with pytest.raises(MeshError):
        QuadrilateralProblem(dom, (0, 2, 1, 3))
    with pytest.raises(MeshError):
        QuadrilateralProblem(dom, (0, 1, 2, 7))


def test_conjugate_rotation():
    q = presets.rectangle(2.0)
    c = q
    for _ in range(4):
        c = conjugate_problem(c)
    assert c.marked == q.marked
    twice = conjugate_problem(conjugate_problem(q))
    assert twice.boundary_values() == {s: 1 - v for s, v in q.boundary_values().items()}


def test_load_domain(tmp_path):
    data = {
        "name": "quarter-disk",
        "vertices": [[0, 0], [1, 0], [0, 1]],
        "outer": [
            {"from": 0, "to": 1, "kind": "line"},
            {"from": 1, "to": 2, "kind": "arc", "center": [0, 0]},
            {"from": 2, "to": 0, "kind": "line"},
        ],
        "marked": [0, 1, 2, 0],
    }
    path = tmp_path / "d.json"
    path.write_text(json.dumps(data))
    dom, extra = load_domain(path)
    assert dom.name == "quarter-disk"
    assert dom.area() == pytest.approx(math.pi / 4, rel=1e-14)
    assert extra == {"marked": [0, 1, 2, 0]}


# ---------------------------------------------------------------- meshes


def test_minimal_mesh_square():
    mesh = minimal_mesh(presets.rectangle(1.0).domain)
    assert mesh.n_elements == 1
    v = mesh.elements[0].vertices
    assert mesh.parity.tolist() == [[1 if v[a] < v[b] else -1 for a, b in LOCAL_SIDES]]


def test_l_shape_grid_has_five_unit_cells():
    q = presets.l_shape()
    t = presets.grid_template(q.domain, [0, 1, 2, 3], [0, 1, 2], lambda x0, x1, y0, y1: not (x0 >= 2 and y0 >= 1))
    assert len(t.cells) == 5
    t.validate()


def test_refine_identity_and_three_quads():
    mesh = minimal_mesh(presets.rectangle(1.0).domain)
    same = refine_geometric(mesh, GradingParams(0.15, 0, 4), [0])
    assert same.n_elements == 1
    assert np.allclose(same.vertices, mesh.vertices)
    three = refine_geometric(mesh, GradingParams(0.5, 1, 4), [0])
    assert three.n_elements == 3
    with pytest.raises(MeshError):
        refine_geometric(three, GradingParams(0.5, 1, 4), [0])
    with pytest.raises(MeshError):
        refine_geometric(mesh, GradingParams(0.5, 1, 4), [9])


@pytest.mark.parametrize("alpha, nu", [(0.15, 6), (0.5, 4), (0.3, 10)])
def test_geometric_grading_distances(alpha, nu):
    mesh = refine_geometric(minimal_mesh(presets.rectangle(1.0).domain), GradingParams(alpha, nu, 2), [0])
    d = np.sort(np.abs(mesh.vertices))
    d = d[d > 0]
    # vertices on the two edges through the corner sit at alpha^k
    on_axes = np.sort(np.unique(np.round(
        [abs(z) for z in mesh.vertices if abs(z.imag) < 1e-15 and z.real > 0], 15)))
    expected = alpha ** np.arange(nu, 0, -1)
    assert np.allclose(on_axes[:nu], expected, rtol=0, atol=1e-12)
    assert d[0] == pytest.approx(alpha ** nu, abs=1e-15)
    assert mesh.n_elements == 1 + 2 * nu


def _conformity(mesh):
    count = {}
    for e, el in enumerate(mesh.elements):
        for k, (a, b) in enumerate(LOCAL_SIDES):
            key = tuple(sorted((el.vertices[a], el.vertices[b])))
            count.setdefault(key, []).append((e, k, el.boundary[k]))
    return count


MESH_CASES = {
    "l-shape": lambda: (presets.l_shape(), GradingParams(0.15, 8, 6)),
    "wave": lambda: (presets.wave(), GradingParams(0.15, 6, 6)),
    "q-a": lambda: (presets.circular_quad(4, 12, 18, "A"), GradingParams(0.15, 6, 6)),
    "q-b": lambda: (presets.circular_quad(2, 24, 36, "B"), GradingParams(0.15, 6, 6)),
    "cross": lambda: (presets.cross_in_square(0.5, 1.0, 1.5).quad, GradingParams(0.15, 6, 6)),
    "convex": lambda: (presets.polygon_quad(1 + 0.7j, -0.2 + 1.2j), GradingParams(0.15, 6, 6)),
}


@pytest.fixture(scope="module", params=sorted(MESH_CASES))
def refined(request):
    q, par = MESH_CASES[request.param]()
    return q, par, build_mesh(q.domain, par, q.default_targets())


def test_conformity(refined):
    _, _, mesh = refined
    for key, owners in _conformity(mesh).items():
        bnd = [s for _, _, s in owners]
        if len(owners) == 1:
            assert bnd[0] is not None, f"open edge {key}"
        else:
            assert len(owners) == 2 and bnd == [None, None], f"edge {key} has {len(owners)} owners"


def test_area(refined):
    q, _, mesh = refined
    assert mesh.area() == pytest.approx(q.domain.area(), rel=1e-9)


def test_positive_jacobian(refined):
    _, par, mesh = refined
    rule = gauss_rule(par.p + 4)
    xi, eta = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
    _, jac = mesh.map_many(range(mesh.n_elements), xi.ravel(), eta.ravel())
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    assert np.all(det > 0)


def test_parity_trace_consistency(refined):
    """Shared edges: both sides map to the same points and give the same traces."""
    _, _, mesh = refined
    basis = ShapeBasis(5)
    t = np.linspace(-0.9, 0.9, 5)
    checked = 0
    for key, owners in _conformity(mesh).items():
        if len(owners) != 2:
            continue
        traces = []
        for e, k, _ in owners:
            # canonical parameter runs from the lower to the higher vertex id
            s = t * mesh.parity[e, k]
            xi, eta = side_points(k, s)
            pts, _ = mesh.map(e, xi, eta)
            vals = [eval_basis(basis, basis.side_index(k, i), xi, eta, mesh.parity[e])[0] for i in (2, 3, 4)]
            traces.append((pts, np.array(vals)))
        (p1, v1), (p2, v2) = traces
        scale = 1 + np.max(np.abs(p1))
        assert np.max(np.abs(p1 - p2)) < 1e-12 * scale
        assert np.max(np.abs(v1 - v2)) < 1e-13
        checked += 1
    assert checked > 0


def test_orient_edges_two_elements():
    t = presets.grid_template(presets.polygon_domain([0, 2, 2 + 1j, 1j]), [0, 1, 2], [0, 1], lambda *a: True)
    dom = presets.polygon_domain([0, 2, 2 + 1j, 1j])
    dom.template = t
    mesh = orient_edges(minimal_mesh(dom))
    assert mesh.n_elements == 2
    assert len(mesh.edges) == 7
    shared = [o for o in _conformity(mesh).values() if len(o) == 2]
    assert len(shared) == 1
    # side 1 of the left cell meets side 3 of the right one, both run upwards
    (e0, k0, _), (e1, k1, _) = shared[0]
    assert {k0, k1} == {1, 3}
    assert mesh.parity[e0, k0] == mesh.parity[e1, k1]


def test_mesh_to_dict_is_json():
    q = presets.l_shape()
    mesh = build_mesh(q.domain, GradingParams(0.15, 2, 2), q.default_targets())
    d = json.loads(json.dumps(mesh.to_dict()))
    assert len(d["elements"]) == mesh.n_elements
    assert max(d["layers"]) >= 1


# ---------------------------------------------------------------- blending


def test_blending_straight_is_bilinear():
    V = (0j, 2 + 0.1j, 1.8 + 1.5j, -0.2 + 1j)
    cell = CellGeometry(V, tuple(Line(V[k], V[(k + 1) % 4]) for k in range(4)))
    xi, eta = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(-1, 1, 5))
    x, jac = blending_map(cell, xi, eta)
    bil = 0.25 * ((1 - xi) * (1 - eta) * V[0] + (1 + xi) * (1 - eta) * V[1]
                  + (1 + xi) * (1 + eta) * V[2] + (1 - xi) * (1 + eta) * V[3])
    assert np.max(np.abs(x - bil)) < 1e-14
    assert jac.shape == xi.shape + (2, 2)


def test_blending_curved_interpolates_sides():
    arc = Arc(0j, 1.0, 0.0, math.pi / 2)
    V = (1 + 0j, 1j, 0.5j, 0.5 + 0j)
    # counterclockwise: arc from 1 to i, then straight back in
    cell = CellGeometry((V[3], V[0], V[1], V[2]),
                        (Line(V[3], V[0]), arc, Line(V[1], V[2]), Line(V[2], V[3])))
    x, _ = blending_map(cell, np.array([-1.0, 1.0, 1.0, -1.0]), np.array([-1.0, -1.0, 1.0, 1.0]))
    assert np.allclose(x, [V[3], V[0], V[1], V[2]], atol=1e-15)
    s = np.linspace(-1, 1, 20)
    x, _ = blending_map(cell, np.ones(20), s)
    assert np.max(np.abs(np.abs(x) - 1)) < 1e-12
    # Jacobian against finite differences
    h = 1e-6
    x0, jac = blending_map(cell, np.array([0.3]), np.array([-0.2]))
    xp, _ = blending_map(cell, np.array([0.3 + h]), np.array([-0.2]))
    xm, _ = blending_map(cell, np.array([0.3 - h]), np.array([-0.2]))
    d = (xp - xm) / (2 * h)
    assert abs(d[0].real - jac[0, 0, 0]) < 1e-8 and abs(d[0].imag - jac[0, 1, 0]) < 1e-8
