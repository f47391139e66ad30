import cmath
import math

import numpy as np
import pytest

from hpmodulus import presets
from hpmodulus.analytic import ConvexQuadSpec, hvv_quad_modulus, square_in_square_capacity
from hpmodulus.fem import (
    DegenerateGeometryError,
    ShapeBasis,
    apply_bc,
    assemble,
    dirichlet_energy,
    elemental_stiffness,
    eval_basis,
    quad_modulus,
    ring_capacity,
    sample_field,
    solve,
)
from hpmodulus.fem import _quadrature_energy
from hpmodulus.mesh import GradingParams, QuadrilateralProblem, build_mesh, conjugate_problem, minimal_mesh
from hpmodulus.mesh import Template

CORNERS = [(-1, -1), (1, -1), (1, 1), (-1, 1)]


def side_points(k, s):
    one = np.ones_like(s)
    return [(s, -one), (one, s), (s, one), (-one, s)][k]


# ---------------------------------------------------------------- basis


def test_basis_counts():
    for p in range(1, 9):
        b = ShapeBasis(p)
        assert b.n_local == 4 + 4 * (p - 1) + (p - 1) ** 2
    with pytest.raises(ValueError):
        ShapeBasis(0)
    with pytest.raises(IndexError):
        eval_basis(ShapeBasis(2), 9, 0.0, 0.0)


def test_nodal_lagrange_property():
    b = ShapeBasis(4)
    xi = np.array([c[0] for c in CORNERS], float)
    eta = np.array([c[1] for c in CORNERS], float)
    for k in range(4):
        v, _, _ = eval_basis(b, k, xi, eta)
        assert np.allclose(v, np.eye(4)[k], atol=1e-15)


def test_side_and_internal_modes_vanish():
    p = 6
    b = ShapeBasis(p)
    s = np.linspace(-1, 1, 11)
    for k in range(4):
        for i in range(2, p + 1):
            idx = b.side_index(k, i)
            for other in range(4):
                if other == k:
                    continue
                v, _, _ = eval_basis(b, idx, *side_points(other, s))
                assert np.max(np.abs(v)) < 1e-15
    for i in range(2, p + 1):
        for j in range(2, p + 1):
            idx = b.internal_index(i, j)
            for k in range(4):
                v, _, _ = eval_basis(b, idx, *side_points(k, s))
                assert np.max(np.abs(v)) < 1e-15


def test_parity_flips_odd_side_modes_only():
    b = ShapeBasis(5)
    x, y = np.array([0.3]), np.array([-0.6])
    for i in range(2, 6):
        idx = b.side_index(2, i)
        v_plus, _, _ = eval_basis(b, idx, x, y, (1, 1, 1, 1))
        v_minus, _, _ = eval_basis(b, idx, x, y, (1, 1, -1, 1))
        assert v_minus[0] == pytest.approx((-1) ** i * v_plus[0], abs=1e-16)


def test_basis_gradient_matches_finite_difference():
    b = ShapeBasis(5)
    x, y, h = np.array([0.21]), np.array([-0.37]), 1e-6
    for idx in range(b.n_local):
        _, dx, dy = eval_basis(b, idx, x, y)
        fx = (eval_basis(b, idx, x + h, y)[0] - eval_basis(b, idx, x - h, y)[0]) / (2 * h)
        fy = (eval_basis(b, idx, x, y + h)[0] - eval_basis(b, idx, x, y - h)[0]) / (2 * h)
        assert abs(dx[0] - fx[0]) < 1e-8 and abs(dy[0] - fy[0]) < 1e-8


# ---------------------------------------------------------------- stiffness


def _oriented(q, par=GradingParams(0.15, 0, 1)):
    return build_mesh(q.domain, par, q.default_targets())


def test_unit_square_p1_stiffness():
    mesh = _oriented(presets.rectangle(1.0))
    K = elemental_stiffness(mesh, 0, ShapeBasis(1))
    expected = np.array([
        [4, -1, -2, -1],
        [-1, 4, -1, -2],
        [-2, -1, 4, -1],
        [-1, -2, -1, 4],
    ]) / 6
    assert np.allclose(K, expected, atol=1e-15)


def test_stiffness_constant_kernel_and_scaling():
    b = ShapeBasis(6)
    ones = np.zeros(b.n_local)
    ones[:4] = 1
    q = presets.circular_quad(4, 12, 18, "A")
    mesh = build_mesh(q.domain, GradingParams(0.15, 2, 6), q.default_targets())
    for e in range(0, mesh.n_elements, 7):
        K = elemental_stiffness(mesh, e, b)
        assert np.max(np.abs(K @ ones)) < 1e-12 * np.max(np.abs(K))
        assert np.allclose(K, K.T, atol=1e-14 * np.max(np.abs(K)))
    unit = elemental_stiffness(_oriented(presets.rectangle(1.0)), 0, b)
    big = presets.polygon_domain([0, 3.5, 3.5 + 3.5j, 3.5j])
    scaled = build_mesh(big, GradingParams(0.15, 0, 1), [])
    assert np.allclose(elemental_stiffness(scaled, 0, b), unit, atol=1e-14)


def test_degenerate_element_rejected():
    # a dart: reflex angle at vertex 2, so the bilinear map folds near it
    pts = [0, 1, 0.3 + 0.3j, 1j]
    dom = presets.polygon_domain(pts)
    dom.template = Template(pts, [(0, 1, 2, 3)], {}, {(k, (k + 1) % 4): k for k in range(4)})
    mesh = build_mesh(dom, GradingParams(0.15, 0, 2), [])
    with pytest.raises(DegenerateGeometryError):
        assemble(mesh, ShapeBasis(2))


# ---------------------------------------------------------------- assembly


def test_dof_counts():
    single = _oriented(presets.rectangle(1.0))
    assert assemble(single, ShapeBasis(3)).dofs == 16
    dom = presets.polygon_domain([0, 2, 2 + 1j, 1j])
    dom.template = presets.grid_template(dom, [0, 1, 2], [0, 1], lambda *a: True)
    two = build_mesh(dom, GradingParams(0.15, 0, 2), [])
    assert assemble(two, ShapeBasis(2)).dofs == 15


def test_assembled_symmetry_and_null_space():
    q = presets.l_shape()
    mesh = build_mesh(q.domain, GradingParams(0.15, 6, 5), q.default_targets())
    sysm = assemble(mesh, ShapeBasis(5))
    A = sysm.stiffness
    asym = abs(A - A.T).max()
    assert asym <= 1e-13 * abs(A).max()
    const = np.zeros(sysm.n_skeleton)
    const[: sysm.n_vertex] = 1.0
    r = A @ const
    rows = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    assert np.all(np.abs(r) <= 1e-10 * rows)


def test_apply_bc_counts_and_zero_problem():
    q = presets.rectangle(1.0)
    sysm = assemble(_oriented(q), ShapeBasis(4))
    cs = apply_bc(sysm, q.boundary_values())
    # two opposite sides: 4 vertices plus 2 x 3 edge modes
    assert cs.fixed.size == 10
    assert cs.free.size == sysm.n_skeleton - 10
    zero = apply_bc(sysm, {s: 0.0 for s in range(4)})
    assert dirichlet_energy(solve(zero)) == 0.0


def test_ring_constrains_both_cycles():
    ring = presets.rectangle_in_rectangle(2, 1, 4, 2)
    mesh = build_mesh(ring.domain, GradingParams(0.15, 0, 3), [])
    sysm = assemble(mesh, ShapeBasis(3))
    cs = apply_bc(sysm, ring.boundary_values())
    bnd_vertices = {v for e, k, _ in mesh.boundary_edges() for v in mesh.local_side_vertices(e, k)}
    assert bnd_vertices <= set(cs.fixed.tolist())
    assert set(ring.boundary_values()) == set(range(len(ring.domain.segments)))


# ---------------------------------------------------------------- solve and energy


@pytest.mark.parametrize("h, p", [(1.0, 1), (2.0, 1), (2.0, 4), (0.5, 7)])
def test_rectangle_potential_is_linear(h, p):
    q = presets.rectangle(h)
    sysm = assemble(_oriented(q), ShapeBasis(p))
    sol = solve(apply_bc(sysm, q.boundary_values()))
    assert sol.residual < 1e-12
    xi, eta = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(-1, 1, 5))
    pts, _ = sysm.mesh.map(0, xi, eta)
    u = sol.evaluate(0, xi.ravel(), eta.ravel())
    assert np.allclose(u, pts.ravel().real, atol=1e-13)
    assert dirichlet_energy(sol) == pytest.approx(h, abs=1e-12)


def test_energy_two_ways_curved():
    q = presets.circular_quad(4, 12, 18, "A")
    mesh = build_mesh(q.domain, GradingParams(0.15, 8, 8), q.default_targets())
    sol = solve(apply_bc(assemble(mesh, ShapeBasis(8)), q.boundary_values()))
    e1 = dirichlet_energy(sol, check=False)
    e2 = _quadrature_energy(sol)
    assert abs(e1 - e2) <= 1e-11 * e1


def test_galerkin_monotone_in_p():
    q = presets.l_shape()
    mesh = build_mesh(q.domain, GradingParams(0.15, 8, 1), q.default_targets())
    energies = []
    for p in range(1, 9):
        sol = solve(apply_bc(assemble(mesh, ShapeBasis(p)), q.boundary_values()))
        energies.append(dirichlet_energy(sol))
    assert all(b <= a + 1e-13 for a, b in zip(energies, energies[1:]))


def test_discrete_maximum_principle_roughly():
    q = presets.l_shape()
    res, sol = quad_modulus(q, GradingParams(0.15, 8, 8), reciprocal=False, return_field=True)
    rows = sample_field(sol, 25, 17)
    assert rows.shape[1] == 3
    assert np.all(rows[:, 2] > -1e-6) and np.all(rows[:, 2] < 1 + 1e-6)
    # grid points inside the L only
    x, y = rows[:, 0], rows[:, 1]
    assert not np.any((x > 2 + 1e-9) & (y > 1 + 1e-9))
    assert len(rows) > 0.5 * 25 * 17


# ---------------------------------------------------------------- pipelines


def test_unit_square_modulus():
    r = quad_modulus(presets.rectangle(1.0), GradingParams(0.15, 3, 3))
    assert r.value == pytest.approx(1.0, abs=1e-12)
    assert r.reciprocal_error <= 1e-12


def test_rectangle_conjugate():
    q = presets.rectangle(2.0)
    r = quad_modulus(q, GradingParams(0.15, 0, 2))
    c = quad_modulus(conjugate_problem(q), GradingParams(0.15, 0, 2))
    assert r.value == pytest.approx(2.0, abs=1e-13)
    assert c.value == pytest.approx(0.5, abs=1e-13)
    assert r.conjugate_value == pytest.approx(c.value, abs=1e-15)


def test_convex_quadrilateral_against_formula():
    A, B = 1 + 0.7j, -0.2 + 1.2j
    r = quad_modulus(presets.polygon_quad(A, B), GradingParams(0.15, 18, 18))
    ref = hvv_quad_modulus(ConvexQuadSpec.from_vertices(A, B))
    assert abs(r.value - ref) < 5e-12
    assert r.reciprocal_error <= 3.9e-12


def test_square_in_square_exact():
    r = ring_capacity(presets.square_in_square(0.5), GradingParams(0.15, 16, 16))
    assert abs(r.value - square_in_square_capacity(0.5)) <= 1e-12
    assert r.ring_modulus == pytest.approx(2 * math.pi / r.value)
    assert r.symmetry == 4


def test_cross_in_square_row():
    r = ring_capacity(presets.cross_in_square(0.5, 1.0, 1.5), GradingParams(0.15, 16, 16))
    assert abs(r.value - 14.00279904484109) <= 1e-11


def test_rectangle_in_rectangle_rows():
    par = GradingParams(0.15, 16, 16)
    a = ring_capacity(presets.rectangle_in_rectangle(1, 1, 2, 2), par)
    b = ring_capacity(presets.rectangle_in_rectangle(5, 1, 6, 2), par)
    assert abs(a.value - 5.210320385649294) <= 1e-10
    assert abs(a.value - b.value) <= 1e-13
    assert math.isnan(a.reciprocal_error)


def test_wave_point_value():
    r = quad_modulus(presets.wave(), GradingParams(0.15, 12, 20))
    assert abs(r.value - 1.285385932609546) <= 1e-10
    assert r.reciprocal_error < 1e-11


def test_reciprocal_error_tracks_true_error():
    # type A reference is exact; the estimate stays within an order of magnitude
    from hpmodulus.analytic import CircularQuadSpec, circular_quad_type_a

    ref = circular_quad_type_a(CircularQuadSpec.from_nodes(4, 12, 18))
    for p in (4, 6, 8):
        r = quad_modulus(presets.circular_quad(4, 12, 18, "A"), GradingParams(0.15, 12, p))
        true = abs(r.value - ref) / ref
        assert 0.1 * true <= r.reciprocal_error <= 10 * max(true, 1e-15) or true < 1e-13


def test_determinism_bitwise():
    q = presets.circular_quad(2, 24, 36, "B")
    par = GradingParams(0.15, 6, 6)
    a = quad_modulus(q, par)
    b = quad_modulus(q, par)
    assert a.value == b.value and a.conjugate_value == b.conjugate_value
