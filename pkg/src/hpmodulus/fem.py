"""Hierarchic hp-FEM for mixed Dirichlet-Neumann Laplace problems.

Local shape ordering: 4 nodal, then sides 1..4 with modes 2..p each, then
the (p-1)^2 internal modes (i, j), i outer. Internal modes are condensed
out element by element, so the global sparse system only couples vertex
and edge unknowns.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import (
    GradingParams,
    Mesh,
    MeshError,
    QuadrilateralProblem,
    RingProblem,
    build_mesh,
    conjugate_problem,
)
from .specfun import gauss_rule, integrated_legendre_table

__all__ = [
    "DegenerateGeometryError",
    "SolveError",
    "ShapeBasis",
    "HpSystem",
    "ConstrainedSystem",
    "SolutionField",
    "ModulusResult",
    "eval_basis",
    "elemental_stiffness",
    "assemble",
    "apply_bc",
    "solve",
    "dirichlet_energy",
    "quad_modulus",
    "ring_capacity",
    "sample_field",
]

log = logging.getLogger(__name__)


class DegenerateGeometryError(MeshError):
    pass


class SolveError(RuntimeError):
    pass


# ---------------------------------------------------------------- basis


@dataclass(frozen=True)
class ShapeBasis:
    p: int

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be an integer >= 1")

    @property
    def n_side(self) -> int:
        return self.p - 1

    @property
    def n_boundary(self) -> int:
        return 4 * self.p

    @property
    def n_internal(self) -> int:
        return (self.p - 1) ** 2

    @property
    def n_local(self) -> int:
        return (self.p + 1) ** 2

    def side_index(self, k: int, i: int) -> int:
        return 4 + k * (self.p - 1) + (i - 2)

    def internal_index(self, i: int, j: int) -> int:
        return 4 * self.p + (i - 2) * (self.p - 1) + (j - 2)

    def sign_vector(self, parity) -> np.ndarray:
        """Per-shape signs for local side parities (odd side modes flip)."""
        s = np.ones(self.n_local)
        for k in range(4):
            if parity[k] < 0:
                for i in range(3, self.p + 1, 2):
                    s[self.side_index(k, i)] = -1.0
        return s

    def tables(self, xi, eta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values, d/dxi, d/deta of all local shapes at points (xi, eta)."""
        xi = np.asarray(xi, dtype=float).ravel()
        eta = np.asarray(eta, dtype=float).ravel()
        p = self.p
        lx = np.array([(1 - xi) / 2, (1 + xi) / 2])
        ly = np.array([(1 - eta) / 2, (1 + eta) / 2])
        dl = np.array([-0.5, 0.5])[:, None]
        px, dpx = integrated_legendre_table(p, xi)
        py, dpy = integrated_legendre_table(p, eta)
        n = xi.size
        V = np.empty((self.n_local, n))
        Dx = np.empty_like(V)
        Dy = np.empty_like(V)
        # nodal: (xi end, eta end) per corner
        for k, (a, b) in enumerate(((0, 0), (1, 0), (1, 1), (0, 1))):
            V[k] = lx[a] * ly[b]
            Dx[k] = dl[a] * ly[b]
            Dy[k] = lx[a] * dl[b]
        m = p - 1
        if m:
            s = slice(4, 4 + m)
            V[s], Dx[s], Dy[s] = ly[0] * px, ly[0] * dpx, dl[0] * px
            s = slice(4 + m, 4 + 2 * m)
            V[s], Dx[s], Dy[s] = lx[1] * py, dl[1] * py, lx[1] * dpy
            s = slice(4 + 2 * m, 4 + 3 * m)
            V[s], Dx[s], Dy[s] = ly[1] * px, ly[1] * dpx, dl[1] * px
            s = slice(4 + 3 * m, 4 + 4 * m)
            V[s], Dx[s], Dy[s] = lx[0] * py, dl[0] * py, lx[0] * dpy
            o = 4 * p
            V[o:] = (px[:, None, :] * py[None, :, :]).reshape(m * m, n)
            Dx[o:] = (dpx[:, None, :] * py[None, :, :]).reshape(m * m, n)
            Dy[o:] = (px[:, None, :] * dpy[None, :, :]).reshape(m * m, n)
        return V, Dx, Dy


def eval_basis(basis: ShapeBasis, index: int, xi, eta, parity=(1, 1, 1, 1)):
    """Value and reference gradient of one local shape, parity applied."""
    if not 0 <= index < basis.n_local:
        raise IndexError(f"shape index {index} out of range for p={basis.p}")
    V, Dx, Dy = basis.tables(xi, eta)
    s = basis.sign_vector(parity)[index]
    shape = np.shape(xi)
    return (s * V[index]).reshape(shape), (s * Dx[index]).reshape(shape), (s * Dy[index]).reshape(shape)


@lru_cache(maxsize=32)
def _quad_tables(p: int, nq: int):
    rule = gauss_rule(nq)
    xi, eta = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
    xi, eta = xi.ravel(), eta.ravel()
    w = np.outer(rule.weights, rule.weights).ravel()
    V, Dx, Dy = ShapeBasis(p).tables(xi, eta)
    for a in (xi, eta, w, V, Dx, Dy):
        a.setflags(write=False)
    return xi, eta, w, V, Dx, Dy


def _metric(jac: np.ndarray, w: np.ndarray, tol: float = 1e-10):
    """Weighted metric terms det J * J^-1 J^-T at quadrature points."""
    a, b = jac[..., 0, 0], jac[..., 0, 1]
    c, d = jac[..., 1, 0], jac[..., 1, 1]
    det = a * d - b * c
    area = det @ w
    if np.any(det.min(axis=-1) * 4 < tol * area):
        bad = int(np.argmin(det.min(axis=-1) * 4 / area))
        raise DegenerateGeometryError(f"non-positive or degenerate Jacobian (chunk element {bad})")
    g11 = (b * b + d * d) / det * w
    g12 = -(a * b + c * d) / det * w
    g22 = (a * a + c * c) / det * w
    return g11, g12, g22, det


def _stiffness_from_metric(Dx, Dy, g11, g12, g22) -> np.ndarray:
    Y = Dx * g11[:, None, :] + Dy * g12[:, None, :]
    Z = Dx * g12[:, None, :] + Dy * g22[:, None, :]
    K = Y @ Dx.T + Z @ Dy.T
    return 0.5 * (K + np.swapaxes(K, -1, -2))


def quadrature_points(p: int, curved: bool, extra: int = 0) -> int:
    return p + (4 if curved else 2) + extra


def elemental_stiffness(mesh: Mesh, e: int, basis: ShapeBasis, nq: int | None = None) -> np.ndarray:
    """Local stiffness of element ``e`` in the unsigned local basis."""
    if nq is None:
        nq = quadrature_points(basis.p, mesh.element_curved(e))
    xi, eta, w, _, Dx, Dy = _quad_tables(basis.p, nq)
    _, jac = mesh.map_many([e], xi, eta)
    g11, g12, g22, _ = _metric(jac, w)
    return _stiffness_from_metric(Dx, Dy, g11, g12, g22)[0]


# ---------------------------------------------------------------- assembly


@dataclass(eq=False)
class HpSystem:
    mesh: Mesh
    basis: ShapeBasis
    stiffness: sp.csr_matrix  # condensed, over vertex + edge unknowns
    dof_map: np.ndarray  # (n_elements, 4p) global skeleton index per boundary shape
    signs: np.ndarray  # (n_elements, n_local)
    n_vertex: int
    n_edge_dofs: int
    condense: dict = field(repr=False, default_factory=dict)  # e -> K_II^-1 K_IB
    metrics: dict = field(repr=False, default_factory=dict)  # e -> (nq, g11, g12, g22)
    nq: np.ndarray | None = None

    @property
    def n_skeleton(self) -> int:
        return self.n_vertex + self.n_edge_dofs

    @property
    def dofs(self) -> int:
        return self.n_skeleton + self.mesh.n_elements * self.basis.n_internal


def _dof_map(mesh: Mesh, basis: ShapeBasis) -> np.ndarray:
    p = basis.p
    nv = len(mesh.vertices)
    out = np.empty((mesh.n_elements, 4 * p), dtype=np.int64)
    modes = np.arange(p - 1)
    for e, el in enumerate(mesh.elements):
        out[e, :4] = el.vertices
        for k in range(4):
            out[e, 4 + k * (p - 1): 4 + (k + 1) * (p - 1)] = nv + mesh.element_edges[e, k] * (p - 1) + modes
    return out


def assemble(mesh: Mesh, basis: ShapeBasis, quad_extra: int = 0, chunk_bytes: float = 4e7) -> HpSystem:
    """Condensed global stiffness on vertex and edge unknowns."""
    if mesh.parity is None:
        raise MeshError("mesh edges are not oriented")
    p = basis.p
    nB = basis.n_boundary
    dof_map = _dof_map(mesh, basis)
    signs = np.stack([basis.sign_vector(par) for par in mesh.parity])
    curved = np.array([mesh.element_curved(e) for e in range(mesh.n_elements)])
    nq_el = np.array([quadrature_points(p, c, quad_extra) for c in curved])
    system = HpSystem(
        mesh, basis, None, dof_map, signs, len(mesh.vertices), len(mesh.edges) * (p - 1), nq=nq_el
    )
    rows, cols, vals = [], [], []
    for nq in sorted(set(nq_el.tolist())):
        elems = np.flatnonzero(nq_el == nq)
        xi, eta, w, _, Dx, Dy = _quad_tables(p, nq)
        per = basis.n_local * nq * nq * 8 * 3
        step = max(1, int(chunk_bytes // per))
        for start in range(0, len(elems), step):
            chunk = elems[start: start + step]
            _, jac = mesh.map_many(chunk, xi, eta)
            g11, g12, g22, _ = _metric(jac, w)
            K = _stiffness_from_metric(Dx, Dy, g11, g12, g22)
            s = signs[chunk]
            K *= s[:, :, None] * s[:, None, :]
            if basis.n_internal:
                KBB, KBI = K[:, :nB, :nB], K[:, :nB, nB:]
                KII, KIB = K[:, nB:, nB:], K[:, nB:, :nB]
                X = np.linalg.solve(KII, KIB)
                S = KBB - KBI @ X
            else:
                X = None
                S = K
            S = 0.5 * (S + np.swapaxes(S, 1, 2))
            for i, e in enumerate(chunk):
                if X is not None:
                    system.condense[int(e)] = X[i]
                system.metrics[int(e)] = (nq, g11[i], g12[i], g22[i])
            g = dof_map[chunk]
            rows.append(np.repeat(g, nB, axis=1).ravel())
            cols.append(np.tile(g, (1, nB)).ravel())
            vals.append(S.ravel())
    n = system.n_skeleton
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    system.stiffness = A.tocsr()
    system.stiffness.sum_duplicates()
    return system


# ---------------------------------------------------------------- constraints and solve


@dataclass(eq=False)
class ConstrainedSystem:
    system: HpSystem
    fixed: np.ndarray  # indices of constrained skeleton unknowns
    values: np.ndarray  # their values
    free: np.ndarray


def apply_bc(system: HpSystem, boundary_values: dict[int, float]) -> ConstrainedSystem:
    """Fix vertex and edge unknowns on Dirichlet segments.

    ``boundary_values`` maps domain segment ids to constant potentials;
    other boundary segments are natural (zero flux).
    """
    mesh = system.mesh
    p = system.basis.p
    fixed: dict[int, float] = {}

    def put(i: int, v: float):
        if i in fixed and fixed[i] != v:
            raise MeshError("conflicting Dirichlet values at a shared vertex")
        fixed[i] = v

    for e, k, seg in mesh.boundary_edges():
        if seg not in boundary_values:
            continue
        v = float(boundary_values[seg])
        a, b = mesh.local_side_vertices(e, k)
        put(a, v)
        put(b, v)
        base = system.n_vertex + mesh.element_edges[e, k] * (p - 1)
        for m in range(p - 1):
            put(base + m, 0.0)
    idx = np.array(sorted(fixed), dtype=np.int64)
    vals = np.array([fixed[i] for i in idx.tolist()])
    mask = np.ones(system.n_skeleton, bool)
    mask[idx] = False
    return ConstrainedSystem(system, idx, vals, np.flatnonzero(mask))


@dataclass(eq=False)
class SolutionField:
    system: HpSystem
    coefficients: np.ndarray  # skeleton values, constrained entries included
    residual: float = 0.0

    @property
    def mesh(self) -> Mesh:
        return self.system.mesh

    @property
    def basis(self) -> ShapeBasis:
        return self.system.basis

    def local_coefficients(self, e: int) -> np.ndarray:
        """Coefficients of the unsigned local shapes of element ``e``."""
        sysm = self.system
        uB = self.coefficients[sysm.dof_map[e]]
        if sysm.basis.n_internal:
            uI = -sysm.condense[e] @ uB
            c = np.concatenate([uB, uI])
        else:
            c = uB.copy()
        return c * sysm.signs[e]

    def evaluate(self, e: int, xi, eta) -> np.ndarray:
        V, _, _ = self.basis.tables(xi, eta)
        return self.local_coefficients(e) @ V


def solve(cs: ConstrainedSystem) -> SolutionField:
    """Direct sparse solve of the reduced system with one refinement step."""
    A = cs.system.stiffness
    u = np.zeros(cs.system.n_skeleton)
    u[cs.fixed] = cs.values
    if cs.free.size:
        Aff = A[cs.free][:, cs.free].tocsc()
        rhs = -(A[cs.free][:, cs.fixed] @ cs.values)
        try:
            lu = splu(Aff)
        except RuntimeError as exc:
            raise SolveError(f"factorization failed: {exc}") from exc
        x = lu.solve(rhs)
        x += lu.solve(rhs - Aff @ x)
        if not np.all(np.isfinite(x)):
            raise SolveError("non-finite solution")
        nb = np.linalg.norm(rhs)
        res = float(np.linalg.norm(rhs - Aff @ x) / nb) if nb > 0 else 0.0
        if res > 1e-12:
            log.warning("relative residual %.2e exceeds 1e-12", res)
        u[cs.free] = x
    else:
        res = 0.0
    return SolutionField(cs.system, u, res)


def _quadrature_energy(sol: SolutionField) -> float:
    sysm = sol.system
    total = 0.0
    for e in range(sysm.mesh.n_elements):
        nq, g11, g12, g22 = sysm.metrics[e]
        _, _, _, _, Dx, Dy = _quad_tables(sysm.basis.p, nq)
        c = sol.local_coefficients(e)
        ux, uy = c @ Dx, c @ Dy
        total += float(np.sum(g11 * ux * ux + 2 * g12 * ux * uy + g22 * uy * uy))
    return total


def dirichlet_energy(sol: SolutionField, check: bool = True) -> float:
    """Energy as a quadratic form; optionally cross-checked by quadrature."""
    u = sol.coefficients
    q = float(u @ (sol.system.stiffness @ u))
    if check:
        d = _quadrature_energy(sol)
        if abs(d - q) > 1e-11 * max(abs(q), 1e-300):
            log.warning("energy mismatch: quadratic form %.17g vs quadrature %.17g", q, d)
    return q


# ---------------------------------------------------------------- pipelines


@dataclass
class ModulusResult:
    value: float
    reciprocal_error: float
    dofs: int
    params: GradingParams
    wall_time: float
    conjugate_value: float | None = None
    quadrature_energy: float | None = None
    n_elements: int = 0
    symmetry: int = 1

    @property
    def ring_modulus(self) -> float:
        return 2 * math.pi / self.value


def _solve_energy(system: HpSystem, values: dict[int, float]) -> tuple[float, float, SolutionField]:
    sol = solve(apply_bc(system, values))
    q = dirichlet_energy(sol, check=False)
    d = _quadrature_energy(sol)
    return q, d, sol


def quad_modulus(
    problem: QuadrilateralProblem,
    params: GradingParams,
    reciprocal: bool = True,
    quad_extra: int = 0,
    return_field: bool = False,
):
    """Modulus of (D; z1, z2, z3, z4) and the reciprocal error |M M' - 1|."""
    t0 = time.perf_counter()
    mesh = build_mesh(problem.domain, params, problem.default_targets())
    system = assemble(mesh, ShapeBasis(params.p), quad_extra)
    m, mq, field_ = _solve_energy(system, problem.boundary_values())
    if reciprocal:
        mc, _, _ = _solve_energy(system, conjugate_problem(problem).boundary_values())
        rec = abs(m * mc - 1.0)
    else:
        mc, rec = None, float("nan")
    res = ModulusResult(m, rec, system.dofs, params, time.perf_counter() - t0, mc, mq, mesh.n_elements)
    return (res, field_) if return_field else res


def ring_capacity(ring: RingProblem, params: GradingParams, reciprocal: bool = True, quad_extra: int = 0,
                  return_field: bool = False):
    """Capacity of a condenser; through a symmetric quadrilateral piece when available."""
    t0 = time.perf_counter()
    if ring.quad is not None:
        out = quad_modulus(ring.quad, params, reciprocal, quad_extra, return_field)
        res, fld = out if return_field else (out, None)
        s = ring.symmetry
        res = ModulusResult(
            s * res.value, res.reciprocal_error, res.dofs, params, time.perf_counter() - t0,
            res.conjugate_value, s * res.quadrature_energy, res.n_elements, s,
        )
        return (res, fld) if return_field else res
    mesh = build_mesh(ring.domain, params, ring.default_targets())
    system = assemble(mesh, ShapeBasis(params.p), quad_extra)
    cap, capq, fld = _solve_energy(system, ring.boundary_values())
    s = ring.symmetry
    res = ModulusResult(s * cap, float("nan"), system.dofs, params, time.perf_counter() - t0,
                        None, s * capq, mesh.n_elements, s)
    return (res, fld) if return_field else res


# ---------------------------------------------------------------- sampling


def sample_field(sol: SolutionField, nx: int = 101, ny: int = 101) -> np.ndarray:
    """Rows (x, y, u) on a rectangular grid over the mesh bounding box.

    Points are located by Newton inversion of the element maps; points
    outside every element are omitted.
    """
    mesh = sol.mesh
    t = np.linspace(-1, 1, 9)
    rim_xi = np.concatenate([t, np.ones(9), -t, -np.ones(9)])
    rim_eta = np.concatenate([-np.ones(9), t, np.ones(9), -t])
    rim, _ = mesh.map_many(range(mesh.n_elements), rim_xi, rim_eta)
    lo = complex(rim.real.min(), rim.imag.min())
    hi = complex(rim.real.max(), rim.imag.max())
    gx, gy = np.meshgrid(np.linspace(lo.real, hi.real, nx), np.linspace(lo.imag, hi.imag, ny), indexing="ij")
    gz = (gx + 1j * gy).ravel()
    found = np.full(gz.size, np.nan)
    pad = 1e-9 * (abs(hi - lo) + 1)
    for e in range(mesh.n_elements):
        r = rim[e]
        cand = np.flatnonzero(
            np.isnan(found)
            & (gz.real >= r.real.min() - pad) & (gz.real <= r.real.max() + pad)
            & (gz.imag >= r.imag.min() - pad) & (gz.imag <= r.imag.max() + pad)
        )
        if cand.size == 0:
            continue
        xi = np.zeros(cand.size)
        eta = np.zeros(cand.size)
        for _ in range(30):
            z, jac = mesh.map_many([e], xi, eta)
            dz = gz[cand] - z[0]
            J = jac[0]
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            dxi = (J[:, 1, 1] * dz.real - J[:, 0, 1] * dz.imag) / det
            deta = (-J[:, 1, 0] * dz.real + J[:, 0, 0] * dz.imag) / det
            xi = np.clip(xi + dxi, -1.5, 1.5)
            eta = np.clip(eta + deta, -1.5, 1.5)
        z, _ = mesh.map_many([e], xi, eta)
        ok = (np.abs(xi) <= 1 + 1e-9) & (np.abs(eta) <= 1 + 1e-9) & (np.abs(z[0] - gz[cand]) < 1e-9 * (1 + abs(hi - lo)))
        if np.any(ok):
            found[cand[ok]] = sol.evaluate(e, np.clip(xi[ok], -1, 1), np.clip(eta[ok], -1, 1))
    keep = ~np.isnan(found)
    return np.column_stack([gz.real[keep], gz.imag[keep], found[keep]])
