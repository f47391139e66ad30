"""Command line driver: presets, reference tables, sweeps and convergence studies.

Every computation produces a :class:`RunReport`. Reports print either as
an aligned table or, with ``--format machine``, as one JSON object per
line; :func:`RunReport.from_json` reads that format back exactly.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable, Sequence

import numpy as np

from . import analytic, presets
from .fem import ModulusResult, quad_modulus, ring_capacity, sample_field
from .mesh import GradingParams, MeshError, QuadrilateralProblem, RingProblem, conjugate_problem, load_domain

log = logging.getLogger(__name__)

__all__ = [
    "Reference",
    "CaseSpec",
    "RunReport",
    "run_case",
    "sweep_convex",
    "flower_case",
    "convergence_study",
    "TABLES",
    "validate_table",
    "main",
]

EXIT_OK, EXIT_TOLERANCE, EXIT_FAILURE = 0, 1, 2

SWEEP_B = -0.2 + 1.2j
SWEEP_TEXT = (0.5 + 0.2j, 1.5 + 1.2j)
SWEEP_FIGURE = (0.1 + 0.1j, 2.0 + 2.0j)


@dataclass(frozen=True)
class Reference:
    value: float
    tol: float
    source: str = ""

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("reference tolerance must be positive")


@dataclass
class CaseSpec:
    """A named computation.

    ``problem`` is a quadrilateral, a ring, or a zero-argument callable
    returning a float (closed-form families).
    """

    name: str
    problem: QuadrilateralProblem | RingProblem | Callable[[], float]
    params: GradingParams | None = None
    expected: Reference | None = None
    # report |value - 1| instead of the value itself
    report_offset: float | None = None


@dataclass
class RunReport:
    case: str
    value: float
    reciprocal_error: float | None = None
    reference: float | None = None
    deviation: float | None = None
    tolerance: float | None = None
    source: str = ""
    dofs: int | None = None
    p: int | None = None
    alpha: float | None = None
    nu: int | None = None
    wall_time: float = 0.0
    error: str | None = None
    # which field the tolerance bounds: "deviation" or "reciprocal_error"
    checked: str = "deviation"
    extra: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def within_tolerance(self) -> bool:
        if self.failed:
            return False
        bounded = getattr(self, self.checked)
        if self.tolerance is None or bounded is None:
            return True
        return bounded <= self.tolerance

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RunReport":
        data = json.loads(line)
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def _attach_reference(rep: RunReport, ref: Reference | None) -> RunReport:
    if ref is not None and not rep.failed:
        rep.reference = ref.value
        rep.tolerance = ref.tol
        rep.source = ref.source
        rep.deviation = abs(rep.value - ref.value)
    return rep


def _from_result(name: str, res: ModulusResult, params: GradingParams) -> RunReport:
    rec = res.reciprocal_error
    return RunReport(
        case=name,
        value=res.value,
        reciprocal_error=None if rec is None or math.isnan(rec) else rec,
        dofs=res.dofs,
        p=params.p,
        alpha=params.alpha,
        nu=params.nu,
        wall_time=res.wall_time,
        extra={"elements": res.n_elements},
    )


def run_case(case: CaseSpec, reciprocal: bool = True, field_export: str | None = None) -> RunReport:
    """Run one case; failures are captured in the report rather than raised."""
    t0 = time.perf_counter()
    prob = case.problem
    try:
        if isinstance(prob, (QuadrilateralProblem, RingProblem)):
            if case.params is None:
                raise ValueError(f"case {case.name!r} needs grading parameters")
            solver = quad_modulus if isinstance(prob, QuadrilateralProblem) else ring_capacity
            res, sol = solver(prob, case.params, reciprocal=reciprocal, return_field=True)
            rep = _from_result(case.name, res, case.params)
            if isinstance(prob, RingProblem):
                rep.extra["ring_modulus"] = res.ring_modulus
            if field_export:
                _export_field(sol, field_export)
        else:
            rep = RunReport(case.name, float(prob()), wall_time=time.perf_counter() - t0)
    except (MeshError, ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        log.error("case %s failed: %s", case.name, exc)
        return RunReport(case.name, float("nan"), error=f"{type(exc).__name__}: {exc}",
                         wall_time=time.perf_counter() - t0)
    if case.report_offset is not None:
        rep.extra["value"] = rep.value
        rep.value = abs(rep.value - case.report_offset)
    return _attach_reference(rep, case.expected)


def _export_field(sol, path: str, n: int = 101) -> None:
    rows = sample_field(sol, n, n)
    np.savetxt(path, rows, fmt="%.17g", header="x y u")


# ---------------------------------------------------------------- studies


def sweep_convex(
    lower: complex = SWEEP_TEXT[0],
    upper: complex = SWEEP_TEXT[1],
    n: int = 6,
    params: GradingParams = GradingParams(0.15, 18, 12),
    B: complex = SWEEP_B,
    tol: float | None = None,
) -> list[RunReport]:
    """Reciprocal test over an n x n grid of vertices A in [lower, upper].

    Each report carries the modulus of (A, B, 0, 1), its reciprocal error
    and the deviation from the hypergeometric formula. ``tol`` bounds the
    reciprocal error. Invalid grid points are logged and skipped.
    """
    out = []
    for y in np.linspace(lower.imag, upper.imag, n):
        for x in np.linspace(lower.real, upper.real, n):
            A = complex(float(x), float(y))
            name = f"A={A.real:.4g}{A.imag:+.4g}i"
            try:
                q = presets.polygon_quad(A, B)
                spec = analytic.ConvexQuadSpec.from_vertices(A, B)
                ref = analytic.hvv_quad_modulus(spec)
            except (MeshError, ValueError, ArithmeticError) as exc:
                log.warning("skipping %s: %s", name, exc)
                continue
            rep = run_case(CaseSpec(name, q, params))
            if not rep.failed:
                rep.reference = ref
                rep.deviation = abs(rep.value - ref)
                rep.source = "formula"
                rep.extra["A"] = [A.real, A.imag]
                if tol is not None:
                    rep.tolerance = tol
                    rep.checked = "reciprocal_error"
            out.append(rep)
    return out


def flower_case(n: int, t: float, kind: str, params: GradingParams,
                freq: float | None = None, expected: Reference | None = None) -> CaseSpec:
    """Flower quadrilateral in the table orientation.

    Type I cases report |M - 1|, type II the modulus.
    """
    q = conjugate_problem(presets.flower(n, t, kind, freq=freq, phase=math.pi))
    return CaseSpec(f"flower-{kind} n={n} t={t}", q, params, expected, 1.0 if kind == "I" else None)


def convergence_study(build: Callable[[], QuadrilateralProblem | RingProblem], ps: Iterable[int],
                      nus: Iterable[int], alpha: float = 0.15, name: str = "case") -> list[RunReport]:
    """Reports for every (p, nu) pair in the given ranges."""
    out = []
    for nu in nus:
        for p in ps:
            out.append(run_case(CaseSpec(f"{name} p={p} nu={nu}", build(), GradingParams(alpha, nu, p))))
    return out


# ---------------------------------------------------------------- tables


def _sis_table(fem: bool) -> list[CaseSpec]:
    rows = [
        (0.1, 2.83977741905223), (0.2, 4.134487024234081), (0.3, 5.632828000941654),
        (0.4, 7.5615315398105745), (0.5, 10.23409256936805), (0.6, 14.234879675824363),
        (0.7, 20.901581676413954), (0.8, 34.23491519877346), (0.9, 74.23491519877882),
    ]
    if fem:
        par = GradingParams(0.15, 16, 16)
        return [CaseSpec(f"square-in-square a={a}", presets.square_in_square(a), par,
                         Reference(v, 1e-10 * v, "table")) for a, v in rows]
    return [CaseSpec(f"square-in-square a={a}", (lambda a=a: analytic.square_in_square_capacity(a)), None,
                     Reference(v, 1e-11 * v, "table")) for a, v in rows]


_QA_ROWS = [
    ((2, 10, 12), 0.7071508111121534), ((2, 10, 14), 0.8074514311467651),
    ((4, 12, 18), 1.0383251171675787), ((6, 16, 24), 1.170060906774661),
    ((8, 22, 32), 1.313262425617007),
]
_QB_ROWS = [
    ((2, 10, 12), 0.5389714947317054), ((2, 10, 14), 0.5953434982171909),
    ((4, 12, 18), 0.7121629047455362), ((6, 16, 24), 0.7718690862645192),
    ((8, 22, 32), 0.8319009599091923),
]


def _circular_table(kind: str, fem: bool) -> list[CaseSpec]:
    rows = _QA_ROWS if kind == "A" else _QB_ROWS
    fn = analytic.circular_quad_type_a if kind == "A" else analytic.circular_quad_type_b
    out = []
    for nodes, v in rows:
        name = f"Q_{kind}{nodes}"
        if fem:
            out.append(CaseSpec(name, presets.circular_quad(*nodes, kind=kind), GradingParams(0.15, 12, 20),
                                Reference(v, 1e-9, "table")))
        else:
            spec = analytic.CircularQuadSpec.from_nodes(*nodes, kind=kind)
            out.append(CaseSpec(name, (lambda s=spec: fn(s)), None, Reference(v, 1e-12, "table")))
    return out


def _cross_table() -> list[CaseSpec]:
    rows = [
        ((0.5, 1.2, 1.5), 21.94721953515577), ((0.5, 1.0, 1.5), 14.00279904484109),
        ((0.2, 0.7, 1.2), 9.186926595881525), ((0.1, 0.8, 1.1), 11.256582318490889),
        ((0.5, 0.6, 1.5), 7.323269585567927), ((0.1, 1.2, 1.3), 23.13861453810529),
    ]
    par = GradingParams(0.15, 16, 16)
    return [CaseSpec(f"cross-in-square {abc}", presets.cross_in_square(*abc), par, Reference(v, 1e-9, "table"))
            for abc, v in rows]


def _rr_table() -> list[CaseSpec]:
    rows = [
        ((1, 1, 2, 2), 5.210320385649294), ((1, 1, 3, 2), 6.746053277945276), ((1, 1, 4, 2), 8.27007839293125),
        ((1, 1, 5, 2), 9.86240917550835), ((1, 1, 6, 2), 11.89718127369752), ((2, 1, 3, 2), 4.692072335693745),
        ((2, 1, 4, 2), 6.232078709256309), ((2, 1, 5, 2), 7.827105378062926), ((2, 1, 6, 2), 9.86240917550835),
        ((3, 1, 4, 2), 4.621123827863167), ((3, 1, 5, 2), 6.232078709256313), ((3, 1, 6, 2), 8.2700783929313),
        ((4, 1, 5, 2), 4.69207233569376), ((4, 1, 6, 2), 6.746053277945233), ((5, 1, 6, 2), 5.210320385649318),
    ]
    par = GradingParams(0.15, 16, 16)
    return [CaseSpec(f"rectangle-in-rectangle {abcd}", presets.rectangle_in_rectangle(*abcd), par,
                     Reference(v, 1e-10, "table")) for abcd, v in rows]


def _flower_tables(kind: str) -> list[CaseSpec]:
    par = GradingParams(0.15, 12, 20)
    if kind == "I":
        return [flower_case(n, t, "I", par, expected=Reference(0.0, 1e-10, "symmetry"))
                for n in (4, 6, 8) for t in (0.1, 0.2)]
    rows = [
        (4, 0.1, 0.8196442147286799, 1e-9), (4, 0.2, 0.8196441884805612, 1e-9),
        (6, 0.1, 0.7896695654987764, 1e-9), (6, 0.2, 0.7690460663235661, 1e-7),
        (8, 0.1, 0.8196441884804566, 1e-9), (8, 0.2, 0.8196441885295815, 1e-9),
    ]
    return [flower_case(n, t, "II", par, expected=Reference(v, tol, "table")) for n, t, v, tol in rows]


def _point_cases() -> list[CaseSpec]:
    return [
        CaseSpec("l-shape", presets.l_shape(), presets.QUAD_PRESETS["l-shape"].params,
                 Reference(1.5081540958548603, 1e-9, "caption")),
        CaseSpec("wave", presets.wave(), presets.QUAD_PRESETS["wave"].params,
                 Reference(1.285385932609546, 1e-9, "text")),
    ]


TABLES: dict[str, tuple[str, Callable[[], list[CaseSpec]]]] = {
    "square-in-square": ("capacities, hp-FEM against the table", lambda: _sis_table(True)),
    "square-in-square-exact": ("capacities, closed form against the table", lambda: _sis_table(False)),
    "cross-in-square": ("capacities, hp-FEM", _cross_table),
    "rectangle-in-rectangle": ("capacities, hp-FEM", _rr_table),
    "q-a": ("circular quadrilaterals of type A, hp-FEM", lambda: _circular_table("A", True)),
    "q-a-exact": ("circular quadrilaterals of type A, closed form", lambda: _circular_table("A", False)),
    "q-b": ("circular quadrilaterals of type B, hp-FEM", lambda: _circular_table("B", True)),
    "q-b-exact": ("circular quadrilaterals of type B, closed form", lambda: _circular_table("B", False)),
    "flowers-1": ("flowers of type I, |M - 1|", lambda: _flower_tables("I")),
    "flowers-2": ("flowers of type II", lambda: _flower_tables("II")),
    "points": ("L-shape and wave point values", _point_cases),
}


def validate_table(table_id: str, reciprocal: bool = True) -> list[RunReport]:
    if table_id not in TABLES:
        raise KeyError(f"unknown table {table_id!r}; choose from {', '.join(TABLES)}")
    return [run_case(c, reciprocal) for c in TABLES[table_id][1]()]


# ---------------------------------------------------------------- output


def _fmt(v, spec: str = ".16g") -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return format(v, spec)
    return str(v)


def format_human(reports: Sequence[RunReport]) -> str:
    head = ["case", "value", "recip.err", "reference", "deviation", "tol", "dofs", "p", "alpha", "nu", "time[s]"]
    rows = []
    for r in reports:
        if r.failed:
            rows.append([r.case, "FAILED", r.error] + [""] * (len(head) - 3))
            continue
        rows.append([
            r.case, _fmt(r.value), _fmt(r.reciprocal_error, ".2e"), _fmt(r.reference), _fmt(r.deviation, ".2e"),
            _fmt(r.tolerance, ".0e"), _fmt(r.dofs), _fmt(r.p), _fmt(r.alpha), _fmt(r.nu), f"{r.wall_time:.2f}",
        ])
    widths = [max(len(str(x[i])) for x in rows + [head]) for i in range(len(head))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in [head] + rows]
    return "\n".join(lines)


def emit(reports: Sequence[RunReport], fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "machine":
        for r in reports:
            print(r.to_json(), file=out)
    else:
        print(format_human(reports), file=out)


def exit_code(reports: Sequence[RunReport]) -> int:
    if any(r.failed for r in reports):
        return EXIT_FAILURE
    return EXIT_OK if all(r.within_tolerance for r in reports) else EXIT_TOLERANCE


# ---------------------------------------------------------------- CLI


def _complex(s: str) -> complex:
    return complex(s.replace(" ", "").replace("i", "j"))


def _params(args, default: GradingParams) -> GradingParams:
    return GradingParams(
        default.alpha if args.alpha is None else args.alpha,
        default.nu if args.nu is None else args.nu,
        default.p if args.p is None else args.p,
    )


def _expected(args) -> Reference | None:
    if getattr(args, "reference", None) is None:
        return None
    return Reference(args.reference, args.tol, "user")


def _cmd_quad(args) -> list[RunReport]:
    if args.domain:
        dom, extra = load_domain(args.domain)
        marked = args.marked or extra.get("marked")
        if marked is None:
            raise ValueError("domain file without 'marked' needs --marked")
        targets = extra.get("targets")
        q = QuadrilateralProblem(dom, tuple(marked), tuple(targets) if targets else None, name=dom.name)
        default = GradingParams()
    else:
        info = presets.QUAD_PRESETS[args.preset]
        kw = {"h": args.h} if args.h is not None else {}
        if args.marked:
            kw["marked"] = tuple(args.marked)
        q = info.build(**kw)
        default = info.params
    case = CaseSpec(q.name or "quad", q, _params(args, default), _expected(args))
    return [run_case(case, not args.no_reciprocal, args.field_export)]


def _cmd_ring(args) -> list[RunReport]:
    build = presets.RING_PRESETS[args.preset]
    ring = build(*args.shape)
    case = CaseSpec(ring.name, ring, _params(args, GradingParams(0.15, 16, 16)), _expected(args))
    if case.expected is None and args.preset == "square-in-square":
        exact = analytic.square_in_square_capacity(args.shape[0])
        case.expected = Reference(exact, args.tol, "exact")
    return [run_case(case, not args.no_reciprocal, args.field_export)]


ANALYTIC_FAMILIES = {
    "parallelogram": ("t h", lambda a: analytic.parallelogram_modulus(float(a[0]), float(a[1]))),
    "square-frame": ("h", lambda a: analytic.square_frame_modulus(float(a[0]))),
    "hvv": ("A B", lambda a: analytic.hvv_quad_modulus(
        analytic.ConvexQuadSpec.from_vertices(_complex(a[0]), _complex(a[1])))),
    "type-a": ("m n r", lambda a: analytic.circular_quad_type_a(
        analytic.CircularQuadSpec.from_nodes(*map(int, a), kind="A"))),
    "type-b": ("m n r", lambda a: analytic.circular_quad_type_b(
        analytic.CircularQuadSpec.from_nodes(*map(int, a), kind="B"))),
    "square-in-square": ("a", lambda a: analytic.square_in_square_capacity(float(a[0]))),
}


def _cmd_analytic(args) -> list[RunReport]:
    usage, fn = ANALYTIC_FAMILIES[args.family]
    if len(args.values) != len(usage.split()):
        raise ValueError(f"{args.family} expects: {usage}")
    name = f"{args.family}({', '.join(args.values)})"
    return [run_case(CaseSpec(name, lambda: fn(args.values), None, _expected(args)))]


def _cmd_sweep(args) -> list[RunReport]:
    lower, upper = SWEEP_FIGURE if args.figure_domain else SWEEP_TEXT
    return sweep_convex(lower, upper, args.n, _params(args, GradingParams(0.15, 18, 12)), tol=args.tol)


def _cmd_flowers(args) -> list[RunReport]:
    par = _params(args, GradingParams(0.15, 12, 20))
    out = []
    for kind in args.type:
        for n in args.n:
            for t in args.t:
                out.append(run_case(flower_case(n, t, kind, par, args.freq), not args.no_reciprocal))
    return out


CONVERGE_CASES = {
    "q-b": lambda: presets.circular_quad(2, 24, 36, "B"),
    "q-a": lambda: presets.circular_quad(2, 24, 36, "A"),
    "l-shape": presets.l_shape,
    "wave": presets.wave,
}


def _cmd_converge(args) -> list[RunReport]:
    return convergence_study(CONVERGE_CASES[args.case], args.ps, args.nus, args.alpha or 0.15, args.case)


def _cmd_validate(args) -> list[RunReport]:
    return validate_table(args.table, not args.no_reciprocal)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=int, help="polynomial degree")
    common.add_argument("--alpha", type=float, help="geometric grading ratio")
    common.add_argument("--nu", type=int, help="number of refinement layers")
    common.add_argument("--format", choices=("human", "machine"), default="human")
    common.add_argument("--field-export", metavar="PATH", help="write x y u samples of the potential")
    common.add_argument("--no-reciprocal", action="store_true", help="skip the conjugate problem")
    common.add_argument("-v", "--verbose", action="store_true")

    ref = argparse.ArgumentParser(add_help=False)
    ref.add_argument("--reference", type=float, help="expected value")
    ref.add_argument("--tol", type=float, default=1e-9, help="allowed deviation from the reference")

    ap = argparse.ArgumentParser(prog="hpmodulus", description="hp-FEM moduli of quadrilaterals and ring capacities")
    sub = ap.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quad", parents=[common, ref], help="modulus of a quadrilateral")
    src = q.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(presets.QUAD_PRESETS))
    src.add_argument("--domain", metavar="FILE", help="JSON domain description")
    q.add_argument("--marked", type=int, nargs=4, metavar="V", help="vertex ids of z1..z4")
    q.add_argument("--h", type=float, help="rectangle height")
    q.set_defaults(run=_cmd_quad)

    r = sub.add_parser("ring", parents=[common, ref], help="capacity of a ring domain")
    r.add_argument("preset", choices=sorted(presets.RING_PRESETS))
    r.add_argument("shape", type=float, nargs="+", help="shape parameters")
    r.set_defaults(run=_cmd_ring)

    a = sub.add_parser("analytic", parents=[common, ref], help="closed-form reference values")
    a.add_argument("family", choices=sorted(ANALYTIC_FAMILIES))
    a.add_argument("values", nargs="+")
    a.set_defaults(run=_cmd_analytic)

    s = sub.add_parser("sweep", parents=[common], help="reciprocal test over convex quadrilaterals")
    s.add_argument("--n", type=int, default=6, help="grid points per direction")
    s.add_argument("--figure-domain", action="store_true", help="use [0.1, 2] x [0.1, 2] for the vertex A")
    s.add_argument("--tol", type=float, help="bound on the reciprocal error")
    s.set_defaults(run=_cmd_sweep)

    f = sub.add_parser("flowers", parents=[common], help="flower-shaped quadrilaterals")
    f.add_argument("--n", type=int, nargs="+", default=[4, 6, 8])
    f.add_argument("--t", type=float, nargs="+", default=[0.1, 0.2])
    f.add_argument("--type", nargs="+", choices=("I", "II"), default=["I", "II"])
    f.add_argument("--freq", type=float, help="override the angular frequency (default n)")
    f.set_defaults(run=_cmd_flowers)

    c = sub.add_parser("converge", parents=[common], help="p- and nu-convergence of the reciprocal error")
    c.add_argument("--case", choices=sorted(CONVERGE_CASES), default="q-b")
    c.add_argument("--ps", type=int, nargs="+", default=[8, 12, 16, 20])
    c.add_argument("--nus", type=int, nargs="+", default=[12])
    c.set_defaults(run=_cmd_converge)

    v = sub.add_parser("validate", parents=[common], help="reproduce a reference table")
    v.add_argument("table", choices=sorted(TABLES))
    v.set_defaults(run=_cmd_validate)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        reports = args.run(args)
    except (MeshError, ArithmeticError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    emit(reports, args.format)
    return exit_code(reports)


if __name__ == "__main__":
    sys.exit(main())
