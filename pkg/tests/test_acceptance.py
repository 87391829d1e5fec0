"""Acceptance criteria 1-11, one test per criterion.

Each test records a PASS/FAIL line; conftest prints them at the end of the
session.  Tolerances are the ones stated by the criteria.
"""
from functools import lru_cache

import numpy as np
import sympy as sp

from hdgcd.hdg import METHODS, get_method, solve_hdg, trace_matrix
from hdgcd.linalg import cond2
from hdgcd.mesh import check_mesh_assumption, structured_unit_square
from hdgcd.mhdg import mhdg_equivalence_check
from hdgcd.monolithic import monolithic_solve
from hdgcd.postprocess import (REDUCED_BOX, convergence_orders, flux_error, identity_residuals,
                               postprocessed_error, solution_error, trace_error)
from hdgcd.problems import (TAU1, ProblemSpec, VelocityField, builtin_problem, manufactured_problem,
                            velocity_from_exprs)
from hdgcd.projections import project_elem_scalar, project_elem_vector, selected_faces, vector_l2_error
from hdgcd.postprocess import l2_error
from hdgcd.streamline import streamline_mesh

import reference_tables as ref

RESULTS = {}


def record(criterion, passed, detail):
    RESULTS[criterion] = (passed, detail)


@lru_cache(maxsize=None)
def _problem(name, eps):
    return builtin_problem(name, eps)


@lru_cache(maxsize=None)
def solve_case(name, eps, method, k, n):
    """Errors (u_h, and u*_h for eps = 1) and identity residuals of one table entry."""
    sol = solve_hdg(structured_unit_square(n), _problem(name, eps), k=k, method=method)
    box = REDUCED_BOX if name == "boundary_layer" else None
    err = solution_error(sol, box)
    perr = postprocessed_error(sol) if (name == "smooth" and eps == 1.0) else None
    return err, perr, identity_residuals(sol)


def compare_table(rows, errors, rel_tol, order_tol=None, order_tol_first=None):
    """List of mismatch strings between reference rows and computed errors.

    With ``order_tol=None`` only the errors are compared.
    """
    bad = []
    hs = [1.0 / n for n, _, _ in rows]
    orders = [None] + convergence_orders(errors, hs)
    for i, ((n, e_ref, o_ref), e, o) in enumerate(zip(rows, errors, orders)):
        if abs(e - e_ref) > rel_tol * e_ref:
            bad.append(f"n={n}: error {e:.3e} vs {e_ref:.2e}")
        if o_ref is not None and order_tol is not None:
            tol = order_tol_first if (i == 1 and order_tol_first is not None) else order_tol
            if abs(o - o_ref) > tol:
                bad.append(f"n={n}: order {o:.2f} vs {o_ref:.2f}")
    return bad, orders


# --- 1-4: convergence tables --------------------------------------------------------

def test_criterion_1_table_u_eps1():
    bad = []
    for method, cols in ref.U_EPS1.items():
        for k, rows in cols.items():
            errs = [solve_case("smooth", 1.0, method, k, n)[0] for n, _, _ in rows]
            b, _ = compare_table(rows, errs, 0.02, 0.1)
            bad += [f"{method} k={k} {s}" for s in b]
    record(1, not bad, f"{len(bad)} mismatches" + (f": {bad[:3]}" if bad else " (36 columns x 4 levels)"))
    assert not bad, bad


def test_criterion_2_table_ustar_eps1():
    bad = []
    for method, cols in ref.USTAR_EPS1.items():
        for k, rows in cols.items():
            errs = [solve_case("smooth", 1.0, method, k, n)[1] for n, _, _ in rows]
            b, orders = compare_table(rows, errs, 0.02, 0.1)
            if abs(orders[-1] - (k + 2)) > 0.1:
                b.append(f"asymptotic order {orders[-1]:.2f} vs {k + 2}")
            bad += [f"{method} k={k} {s}" for s in b]
    record(2, not bad, f"{len(bad)} mismatches" + (f": {bad[:3]}" if bad else ""))
    assert not bad, bad


def test_criterion_3_table_u_small_eps():
    bad = []
    for eps, table in ref.U_SMALL_EPS.items():
        for method, cols in table.items():
            for k, rows in cols.items():
                errs = [solve_case("smooth", eps, method, k, n)[0] for n, _, _ in rows]
                # the printed eps=1e-9, k=1, n=10 order (1.85) disagrees with its own
                # errors (log2(7.96/2.04) = 1.96), so orders are checked against k+1
                b, orders = compare_table(rows, errs, 0.02)
                if abs(orders[-1] - (k + 1)) > 0.1:
                    b.append(f"asymptotic order {orders[-1]:.2f} vs {k + 1}")
                bad += [f"eps={eps:g} {method} k={k} {s}" for s in b]
    record(3, not bad, f"{len(bad)} mismatches" + (f": {bad[:3]}" if bad else ""))
    assert not bad, bad


def test_criterion_4_table_boundary_layer():
    bad = []
    for eps, cols in ref.U_LAYER.items():
        for k, rows in cols.items():
            errs = [solve_case("boundary_layer", eps, "HDG1", k, n)[0] for n, _, _ in rows]
            first = 0.3 if (eps == 1e-2 and k in (2, 3)) else None
            b, _ = compare_table(rows, errs, 0.02, 0.15, first)
            bad += [f"eps={eps:g} k={k} {s}" for s in b]
    record(4, not bad, f"{len(bad)} mismatches" + (f": {bad[:3]}" if bad else ""))
    assert not bad, bad


# --- 5: conditioning trends ----------------------------------------------------------

COND_LEVELS = (5, 10, 20, 40)


def _kappa(beta, eps, method, k, n, scaling):
    p = builtin_problem("smooth", eps, beta)
    est = cond2(trace_matrix(structured_unit_square(n), p, k, method, scaling).matrix)
    return est.kappa


def test_criterion_5a_scaled_h2_growth():
    bad = []
    lines = []
    for eps in (1.0, 1e-3, 1e-9):
        for k in range(4):
            kap = [_kappa((1.0, 2.0), eps, "HDG1", k, n, "scaled") for n in COND_LEVELS]
            ratios = [b / a for a, b in zip(kap, kap[1:])]
            lines.append(f"eps={eps:g} k={k} ratios {', '.join(f'{r:.2f}' for r in ratios)}")
            if not all(3.0 <= r <= 5.0 for r in ratios):
                bad.append(lines[-1])
    record("5a", not bad, f"{len(bad)}/12 (eps, k) series outside [3, 5]" + (f": {bad[:4]}" if bad else ""))
    assert not bad, "\n".join(bad)


def test_criterion_5b_scaling_improvement():
    bad = []
    info = []
    for k in (0, 1):
        ku = _kappa((1.0, 1.0), 1e-9, "HDG2", k, 10, "unscaled")
        ks = _kappa((1.0, 1.0), 1e-9, "HDG2", k, 10, "scaled")
        info.append(f"k={k}: {ku:.2e}/{ks:.2e}")
        if not (ku >= 1e7 and ku / ks >= 1e3):
            bad.append(info[-1])
    record("5b", not bad, "; ".join(info))
    assert not bad, bad


def test_criterion_5c_scaled_growth_bound():
    bad = []
    worst = 0.0
    for k in range(4):
        kap = [_kappa((1.0, 1.0), 1e-9, "HDG2", k, n, "scaled") for n in COND_LEVELS]
        ratios = [b / a for a, b in zip(kap, kap[1:])]
        worst = max(worst, max(ratios))
        if max(ratios) > 4.5:
            bad.append(f"k={k}: {ratios}")
    record("5c", not bad, f"largest growth per refinement {worst:.2f}")
    assert not bad, bad


# --- 6: condensed vs monolithic --------------------------------------------------------

X, Y = sp.symbols("x y")


def random_draw(rng):
    """eps, linear beta with div <= 0 and |beta| > 0, polynomial f and g."""
    eps = float(10.0 ** rng.uniform(-6, 0))
    a, d = rng.uniform(-0.5, 0.0, 2)
    bx = rng.uniform(1.0, 2.0) + a * X
    by = rng.uniform(-1.0, 1.0) + d * Y
    beta = velocity_from_exprs(bx, by)
    c = rng.uniform(-1, 1, 10)
    mons = [1, X, Y, X**2, X * Y, Y**2, X**3, X**2 * Y, X * Y**2, Y**3]
    f = sp.lambdify((X, Y), sum(ci * m for ci, m in zip(c, mons)) + 0 * X, "numpy")
    cg = rng.uniform(-1, 1, 6)
    g = sp.lambdify((X, Y), sum(ci * m for ci, m in zip(cg, mons[:6])) + 0 * X, "numpy")
    return ProblemSpec(eps, beta, f, g, name="random")


def test_criterion_6_monolithic_oracle():
    rng = np.random.default_rng(20240601)
    meshes = [structured_unit_square(1, "NE"), structured_unit_square(1, "NW"),
              structured_unit_square(2, "NE"), structured_unit_square(2, "NW")]
    worst = 0.0
    for _ in range(5):
        p = random_draw(rng)
        for mesh in meshes:
            for method in METHODS:
                m = get_method(method)
                for k in range(3):
                    s = solve_hdg(mesh, p, k=k, method=method)
                    o = monolithic_solve(mesh, p, m.tau, k, m.space)
                    for a, b in ((s.q, o.q), (s.u, o.u), (s.uhat, o.uhat)):
                        worst = max(worst, np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))
    record(6, worst <= 1e-10, f"max relative coefficient difference {worst:.1e}")
    assert worst <= 1e-10


# --- 7: identities on every table solve ------------------------------------------------

def _table_cases():
    for method, cols in ref.U_EPS1.items():
        for k, rows in cols.items():
            for n, _, _ in rows:
                yield "smooth", 1.0, method, k, n
    for eps, table in ref.U_SMALL_EPS.items():
        for method, cols in table.items():
            for k, rows in cols.items():
                for n, _, _ in rows:
                    yield "smooth", eps, method, k, n
    for eps, cols in ref.U_LAYER.items():
        for k, rows in cols.items():
            for n, _, _ in rows:
                yield "boundary_layer", eps, "HDG1", k, n


def test_criterion_7_identities():
    worst_e = worst_c = worst_b = 0.0
    n_energy = n_total = 0
    for case in _table_cases():
        *_, res = solve_case(*case)
        n_total += 1
        if res.energy_residual is not None:
            n_energy += 1
            worst_e = max(worst_e, res.energy_residual)
        worst_c = max(worst_c, res.conservation_residual)
        worst_b = max(worst_b, res.boundary_residual)
    ok = worst_e <= 1e-10 and worst_c <= 1e-10 and worst_b <= 1e-12 and n_energy > 0
    record(7, ok, f"{n_total} solves ({n_energy} with g=0): energy {worst_e:.1e}, "
                  f"conservation {worst_c:.1e}, boundary {worst_b:.1e}")
    assert ok


# --- 8: polynomial exactness -----------------------------------------------------------

POLYS = {0: "0.7", 1: "1 + 2*x - 3*y", 2: "x**2 - x*y + 0.5*y**2 + x",
         3: "x**3 - 2*x*y**2 + y**3 - x*y + 1"}


def test_criterion_8_polynomial_exactness():
    worst = 0.0
    for k, u in POLYS.items():
        for beta in (("1", "2"), ("-0.5", "1")):
            for eps in (1.0, 1e-3, 1e-9):
                p = manufactured_problem(u, beta, eps)
                for method in METHODS:
                    s = solve_hdg(structured_unit_square(4), p, k=k, method=method)
                    worst = max(worst, solution_error(s), flux_error(s), trace_error(s))
    record(8, worst <= 1e-10, f"largest of u, q, uhat errors {worst:.1e}")
    assert worst <= 1e-10


# --- 9: MH-DG equivalence --------------------------------------------------------------

def test_criterion_9_mhdg_equivalence():
    worst = 0.0
    for mesh in (structured_unit_square(1), structured_unit_square(2)):
        for beta in ((1.0, 2.0), (0.7, -1.3)):
            p = ProblemSpec(1.0, VelocityField.constant(*beta), lambda x, y: 0 * x, lambda x, y: 0 * x)
            for k in (0, 1, 2):
                worst = max(worst, mhdg_equivalence_check(mesh, p, k).max_rel_diff)
    record(9, worst <= 1e-12, f"max relative matrix difference {worst:.1e} (2- and 8-element meshes)")
    assert worst <= 1e-12


# --- 10: special-mesh machinery ----------------------------------------------------------

def test_criterion_10_special_mesh():
    b11 = VelocityField.constant(1.0, 1.0)
    b12 = VelocityField.constant(1.0, 2.0)
    pass11 = all(check_mesh_assumption(structured_unit_square(n), b11, 1.0).passed for n in (5, 10, 20, 40))
    fail12 = all(not check_mesh_assumption(structured_unit_square(n), b12, 1.0).passed for n in (20, 40))
    sm = streamline_mesh(b11, 0.1)
    ok = pass11 and fail12 and sm.report.passed
    record(10, ok, f"beta=(1,1) structured pass={pass11}, beta=(1,2) n>=20 fail={fail12}, "
                   f"streamline mesh ({sm.mesh.n_elements} elements) pass={sm.report.passed}")
    assert ok


# --- 11: projection rates -------------------------------------------------------------

def test_criterion_11_projection_rates():
    two_pi = 2 * np.pi
    u = lambda x, y: np.sin(two_pi * x) * np.sin(two_pi * y)  # noqa: E731
    q = lambda x, y: -np.stack([two_pi * np.cos(two_pi * x) * np.sin(two_pi * y),  # noqa: E731
                                two_pi * np.sin(two_pi * x) * np.cos(two_pi * y)])
    beta = VelocityField.constant(1.0, 2.0)
    bad = []
    summary = []
    for k in range(4):
        eu, eq, hs = [], [], []
        for n in (5, 10, 20, 40):
            mesh = structured_unit_square(n)
            star, sface = selected_faces(mesh, TAU1, beta)
            eu.append(l2_error(project_elem_scalar(mesh, u, k, star), k, u, mesh))
            eq.append(vector_l2_error(project_elem_vector(mesh, q, k, sface), k, q, mesh))
            hs.append(1.0 / n)
        for name, errs in (("u", eu), ("q", eq)):
            orders = convergence_orders(errs, hs)
            summary.append(f"{name} k={k}: " + ",".join(f"{o:.2f}" for o in orders))
            if any(abs(o - (k + 1)) > 0.1 for o in orders):
                bad.append(summary[-1])
    record(11, not bad, f"{len(bad)} series off by > 0.1" + (f": {bad}" if bad else ""))
    assert not bad, bad
