"""Local postprocessing, error norms, convergence orders and scheme identities."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import basis as fb
from .hdg import CHUNK, Geometry, HdgSolution, flux_moments, tables
from .mesh import INTERIOR, Mesh
from .quadrature import gauss_line, triangle_quadrature


@dataclass
class PostprocessedField:
    mesh: Mesh
    k: int  # degree of u*_h (k_solution + 1)
    coeffs: np.ndarray  # (nE, dim P_{k})

    def eval(self, xref) -> np.ndarray:
        return self.coeffs @ fb.scalar_basis(self.k).values(np.asarray(xref).reshape(-1, 2)).T


def postprocess(sol: HdgSolution) -> PostprocessedField:
    """u*_h in P_{k+1}(K) from grad u* = -q_h/eps (weakly) and the element mean of u_h.

    The Neumann problem is closed by appending the mean constraint as a
    Lagrange multiplier row.
    """
    k1 = sol.k + 1
    eps = sol.problem.epsilon
    sb = fb.scalar_basis(k1)
    rule = triangle_quadrature(min(2 * k1 + 2, 12))
    xq = rule.points
    P = sb.values(xq)
    gP = sb.gradients(xq)
    W = fb.scalar_basis(sol.k).values(xq)
    n = sb.dim
    out = np.empty((sol.mesh.n_elements, n))
    for start in range(0, sol.mesh.n_elements, CHUNK):
        idx = np.arange(start, min(start + CHUNK, sol.mesh.n_elements))
        geo = Geometry.of(sol.mesh, idx)
        dx = rule.weights[None, :] * np.abs(geo.detJ)[:, None]
        g = geo.grad(gP)
        qv = sol.eval_q(xq, idx)
        E = len(idx)
        M = np.zeros((E, n + 1, n + 1))
        M[:, :n, :n] = np.einsum("eq,eqia,eqja->eij", dx, g, g)
        mean_row = np.einsum("eq,qi->ei", dx, P)
        M[:, n, :n] = mean_row
        M[:, :n, n] = mean_row
        rhs = np.zeros((E, n + 1))
        rhs[:, :n] = -np.einsum("eq,eqa,eqia->ei", dx, qv, g) / eps
        rhs[:, n] = np.einsum("eq,qj,ej->e", dx, W, sol.u[idx])
        out[idx] = np.linalg.solve(M, rhs[..., None])[..., :n, 0]
    return PostprocessedField(sol.mesh, k1, out)


REDUCED_BOX = ((0.0, 0.9), (0.0, 0.9))


def _elements_in_box(mesh: Mesh, box, tol: float = 1e-12) -> np.ndarray:
    (x0, x1), (y0, y1) = box
    p = mesh.vertices[mesh.elements]
    inside = np.all((p[..., 0] >= x0 - tol) & (p[..., 0] <= x1 + tol)
                    & (p[..., 1] >= y0 - tol) & (p[..., 1] <= y1 + tol), axis=1)
    covered = mesh.areas[inside].sum()
    if abs(covered - (x1 - x0) * (y1 - y0)) > 1e-10:
        warnings.warn("box is not exactly tiled by mesh elements; using elements fully inside it",
                      stacklevel=3)
    return np.flatnonzero(inside)


def l2_error(coeffs: np.ndarray, degree: int, exact, mesh: Mesh, subdomain=None,
             quad_degree: int | None = None) -> float:
    """||u - u_h|| for a field given by scalar-basis coefficients per element.

    ``subdomain`` is None (whole mesh) or a box ((x0, x1), (y0, y1)); only
    elements fully inside the box are counted.
    """
    qd = quad_degree if quad_degree is not None else min(2 * (degree + 1) + 4, 12)
    rule = triangle_quadrature(qd)
    phi = fb.scalar_basis(degree).values(rule.points)
    idx = np.arange(mesh.n_elements) if subdomain is None else _elements_in_box(mesh, subdomain)
    total = 0.0
    for start in range(0, len(idx), CHUNK):
        part = idx[start:start + CHUNK]
        geo = Geometry.of(mesh, part)
        X = geo.map(rule.points)
        diff = exact(X[..., 0], X[..., 1]) - coeffs[part] @ phi.T
        total += float(np.sum(rule.weights[None, :] * np.abs(geo.detJ)[:, None] * diff**2))
    return math.sqrt(total)


def solution_error(sol: HdgSolution, subdomain=None) -> float:
    """||u - u_h|| against the problem's exact solution."""
    if sol.problem.exact is None:
        raise ValueError("problem has no exact solution")
    return l2_error(sol.u, sol.k, sol.problem.exact.u, sol.mesh, subdomain)


def postprocessed_error(sol: HdgSolution, pp: PostprocessedField | None = None, subdomain=None) -> float:
    pp = pp if pp is not None else postprocess(sol)
    return l2_error(pp.coeffs, pp.k, sol.problem.exact.u, sol.mesh, subdomain)


def flux_error(sol: HdgSolution) -> float:
    """||q - q_h||."""
    ex = sol.problem.exact
    eps = sol.problem.epsilon
    rule = triangle_quadrature(min(2 * sol.k + 6, 12))
    total = 0.0
    for start in range(0, sol.mesh.n_elements, CHUNK):
        idx = np.arange(start, min(start + CHUNK, sol.mesh.n_elements))
        geo = Geometry.of(sol.mesh, idx)
        X = geo.map(rule.points)
        q = -eps * np.moveaxis(np.asarray(ex.grad(X[..., 0], X[..., 1])), 0, -1)
        d = q - sol.eval_q(rule.points, idx)
        total += float(np.sum(rule.weights[None, :, None] * np.abs(geo.detJ)[:, None, None] * d**2))
    return math.sqrt(total)


def trace_error(sol: HdgSolution, npoints: int | None = None) -> float:
    """(sum over faces of ||u - uhat||_F^2)^(1/2) on the skeleton."""
    mesh = sol.mesh
    rule = gauss_line(npoints if npoints is not None else sol.k + 4)
    t = rule.points[:, 0]
    pts = mesh.face_points(t)
    L = mesh.face_lengths
    psi = fb.face_basis(sol.k).values(t) / np.sqrt(L)[:, None, None]
    uh = np.einsum("fqm,fm->fq", psi, sol.uhat)
    d = sol.problem.exact.u(pts[..., 0], pts[..., 1]) - uh
    return math.sqrt(float(np.sum(rule.weights[None, :] * L[:, None] * d**2)))


def triple_norm(sol_like: HdgSolution, r_at, w_at, mu_at, quad_degree: int | None = None,
                face_points: int | None = None) -> float:
    """|||(r, w, mu)|||_e for fields given as callables.

    r_at(idx, xref) -> (E, nq, 2); w_at(idx, xref) -> (E, nq); mu_at(idx, j,
    xref) -> (E, nq) evaluated on local face j of the elements ``idx`` at
    reference points.  tau and beta come from ``sol_like``.
    """
    mesh = sol_like.mesh
    eps = sol_like.problem.epsilon
    beta = sol_like.problem.beta
    k = sol_like.k
    rule = triangle_quadrature(min(quad_degree if quad_degree else 2 * k + 6, 12))
    frule = gauss_line(face_points if face_points else k + 4)
    t = frule.points[:, 0]
    total = 0.0
    for start in range(0, mesh.n_elements, CHUNK):
        idx = np.arange(start, min(start + CHUNK, mesh.n_elements))
        geo = Geometry.of(mesh, idx)
        dx = rule.weights[None, :] * np.abs(geo.detJ)[:, None]
        r = r_at(idx, rule.points)
        w = w_at(idx, rule.points)
        total += float(np.sum(dx * (np.sum(r * r, axis=-1) / eps + w * w)))
        for j in range(3):
            xf = fb.face_points_on_reference(j, t)
            L, n = geo.face(j)
            X = geo.map(xf)
            b = beta(X[..., 0], X[..., 1])
            bn = b[0] * n[:, None, 0] + b[1] * n[:, None, 1]
            weight = np.abs(sol_like.tau[idx, j, None] - 0.5 * bn)
            jump = w_at(idx, xf) - mu_at(idx, j, xf)
            total += float(np.sum(frule.weights[None, :] * L[:, None] * weight * jump**2))
    return math.sqrt(total)


def error_triple_norm(sol: HdgSolution) -> float:
    """|||(q - q_h, u - u_h, u - uhat_h)|||_e against the exact solution."""
    ex = sol.problem.exact
    eps = sol.problem.epsilon
    mesh = sol.mesh
    sb = fb.scalar_basis(sol.k)
    fbasis = fb.face_basis(sol.k)

    def phys(idx, xref):
        return Geometry.of(mesh, idx).map(xref)

    def r_at(idx, xref):
        X = phys(idx, xref)
        q = -eps * np.moveaxis(np.asarray(ex.grad(X[..., 0], X[..., 1])), 0, -1)
        return q - sol.eval_q(xref, idx)

    def w_at(idx, xref):
        X = phys(idx, xref)
        return ex.u(X[..., 0], X[..., 1]) - sol.u[idx] @ sb.values(xref).T

    def mu_at(idx, j, xref):
        X = phys(idx, xref)
        # recover the local edge parameter from the reference point
        a = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        d = a[(j + 1) % 3] - a[j]
        tl = (xref - a[j]) @ d / (d @ d)
        sign = mesh.elem_face_sign[idx, j]
        tg = np.where(sign[:, None] > 0, tl[None, :], 1.0 - tl[None, :])
        L = mesh.face_lengths[mesh.elem_faces[idx, j]]
        psi = fbasis.values(tg) / np.sqrt(L)[:, None, None]
        uh = np.einsum("eqm,em->eq", psi, sol.uhat[mesh.elem_faces[idx, j]])
        return ex.u(X[..., 0], X[..., 1]) - uh

    return triple_norm(sol, r_at, w_at, mu_at)


# --- convergence tables ------------------------------------------------------------

def convergence_orders(errors, hs) -> list[float]:
    """order_i = log(e_{i-1}/e_i) / log(h_{i-1}/h_i); NaN where undefined."""
    errors = [float(e) for e in errors]
    hs = [float(h) for h in hs]
    if len(errors) != len(hs):
        raise ValueError("errors and h must have the same length")
    out = []
    for i in range(1, len(errors)):
        e0, e1 = errors[i - 1], errors[i]
        if e0 <= 0 or e1 <= 0 or hs[i - 1] == hs[i]:
            out.append(float("nan"))
        else:
            out.append(math.log(e0 / e1) / math.log(hs[i - 1] / hs[i]))
    return out


@dataclass
class ErrorReport:
    h: list[float]
    l2_u: list[float]
    l2_ustar: list[float] | None = None
    triple_norm: list[float] | None = None
    reduced_domain_l2: list[float] | None = None
    orders: dict[str, list[float]] = field(default_factory=dict)

    def compute_orders(self) -> None:
        for name in ("l2_u", "l2_ustar", "triple_norm", "reduced_domain_l2"):
            vals = getattr(self, name)
            if vals is not None:
                self.orders[name] = convergence_orders(vals, self.h)

    def to_csv(self, path, column: str = "l2_u") -> None:
        vals = getattr(self, column)
        orders = [float("nan")] + convergence_orders(vals, self.h)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "error", "order"])
            for h, e, o in zip(self.h, vals, orders):
                w.writerow([f"{h:.10g}", f"{e:.6e}", "" if math.isnan(o) else f"{o:.4f}"])


# --- scheme identities ------------------------------------------------------------

@dataclass
class IdentityResiduals:
    energy_residual: float | None
    conservation_residual: float
    boundary_residual: float


def identity_residuals(sol: HdgSolution) -> IdentityResiduals:
    """Relative residuals of the energy identity (g = 0 only), flux conservation and the boundary condition."""
    mesh = sol.mesh
    fm = flux_moments(sol)
    # conservation on interior faces: sum of both sides' moments
    acc = np.zeros((mesh.n_faces, sol.k + 1))
    np.add.at(acc, mesh.elem_faces.ravel(), fm.reshape(-1, sol.k + 1))
    interior = mesh.face_kind == INTERIOR
    scale = max(float(np.abs(fm).max()), 1e-300)
    cons = float(np.abs(acc[interior]).max()) / scale if np.any(interior) else 0.0

    from .hdg import known_face_values
    known = known_face_values(mesh, sol.problem, sol.k)
    fixed = mesh.face_kind != INTERIOR
    bscale = max(float(np.abs(known[fixed]).max()) if np.any(fixed) else 0.0, 1.0)
    bres = float(np.abs(sol.uhat[fixed] - known[fixed]).max()) / bscale if np.any(fixed) else 0.0

    energy = None
    # g = 0 up to roundoff in P_M g (e.g. sin(2 pi x) at x = 1)
    if np.all(np.abs(known) <= 1e-14):
        energy = _energy_residual(sol)
    return IdentityResiduals(energy, cons, bres)


def energy_terms(sol: HdgSolution) -> dict[str, float]:
    """Terms of (q,q)/eps + <(tau - bn/2)(u - uhat), u - uhat> - ((div b) u, u)/2 = (f, u)."""
    mesh = sol.mesh
    tb = tables(sol.k, sol.space)
    eps = sol.problem.epsilon
    terms = dict(flux=0.0, jump=0.0, div=0.0, source=0.0, div_abs=0.0, source_abs=0.0)
    for start in range(0, mesh.n_elements, CHUNK):
        idx = np.arange(start, min(start + CHUNK, mesh.n_elements))
        geo = Geometry.of(mesh, idx)
        X = geo.map(tb.xq)
        dx = tb.elem_rule.weights[None, :] * np.abs(geo.detJ)[:, None]
        q = sol.eval_q(tb.xq, idx)
        u = sol.u[idx] @ tb.W.T
        terms["flux"] += float(np.sum(dx * np.sum(q * q, axis=-1))) / eps
        dvu = dx * sol.problem.beta.div(X[..., 0], X[..., 1]) * u * u
        fu = dx * sol.problem.f(X[..., 0], X[..., 1]) * u
        terms["div"] -= 0.5 * float(np.sum(dvu))
        terms["source"] += float(np.sum(fu))
        # magnitudes of the integrands: (f, u) can cancel down to far below its pieces
        terms["div_abs"] += 0.5 * float(np.sum(np.abs(dvu)))
        terms["source_abs"] += float(np.sum(np.abs(fu)))
        sign = mesh.elem_face_sign[idx]
        for j in range(3):
            L, n = geo.face(j)
            Xf = geo.map(tb.xf[j])
            ds = tb.wf[None, :] * L[:, None]
            Mf = np.where((sign[:, j] > 0)[:, None, None], tb.Mf[0][None], tb.Mf[1][None]) \
                / np.sqrt(L)[:, None, None]
            uh = np.einsum("eqm,em->eq", Mf, sol.uhat[mesh.elem_faces[idx, j]])
            uf = sol.u[idx] @ tb.Wf[j].T
            b = sol.problem.beta(Xf[..., 0], Xf[..., 1])
            bn = b[0] * n[:, None, 0] + b[1] * n[:, None, 1]
            terms["jump"] += float(np.sum(ds * (sol.tau[idx, j, None] - 0.5 * bn) * (uf - uh) ** 2))
    return terms


def _energy_residual(sol: HdgSolution) -> float:
    t = energy_terms(sol)
    lhs = t["flux"] + t["jump"] + t["div"]
    scale = max(t["flux"] + abs(t["jump"]) + t["div_abs"] + t["source_abs"], 1e-300)
    return abs(lhs - t["source"]) / scale


def write_csv(path, rows, header) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
