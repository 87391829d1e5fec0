"""HDG discretization: element-local solves, static condensation, trace system.

Element unknowns are ordered ``[q (nV), u (nW)]``; element trace unknowns
are the three local faces' coefficients, face j occupying columns
``j*nM:(j+1)*nM``.  All per-element work is batched over chunks of elements.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sps

from . import basis as fb
from .linalg import LUFactors, SingularMatrixError
from .mesh import BOUNDARY, INTERIOR, SLIT, Mesh
from .problems import TAU1, TAU2, ProblemSpec, StabilizationSpec, mesh_tau, validate_tau
from .quadrature import gauss_line, triangle_quadrature

CHUNK = 2048


@dataclass(frozen=True)
class Method:
    """Approximation space + stabilization preset."""

    space: str  # "pk" or "rt"
    tau: StabilizationSpec
    name: str = ""


METHODS = {
    "HDG1": Method("pk", TAU1, "HDG1"),
    "HDG2": Method("pk", TAU2, "HDG2"),
    "HDG3": Method("rt", TAU1, "HDG3"),
}


def get_method(method) -> Method:
    if isinstance(method, Method):
        return method
    try:
        return METHODS[method.upper()]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None


# --- reference tables --------------------------------------------------------

class Tables:
    """Basis values at reference quadrature points for a given (k, space)."""

    def __init__(self, k: int, space: str, elem_degree: int | None = None, face_points: int | None = None):
        if space not in ("pk", "rt"):
            raise ValueError(f"unknown space {space!r}")
        self.k = k
        self.space = space
        self.nW = fb.scalar_dim(k)
        self.nV = fb.vector_dim(k, space)
        self.nM = k + 1
        self.nloc = self.nV + self.nW
        sb = fb.scalar_basis(k)
        self.elem_rule = triangle_quadrature(min(elem_degree if elem_degree is not None else 2 * k + 4, 12))
        xq = self.elem_rule.points
        self.xq = xq
        self.W = sb.values(xq)
        self.gW = sb.gradients(xq)
        nf = face_points if face_points is not None else k + 3
        self.face_rule = gauss_line(nf)
        self.t = self.face_rule.points[:, 0]
        self.wf = self.face_rule.weights
        self.xf = np.stack([fb.face_points_on_reference(j, self.t) for j in range(3)])  # (3,nqf,2)
        self.Wf = sb.values(self.xf)  # (3,nqf,nW)
        fbasis = fb.face_basis(k)
        # index 0: face parameter runs with the local edge; 1: against it
        self.Mf = np.stack([fbasis.values(self.t), fbasis.values(1.0 - self.t)])
        if space == "rt":
            _, mv, mg = fb.enrichment_monomials(k)
            self.R = mv(xq)
            self.gR = mg(xq)
            self.Rf = mv(self.xf)
        self.nR = self.nV - 2 * self.nW


@lru_cache(maxsize=None)
def tables(k: int, space: str) -> Tables:
    return Tables(k, space)


@dataclass
class Geometry:
    """Affine maps of a chunk of elements."""

    v0: np.ndarray  # (E,2)
    J: np.ndarray  # (E,2,2), columns v1-v0, v2-v0
    invJ: np.ndarray
    detJ: np.ndarray  # = 2|K|
    centroid: np.ndarray
    hK: np.ndarray
    verts: np.ndarray  # (E,3,2)

    @classmethod
    def of(cls, mesh: Mesh, idx) -> "Geometry":
        p = mesh.vertices[mesh.elements[idx]]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        return cls(p[:, 0], J, inv, det, p.mean(axis=1), np.sqrt(det / 2), p)

    def map(self, xref):
        """Reference points (..., 2) -> physical (E, ..., 2)."""
        return self.v0[:, None, :] + np.einsum("eab,qb->eqa", self.J, np.asarray(xref).reshape(-1, 2))

    def grad(self, gref):
        """Reference gradients (nq, n, 2) -> physical (E, nq, n, 2)."""
        return np.einsum("qib,eba->eqia", gref, self.invJ)

    def face(self, j):
        a = self.verts[:, j]
        b = self.verts[:, (j + 1) % 3]
        d = b - a
        L = np.hypot(d[:, 0], d[:, 1])
        n = np.column_stack([d[:, 1], -d[:, 0]]) / L[:, None]
        return L, n


def vector_values(tb: Tables, geo: Geometry, X, xref, W, gW=None, R=None, gR=None):
    """Vector basis (and divergence if gradients given) at points.

    X (E,nq,2) physical points, W (nq,nW) scalar values, gW (E,nq,nW,2)
    physical gradients, R/gR the enrichment monomials at the reference points.
    """
    E, nq = X.shape[:2]
    nW = tb.nW
    V = np.zeros((E, nq, tb.nV, 2))
    V[:, :, :nW, 0] = W
    V[:, :, nW:2 * nW, 1] = W
    div = None
    if gW is not None:
        div = np.empty((E, nq, tb.nV))
        div[:, :, :nW] = gW[..., 0]
        div[:, :, nW:2 * nW] = gW[..., 1]
    if tb.space == "rt":
        rel = (X - geo.centroid[:, None, :]) / geo.hK[:, None, None]  # (E,nq,2)
        V[:, :, 2 * nW:, :] = R[None, :, :, None] * rel[:, :, None, :]
        if gW is not None:
            gRp = geo.grad(gR)  # (E,nq,nR,2)
            # div((x - c) m / h) = (2 m + (x - c) . grad m) / h
            div[:, :, 2 * nW:] = (2.0 * R[None] + np.einsum("eqa,eqia->eqi", X - geo.centroid[:, None, :], gRp)) \
                / geo.hK[:, None, None]
    return V, div


# --- local matrices ------------------------------------------------------------

@dataclass
class LocalMatrices:
    """Batched element systems.

    ``A [q; u] = -Bl @ lam + F`` are the local problems; the trace rows are
    ``C [q; u]`` (moments of q.n + tau u against the face basis) and ``tau``
    holds tau per face (tau <lam, mu> is tau * identity in the orthonormal
    face basis).
    """

    A: np.ndarray  # (E, nloc, nloc)
    Bl: np.ndarray  # (E, nloc, 3nM)
    F: np.ndarray  # (E, nloc)
    C: np.ndarray  # (E, 3nM, nloc)
    tau: np.ndarray  # (E, 3)
    nV: int
    nW: int
    nM: int

    @property
    def A_qq(self):
        return self.A[:, :self.nV, :self.nV]

    @property
    def A_qu(self):
        return self.A[:, :self.nV, self.nV:]

    @property
    def A_uq(self):
        return self.A[:, self.nV:, :self.nV]

    @property
    def A_uu(self):
        return self.A[:, self.nV:, self.nV:]

    @property
    def A_ql(self):
        return self.Bl[:, :self.nV]

    @property
    def A_ul(self):
        return self.Bl[:, self.nV:]


def assemble_local(mesh: Mesh, problem: ProblemSpec, tau_spec: StabilizationSpec, k: int, space: str = "pk",
                   elements=None, tau=None) -> LocalMatrices:
    """Element matrices of the local problems for the given elements (default: all)."""
    tb = tables(k, space)
    idx = np.arange(mesh.n_elements) if elements is None else np.atleast_1d(np.asarray(elements))
    if tau is None:
        tau = mesh_tau(mesh, tau_spec, problem.beta, problem.epsilon)
    tau = np.asarray(tau, float)[idx]
    geo = Geometry.of(mesh, idx)
    sign = mesh.elem_face_sign[idx]
    return _local(tb, geo, sign, problem, tau)


def _local(tb: Tables, geo: Geometry, sign, problem: ProblemSpec, tau) -> LocalMatrices:
    eps = problem.epsilon
    E = len(geo.detJ)
    nV, nW, nM = tb.nV, tb.nW, tb.nM
    X = geo.map(tb.xq)
    dx = tb.elem_rule.weights[None, :] * np.abs(geo.detJ)[:, None]
    gW = geo.grad(tb.gW)
    R = getattr(tb, "R", None)
    V, divV = vector_values(tb, geo, X, tb.xq, tb.W, gW, R, getattr(tb, "gR", None))
    b = problem.beta(X[..., 0], X[..., 1])  # (2,E,nq)
    divb = problem.beta.div(X[..., 0], X[..., 1])
    fq = problem.f(X[..., 0], X[..., 1])

    A = np.zeros((E, tb.nloc, tb.nloc))
    A[:, :nV, :nV] = np.einsum("eq,eqia,eqja->eij", dx, V, V) / eps
    Bdiv = np.einsum("eq,eqi,qj->eij", dx, divV, tb.W)  # (div r, w)
    A[:, :nV, nV:] = -Bdiv
    A[:, nV:, :nV] = Bdiv.transpose(0, 2, 1)
    # -(u, div(beta w)) = -(u, (div beta) w + beta . grad w)
    dbw = divb[..., None] * tb.W[None] + np.einsum("aeq,eqia->eqi", b, gW)
    A[:, nV:, nV:] = -np.einsum("eq,eqi,qj->eij", dx, dbw, tb.W)

    F = np.zeros((E, tb.nloc))
    F[:, nV:] = np.einsum("eq,eq,qi->ei", dx, fq, tb.W)

    Bl = np.zeros((E, tb.nloc, 3 * nM))
    C = np.zeros((E, 3 * nM, tb.nloc))
    for j in range(3):
        L, n = geo.face(j)
        Xf = geo.map(tb.xf[j])
        ds = tb.wf[None, :] * L[:, None]
        Rf = tb.Rf[j] if tb.space == "rt" else None
        Vf, _ = vector_values(tb, geo, Xf, tb.xf[j], tb.Wf[j], R=Rf)
        Vn = np.einsum("eqia,ea->eqi", Vf, n)
        Mf = np.where((sign[:, j] > 0)[:, None, None], tb.Mf[0][None], tb.Mf[1][None]) / np.sqrt(L)[:, None, None]
        bf = problem.beta(Xf[..., 0], Xf[..., 1])
        bn = bf[0] * n[:, None, 0] + bf[1] * n[:, None, 1]
        Wf = tb.Wf[j]
        cols = slice(j * nM, (j + 1) * nM)
        # <lam, r.n>
        Aql = np.einsum("eq,eqi,eqm->eim", ds, Vn, Mf)
        Bl[:, :nV, cols] = Aql
        # -<(tau - beta.n) lam, w>
        Bl[:, nV:, cols] = -np.einsum("eq,eq,qi,eqm->eim", ds, tau[:, j, None] - bn, Wf, Mf)
        # <tau u, w>
        A[:, nV:, nV:] += tau[:, j, None, None] * np.einsum("eq,qi,qj->eij", ds, Wf, Wf)
        C[:, cols, :nV] = Aql.transpose(0, 2, 1)
        C[:, cols, nV:] = tau[:, j, None, None] * np.einsum("eq,qi,eqm->emi", ds, Wf, Mf)
    return LocalMatrices(A, Bl, F, C, tau, nV, nW, nM)


# --- condensation ------------------------------------------------------------

class LocalSolveError(np.linalg.LinAlgError):
    pass


@dataclass
class CondensedElements:
    """Per-element Schur complements and recovery maps.

    ``S`` realizes a_h on the element, ``G`` b_h.  Element unknowns are
    recovered as ``[q; u] = Rl @ lam + Rf``.
    """

    S: np.ndarray  # (E, 3nM, 3nM)
    G: np.ndarray  # (E, 3nM)
    Rl: np.ndarray  # (E, nloc, 3nM)
    Rf: np.ndarray  # (E, nloc)
    nV: int
    nW: int
    nM: int

    @property
    def R_q(self):
        return self.Rl[:, :self.nV], self.Rf[:, :self.nV]

    @property
    def R_u(self):
        return self.Rl[:, self.nV:], self.Rf[:, self.nV:]


def condense(local: LocalMatrices, element_ids=None) -> CondensedElements:
    rhs = np.concatenate([-local.Bl, local.F[..., None]], axis=2)
    try:
        sol = np.linalg.solve(local.A, rhs)
    except np.linalg.LinAlgError:
        bad = [i for i in range(len(local.A)) if not np.all(np.isfinite(np.linalg.svd(local.A[i], compute_uv=False)))
               or np.linalg.cond(local.A[i]) > 1e15]
        ids = [int(element_ids[i]) if element_ids is not None else i for i in bad]
        conds = [float(np.linalg.cond(local.A[i])) for i in bad]
        raise LocalSolveError(f"singular local problem on elements {ids} (condition {conds})") from None
    Rl = sol[..., :-1]
    Rf = sol[..., -1]
    nM = local.nM
    T = np.repeat(local.tau, nM, axis=1)
    S = -np.einsum("eij,ejk->eik", local.C, Rl)
    S[:, np.arange(3 * nM), np.arange(3 * nM)] += T
    G = np.einsum("eij,ej->ei", local.C, Rf)
    return CondensedElements(S, G, Rl, Rf, local.nV, local.nW, nM)


# --- global trace system -------------------------------------------------------

def project_face_data(mesh: Mesh, func, k: int, faces, npoints: int | None = None) -> np.ndarray:
    """L2 projection of func(x, y) onto P_k of each listed face; (len(faces), k+1)."""
    faces = np.asarray(faces, dtype=np.int64)
    rule = gauss_line(npoints if npoints is not None else k + 3)
    t = rule.points[:, 0]
    a = mesh.vertices[mesh.faces[faces, 0]]
    b = mesh.vertices[mesh.faces[faces, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    L = np.hypot(*(b - a).T)
    vals = func(pts[..., 0], pts[..., 1])
    psi = fb.face_basis(k).values(t)
    return np.einsum("q,fq,qm->fm", rule.weights, vals, psi) * np.sqrt(L)[:, None]


@dataclass
class TraceSystem:
    matrix: sps.csr_matrix
    rhs: np.ndarray
    dof_of_face: np.ndarray  # (nF,) index of first dof, -1 for known faces
    known: np.ndarray  # (nF, nM) fixed coefficients (P_M g on boundary/slit), zero elsewhere
    nM: int
    scaling: np.ndarray | None = None  # diagonal D, matrix is D^-1 A D^-1 when set

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    def unknown_faces(self) -> np.ndarray:
        return np.flatnonzero(self.dof_of_face >= 0)


def known_face_values(mesh: Mesh, problem: ProblemSpec, k: int) -> np.ndarray:
    vals = np.zeros((mesh.n_faces, k + 1))
    bdry = np.flatnonzero(mesh.face_kind == BOUNDARY)
    if len(bdry):
        vals[bdry] = project_face_data(mesh, problem.g, k, bdry)
    slit = np.flatnonzero(mesh.face_kind == SLIT)
    if len(slit):
        data = problem.slit_data if problem.slit_data is not None else problem.g
        vals[slit] = project_face_data(mesh, data, k, slit)
    return vals


def assemble_global(mesh: Mesh, condensed: CondensedElements, problem: ProblemSpec, k: int) -> TraceSystem:
    """Trace system over interior faces; boundary and slit traces fixed to P_M g."""
    nM = k + 1
    if condensed.nM != nM:
        raise ValueError("condensed elements were built for a different degree")
    unknown = mesh.face_kind == INTERIOR
    dof_of_face = np.full(mesh.n_faces, -1, dtype=np.int64)
    dof_of_face[unknown] = np.arange(np.count_nonzero(unknown)) * nM
    n = int(np.count_nonzero(unknown)) * nM
    known = known_face_values(mesh, problem, k)

    ef = mesh.elem_faces
    gdof = (dof_of_face[ef][:, :, None] + np.arange(nM)).reshape(len(ef), 3 * nM)
    gdof[np.repeat(~unknown[ef], nM, axis=1)] = -1
    lam_known = known[ef].reshape(len(ef), 3 * nM)

    S, G = condensed.S, condensed.G
    rhs_loc = G - np.einsum("eij,ej->ei", S, lam_known)
    rows = np.broadcast_to(gdof[:, :, None], S.shape)
    cols = np.broadcast_to(gdof[:, None, :], S.shape)
    keep = (rows >= 0) & (cols >= 0)
    A = sps.coo_matrix((S[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    rhs = np.zeros(n)
    rmask = gdof >= 0
    np.add.at(rhs, gdof[rmask], rhs_loc[rmask])
    return TraceSystem(A, rhs, dof_of_face, known, nM)


def face_scaling(mesh: Mesh, beta, epsilon: float) -> np.ndarray:
    """Lambda_eps per face: (sup_F |beta.n| + min(eps/h_F, 1))^(1/2)."""
    from .mesh import face_sample_params

    t = face_sample_params()
    pts = mesh.face_points(t)
    b = beta(pts[..., 0], pts[..., 1])
    n = mesh.face_normals
    sup_abs = np.abs(b[0] * n[:, None, 0] + b[1] * n[:, None, 1]).max(axis=1)
    lam2 = sup_abs + np.minimum(epsilon / mesh.face_lengths, 1.0)
    if np.any(lam2 <= 0):
        raise ValueError("Lambda_eps vanishes on a face")
    return np.sqrt(lam2)


def apply_scaling(system: TraceSystem, mesh: Mesh, beta, epsilon: float, mode: str = "scaled") -> TraceSystem:
    """Return the system in the variables lam~ = Lambda_eps lam (D^-1 A D^-1, D^-1 b)."""
    if mode == "unscaled":
        return system
    if mode != "scaled":
        raise ValueError("mode must be 'scaled' or 'unscaled'")
    lam = face_scaling(mesh, beta, epsilon)
    faces = system.unknown_faces()
    d = np.repeat(lam[faces], system.nM)
    dinv = sps.diags(1.0 / d)
    A = (dinv @ system.matrix @ dinv).tocsr()
    return TraceSystem(A, system.rhs / d, system.dof_of_face, system.known, system.nM, d)


def solve_trace(system: TraceSystem) -> np.ndarray:
    """Trace coefficients for every face, (nF, nM), de-scaled."""
    uh = system.known.copy()
    if system.n_dofs:
        try:
            x = LUFactors(system.matrix).solve(system.rhs)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"trace system breakdown: {exc}") from exc
        if system.scaling is not None:
            x = x / system.scaling
        faces = system.unknown_faces()
        uh[faces] = x.reshape(-1, system.nM)
    return uh


# --- solution ------------------------------------------------------------------

@dataclass
class HdgSolution:
    mesh: Mesh
    problem: ProblemSpec
    k: int
    space: str
    tau_spec: StabilizationSpec
    tau: np.ndarray  # (nE, 3)
    q: np.ndarray  # (nE, nV)
    u: np.ndarray  # (nE, nW)
    uhat: np.ndarray  # (nF, nM)
    system: TraceSystem | None = None

    def eval_u(self, xref) -> np.ndarray:
        """u_h at reference points on every element, (nE, npts)."""
        return self.u @ fb.scalar_basis(self.k).values(np.asarray(xref).reshape(-1, 2)).T

    def eval_q(self, xref, elements=None) -> np.ndarray:
        """q_h at reference points, (E, npts, 2)."""
        idx = np.arange(self.mesh.n_elements) if elements is None else np.asarray(elements)
        tb = tables(self.k, self.space)
        xref = np.asarray(xref).reshape(-1, 2)
        geo = Geometry.of(self.mesh, idx)
        X = geo.map(xref)
        W = fb.scalar_basis(self.k).values(xref)
        R = fb.enrichment_monomials(self.k)[1](xref) if self.space == "rt" else None
        V, _ = vector_values(tb, geo, X, xref, W, R=R)
        return np.einsum("eqia,ei->eqa", V, self.q[idx])

    def element_traces(self) -> np.ndarray:
        """uhat gathered per element, (nE, 3*nM)."""
        return self.uhat[self.mesh.elem_faces].reshape(self.mesh.n_elements, -1)


def build_condensed(mesh: Mesh, problem: ProblemSpec, tau_spec: StabilizationSpec, k: int, space: str,
                    tau=None):
    """Local assembly + condensation in chunks; returns (CondensedElements, tau)."""
    if tau is None:
        tau = mesh_tau(mesh, tau_spec, problem.beta, problem.epsilon)
    tb = tables(k, space)
    parts = []
    for start in range(0, mesh.n_elements, CHUNK):
        idx = np.arange(start, min(start + CHUNK, mesh.n_elements))
        geo = Geometry.of(mesh, idx)
        loc = _local(tb, geo, mesh.elem_face_sign[idx], problem, tau[idx])
        parts.append(condense(loc, idx))
    cat = CondensedElements(*(np.concatenate([getattr(p, a) for p in parts]) for a in ("S", "G", "Rl", "Rf")),
                            tb.nV, tb.nW, tb.nM)
    return cat, tau


def recover(condensed: CondensedElements, mesh: Mesh, uhat: np.ndarray):
    lam = uhat[mesh.elem_faces].reshape(mesh.n_elements, -1)
    loc = np.einsum("eij,ej->ei", condensed.Rl, lam) + condensed.Rf
    return loc[:, :condensed.nV], loc[:, condensed.nV:]


def solve_hdg(mesh: Mesh, problem: ProblemSpec, tau_spec: StabilizationSpec | None = None, k: int = 1,
              space: str | None = None, scaling: str = "unscaled", method=None,
              check_tau: bool = True) -> HdgSolution:
    """Solve the HDG system by static condensation.

    Either pass ``method`` ("HDG1"/"HDG2"/"HDG3") or ``tau_spec`` and ``space``.
    """
    if method is not None:
        m = get_method(method)
        tau_spec = tau_spec or m.tau
        space = space or m.space
    tau_spec = tau_spec or TAU1
    space = space or "pk"
    if problem.slit is not None and not np.any(mesh.face_kind == SLIT):
        mesh = mesh.with_slit(*problem.slit)
    if check_tau:
        rep = validate_tau(mesh, tau_spec, problem.beta, problem.epsilon)
        if not rep.passed:
            raise ValueError(f"stabilization violates the well-posedness condition: "
                             f"{len(rep.violations)} negative faces, {len(rep.no_strict_face)} elements "
                             f"without a strictly positive face")
    condensed, tau = build_condensed(mesh, problem, tau_spec, k, space)
    system = assemble_global(mesh, condensed, problem, k)
    system = apply_scaling(system, mesh, problem.beta, problem.epsilon, scaling)
    uhat = solve_trace(system)
    q, u = recover(condensed, mesh, uhat)
    return HdgSolution(mesh, problem, k, space, tau_spec, tau, q, u, uhat, system)


def trace_matrix(mesh: Mesh, problem: ProblemSpec, k: int, method="HDG1", scaling: str = "unscaled",
                 tau_spec: StabilizationSpec | None = None, space: str | None = None) -> TraceSystem:
    """Assembled (optionally scaled) trace system without solving it."""
    m = get_method(method)
    tau_spec = tau_spec or m.tau
    space = space or m.space
    condensed, _ = build_condensed(mesh, problem, tau_spec, k, space)
    system = assemble_global(mesh, condensed, problem, k)
    return apply_scaling(system, mesh, problem.beta, problem.epsilon, scaling)


# --- fluxes ---------------------------------------------------------------------

def flux_moments(sol: HdgSolution) -> np.ndarray:
    """Moments <(q_h + beta u)^ . n, mu_m>_F on every (element, local face); (nE, 3, nM).

    The face basis is orthonormal, so these are also the coefficients of the
    flux's L2 projection onto P_k(F) (in the face's global parameter).
    """
    mesh = sol.mesh
    tb = tables(sol.k, sol.space)
    nM = tb.nM
    out = np.empty((mesh.n_elements, 3, nM))
    for start in range(0, mesh.n_elements, CHUNK):
        idx = np.arange(start, min(start + CHUNK, mesh.n_elements))
        geo = Geometry.of(mesh, idx)
        sign = mesh.elem_face_sign[idx]
        for j in range(3):
            L, n = geo.face(j)
            Xf = geo.map(tb.xf[j])
            ds = tb.wf[None, :] * L[:, None]
            Rf = tb.Rf[j] if tb.space == "rt" else None
            Vf, _ = vector_values(tb, geo, Xf, tb.xf[j], tb.Wf[j], R=Rf)
            qn = np.einsum("eqia,ea,ei->eq", Vf, n, sol.q[idx])
            uf = sol.u[idx] @ tb.Wf[j].T
            Mf = np.where((sign[:, j] > 0)[:, None, None], tb.Mf[0][None], tb.Mf[1][None]) \
                / np.sqrt(L)[:, None, None]
            uh = np.einsum("eqm,em->eq", Mf, sol.uhat[mesh.elem_faces[idx, j]])
            bf = sol.problem.beta(Xf[..., 0], Xf[..., 1])
            bn = bf[0] * n[:, None, 0] + bf[1] * n[:, None, 1]
            flux = qn + bn * uh + sol.tau[idx, j, None] * (uf - uh)
            out[idx, j] = np.einsum("eq,eq,eqm->em", ds, flux, Mf)
    return out


def numerical_flux(sol: HdgSolution, element: int, local_face: int) -> np.ndarray:
    """Face-basis coefficients of the numerical flux on one (element, face)."""
    return flux_moments(sol)[element, local_face]
