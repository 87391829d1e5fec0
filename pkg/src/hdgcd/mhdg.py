"""Mixed-hybrid DG (upwind {lambda/u} flux) trace matrix, assembled independently.

The MH-DG form is

    B((q,u,lam),(r,w,mu)) = (q/eps, r) - (u, div r) + <lam, r.n>
                            - (q + beta u, grad w) + <q.n + beta.n {lam/u}, w - mu>

on the RT-type space, with {lam/u} = lam where beta.n < 0 and u otherwise,
for elementwise-constant beta and zero boundary data.  Condensing the
element unknowns gives a matrix on interior-face traces that must coincide
with the HDG trace matrix built with tau = max(beta.n, 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import basis as fb
from .hdg import assemble_global, build_condensed
from .mesh import INTERIOR, Mesh
from .monolithic import ElementEval, face_psi
from .problems import TAU1, ProblemSpec


def mhdg_trace_matrix(mesh: Mesh, problem: ProblemSpec, k: int) -> np.ndarray:
    """Schur complement of the MH-DG system onto interior-face traces (dense)."""
    if not problem.beta.is_piecewise_constant:
        raise ValueError("MH-DG comparison requires an elementwise-constant beta")
    eps = problem.epsilon
    nW = fb.scalar_dim(k)
    nV = fb.vector_dim(k, "rt")
    nloc = nV + nW
    nM = k + 1
    nE = mesh.n_elements
    interior = np.flatnonzero(mesh.face_kind == INTERIOR)
    dof = np.full(mesh.n_faces, -1)
    dof[interior] = np.arange(len(interior))
    nL = len(interior) * nM
    N = nE * nloc + nL
    B = np.zeros((N, N))

    def qs(e):
        return slice(e * nloc, e * nloc + nV)

    def us(e):
        return slice(e * nloc + nV, (e + 1) * nloc)

    for e in range(nE):
        ev = ElementEval(mesh, e, k, "rt")
        X, wq = ev.volume_rule()
        V, dV, W, gW = ev.v(X), ev.div_v(X), ev.w(X), ev.grad_w(X)
        bx, by = problem.beta(X[:, 0], X[:, 1])
        beta = np.column_stack([bx, by])
        # rows: test r then test w; columns: trial q, u
        B[qs(e), qs(e)] += np.einsum("n,nia,nja->ij", wq, V, V) / eps
        B[qs(e), us(e)] += -np.einsum("n,ni,nj->ij", wq, dV, W)
        B[us(e), qs(e)] += -np.einsum("n,nia,nja->ij", wq, gW, V)
        B[us(e), us(e)] += -np.einsum("n,nia,na,nj->ij", wq, gW, beta, W)
        for j in range(3):
            Xf, ws, n, f = ev.face_rule(j)
            Vn = ev.v(Xf) @ n
            Wf = ev.w(Xf)
            bfx, bfy = problem.beta(Xf[:, 0], Xf[:, 1])
            bn = bfx * n[0] + bfy * n[1]
            up = bn >= 0  # take u from this element
            has_lam = dof[f] >= 0
            if has_lam:
                psi = face_psi(mesh, f, k, Xf)
                ls = slice(nE * nloc + dof[f] * nM, nE * nloc + (dof[f] + 1) * nM)
                B[qs(e), ls] += np.einsum("n,ni,nm->im", ws, Vn, psi)
            # <q.n + beta.n {lam/u}, w - mu>, test w part
            B[us(e), qs(e)] += np.einsum("n,ni,nj->ij", ws, Wf, Vn)
            B[us(e), us(e)] += np.einsum("n,n,ni,nj->ij", ws, bn * up, Wf, Wf)
            if has_lam:
                B[us(e), ls] += np.einsum("n,n,ni,nm->im", ws, bn * ~up, Wf, psi)
                # test -mu part
                B[ls, qs(e)] -= np.einsum("n,nm,nj->mj", ws, psi, Vn)
                B[ls, us(e)] -= np.einsum("n,n,nm,nj->mj", ws, bn * up, psi, Wf)
                B[ls, ls] -= np.einsum("n,n,nm,nl->ml", ws, bn * ~up, psi, psi)
            # on boundary faces lam = 0 (M_h(0)), so the lam terms drop

    n_el = nE * nloc
    A = B[:n_el, :n_el]
    Bl = B[:n_el, n_el:]
    C = B[n_el:, :n_el]
    D = B[n_el:, n_el:]
    return D - C @ np.linalg.solve(A, Bl)


@dataclass
class EquivalenceReport:
    max_rel_diff: float
    equivalent: bool
    n_dofs: int
    hdg_space: str


def mhdg_equivalence_check(mesh: Mesh, problem: ProblemSpec, k: int, hdg_space: str = "rt",
                           tol: float = 1e-12) -> EquivalenceReport:
    """Compare the HDG (tau1, ``hdg_space``) trace matrix with the MH-DG one.

    The difference is measured relative to the largest MH-DG entry.
    """
    condensed, _ = build_condensed(mesh, problem, TAU1, k, hdg_space)
    A_hdg = assemble_global(mesh, condensed, problem, k).matrix.toarray()
    A_mh = mhdg_trace_matrix(mesh, problem, k)
    scale = max(np.abs(A_mh).max(), 1e-300)
    diff = float(np.abs(A_hdg - A_mh).max() / scale) if A_mh.size else 0.0
    return EquivalenceReport(diff, diff <= tol, A_mh.shape[0], hdg_space)
