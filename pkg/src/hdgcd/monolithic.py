"""Dense all-unknowns HDG solve, used as an oracle for static condensation.

Everything here is written element by element in plain loops and uses the
un-integrated form of the scalar equation,

    -(q + beta u, grad w) - ((div beta) u, w) + <qhat.n, w> = (f, w),

with higher-order quadrature than the production assembler.  The face basis
is evaluated in each face's global parameter directly, without the
per-element orientation tables.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import basis as fb
from .mesh import INTERIOR, SLIT, Mesh
from .problems import ProblemSpec, StabilizationSpec, mesh_tau
from .quadrature import gauss_line, triangle_quadrature

ELEM_DEGREE = 12
FACE_POINTS = 10


class ElementEval:
    """Basis functions of one element evaluated at physical points."""

    def __init__(self, mesh: Mesh, e: int, k: int, space: str):
        self.mesh, self.e, self.k, self.space = mesh, e, k, space
        p = mesh.vertices[mesh.elements[e]]
        self.p = p
        self.J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        self.invJ = np.linalg.inv(self.J)
        self.area = 0.5 * abs(np.linalg.det(self.J))
        self.c = p.mean(axis=0)
        self.h = np.sqrt(self.area)
        self.sb = fb.scalar_basis(k)
        self.nW = self.sb.dim
        self.nV = fb.vector_dim(k, space)
        if space == "rt":
            _, self._mv, self._mg = fb.enrichment_monomials(k)

    def ref(self, X):
        return (np.asarray(X) - self.p[0]) @ self.invJ.T

    def w(self, X):
        return self.sb.values(self.ref(X))

    def grad_w(self, X):
        return self.sb.gradients(self.ref(X)) @ self.invJ  # (n, nW, 2)

    def v(self, X):
        """Vector basis values (n, nV, 2)."""
        X = np.asarray(X)
        W = self.w(X)
        V = np.zeros((len(X), self.nV, 2))
        V[:, :self.nW, 0] = W
        V[:, self.nW:2 * self.nW, 1] = W
        if self.space == "rt":
            m = self._mv(self.ref(X))
            V[:, 2 * self.nW:, :] = m[:, :, None] * ((X - self.c) / self.h)[:, None, :]
        return V

    def div_v(self, X):
        X = np.asarray(X)
        gW = self.grad_w(X)
        d = np.zeros((len(X), self.nV))
        d[:, :self.nW] = gW[..., 0]
        d[:, self.nW:2 * self.nW] = gW[..., 1]
        if self.space == "rt":
            xr = self.ref(X)
            m = self._mv(xr)
            gm = self._mg(xr) @ self.invJ
            d[:, 2 * self.nW:] = (2 * m + np.einsum("na,nia->ni", X - self.c, gm)) / self.h
        return d

    def volume_rule(self):
        rule = triangle_quadrature(ELEM_DEGREE)
        X = self.p[0] + rule.points @ self.J.T
        return X, rule.weights * 2 * self.area

    def face_rule(self, j):
        """Points, weights, outward normal and global face index of local face j."""
        a, b = self.p[j], self.p[(j + 1) % 3]
        line = gauss_line(FACE_POINTS)
        t = line.points[:, 0]
        X = a + t[:, None] * (b - a)
        L = np.linalg.norm(b - a)
        n = np.array([b[1] - a[1], a[0] - b[0]]) / L
        return X, line.weights * L, n, int(self.mesh.elem_faces[self.e, j])


def face_psi(mesh: Mesh, face: int, k: int, X):
    """Orthonormal face basis at points X of a face, in the face's own parameter."""
    a = mesh.vertices[mesh.faces[face, 0]]
    b = mesh.vertices[mesh.faces[face, 1]]
    d = b - a
    L2 = d @ d
    t = (np.asarray(X) - a) @ d / L2
    return fb.face_basis(k).values(t) / np.sqrt(np.sqrt(L2))


@dataclass
class MonolithicSolution:
    q: np.ndarray
    u: np.ndarray
    uhat: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray


def monolithic_solve(mesh: Mesh, problem: ProblemSpec, tau_spec: StabilizationSpec, k: int,
                     space: str = "pk", tau=None) -> MonolithicSolution:
    """Assemble and solve all HDG equations at once (dense; small meshes only)."""
    if problem.slit is not None and not np.any(mesh.face_kind == SLIT):
        mesh = mesh.with_slit(*problem.slit)
    if tau is None:
        tau = mesh_tau(mesh, tau_spec, problem.beta, problem.epsilon)
    eps = problem.epsilon
    nW = fb.scalar_dim(k)
    nV = fb.vector_dim(k, space)
    nloc = nV + nW
    nM = k + 1
    nE, nF = mesh.n_elements, mesh.n_faces
    N = nE * nloc + nF * nM
    A = np.zeros((N, N))
    b = np.zeros(N)

    def qs(e):
        return slice(e * nloc, e * nloc + nV)

    def us(e):
        return slice(e * nloc + nV, (e + 1) * nloc)

    def ls(f):
        return slice(nE * nloc + f * nM, nE * nloc + (f + 1) * nM)

    for e in range(nE):
        ev = ElementEval(mesh, e, k, space)
        X, wq = ev.volume_rule()
        V, dV, W, gW = ev.v(X), ev.div_v(X), ev.w(X), ev.grad_w(X)
        bx, by = problem.beta(X[:, 0], X[:, 1])
        beta = np.column_stack([bx, by])
        divb = problem.beta.div(X[:, 0], X[:, 1]) * np.ones(len(X))
        fq = problem.f(X[:, 0], X[:, 1])
        # first equation, test r
        A[qs(e), qs(e)] += np.einsum("n,nia,nja->ij", wq, V, V) / eps
        A[qs(e), us(e)] += -np.einsum("n,ni,nj->ij", wq, dV, W)
        # second equation, test w
        A[us(e), qs(e)] += -np.einsum("n,nia,nja->ij", wq, gW, V)
        A[us(e), us(e)] += -np.einsum("n,nia,na,nj->ij", wq, gW, beta, W)
        A[us(e), us(e)] += -np.einsum("n,n,ni,nj->ij", wq, divb, W, W)
        b[us(e)] += np.einsum("n,n,ni->i", wq, fq, W)
        for j in range(3):
            Xf, ws, n, f = ev.face_rule(j)
            t = tau[e, j]
            Vf, Wf = ev.v(Xf), ev.w(Xf)
            Vn = Vf @ n
            psi = face_psi(mesh, f, k, Xf)
            bfx, bfy = problem.beta(Xf[:, 0], Xf[:, 1])
            bn = bfx * n[0] + bfy * n[1]
            # <uhat, r.n>
            A[qs(e), ls(f)] += np.einsum("n,ni,nm->im", ws, Vn, psi)
            # <q.n + beta.n uhat + tau (u - uhat), w>
            A[us(e), qs(e)] += np.einsum("n,ni,nj->ij", ws, Wf, Vn)
            A[us(e), us(e)] += t * np.einsum("n,ni,nj->ij", ws, Wf, Wf)
            A[us(e), ls(f)] += np.einsum("n,n,ni,nm->im", ws, bn - t, Wf, psi)
            if mesh.face_kind[f] == INTERIOR:
                # transmission: sum over both sides of <flux, mu>
                A[ls(f), qs(e)] += np.einsum("n,nm,nj->mj", ws, psi, Vn)
                A[ls(f), us(e)] += t * np.einsum("n,nm,nj->mj", ws, psi, Wf)
                A[ls(f), ls(f)] += np.einsum("n,n,nm,nl->ml", ws, bn - t, psi, psi)

    for f in np.flatnonzero(mesh.face_kind != INTERIOR):
        a = mesh.vertices[mesh.faces[f, 0]]
        c = mesh.vertices[mesh.faces[f, 1]]
        line = gauss_line(FACE_POINTS)
        Xf = a + line.points[:, 0][:, None] * (c - a)
        ws = line.weights * np.linalg.norm(c - a)
        psi = face_psi(mesh, f, k, Xf)
        data = problem.g
        if mesh.face_kind[f] == SLIT and problem.slit_data is not None:
            data = problem.slit_data
        A[ls(f), ls(f)] += np.einsum("n,nm,nl->ml", ws, psi, psi)
        b[ls(f)] += np.einsum("n,n,nm->m", ws, data(Xf[:, 0], Xf[:, 1]) * np.ones(len(Xf)), psi)

    x = np.linalg.solve(A, b)
    loc = x[:nE * nloc].reshape(nE, nloc)
    return MonolithicSolution(loc[:, :nV], loc[:, nV:], x[nE * nloc:].reshape(nF, nM), A, b)
