"""Moment-defined projections used as test oracles.

``project_elem_scalar`` matches interior moments against P_{k-1}(K) and the
trace moments on one chosen face; ``project_elem_vector`` matches interior
moments against P_{k-1}(K)^2 and the normal-trace moments on the two faces
other than a chosen one.  ``project_face`` is the face L2 projection.
Each is a small dense moment system per element.
"""
from __future__ import annotations

import numpy as np

from . import basis as fb
from .hdg import Geometry, project_face_data
from .mesh import Mesh
from .problems import StabilizationSpec, VelocityField, mesh_tau, sample_outward_bn
from .quadrature import gauss_line, triangle_quadrature


class ProjectionDefect(np.linalg.LinAlgError):
    pass


def project_face(mesh: Mesh, func, k: int, faces=None, npoints: int | None = None) -> np.ndarray:
    """L2 projection onto P_k(F) in the orthonormal face basis, shape (len(faces), k+1)."""
    faces = np.arange(mesh.n_faces) if faces is None else np.asarray(faces)
    return project_face_data(mesh, func, k, faces, npoints)


def star_faces(tau: np.ndarray) -> np.ndarray:
    """Local index of the face where tau is largest (lowest index on ties)."""
    return np.argmax(tau, axis=1)


def s_faces(mesh: Mesh, tau: np.ndarray, beta: VelocityField) -> np.ndarray:
    """Local index of the face maximizing inf_F (tau - beta.n/2) (lowest index on ties)."""
    margin = (tau[..., None] - 0.5 * sample_outward_bn(mesh, beta)).min(axis=2)
    return np.argmax(margin, axis=1)


def selected_faces(mesh: Mesh, spec: StabilizationSpec, beta: VelocityField, epsilon: float = 1.0):
    tau = mesh_tau(mesh, spec, beta, epsilon)
    return star_faces(tau), s_faces(mesh, tau, beta)


def _rules(k):
    rule = triangle_quadrature(min(2 * k + 6, 12))
    line = gauss_line(k + 4)
    return rule, line.points[:, 0], line.weights


def _face_data(geo: Geometry, faces: np.ndarray, t: np.ndarray):
    """Physical points, reference points, lengths and outward normals on the chosen local faces."""
    E = len(faces)
    xref = np.stack([fb.face_points_on_reference(j, t) for j in range(3)])[faces]  # (E,nt,2)
    X = geo.v0[:, None, :] + np.einsum("eab,eqb->eqa", geo.J, xref)
    L = np.empty(E)
    n = np.empty((E, 2))
    for j in range(3):
        m = faces == j
        if np.any(m):
            Lj, nj = geo.face(j)
            L[m] = Lj[m]
            n[m] = nj[m]
    return X, xref, L, n


def _solve(M, rhs):
    cond = np.linalg.cond(M)
    if not np.all(np.isfinite(cond)) or np.max(cond) > 1e13:
        raise ProjectionDefect(f"singular moment system (max cond {np.max(cond):.3e})")
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def project_elem_scalar(mesh: Mesh, u, k: int, star, elements=None) -> np.ndarray:
    """Pi_h u in the scalar basis, shape (E, dim P_k)."""
    idx = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    star = np.asarray(star)[idx] if np.ndim(star) else np.full(len(idx), int(star))
    geo = Geometry.of(mesh, idx)
    rule, t, wt = _rules(k)
    P = fb.scalar_basis(k).values(rule.points)
    X = geo.map(rule.points)
    uq = u(X[..., 0], X[..., 1])
    dx = rule.weights[None, :] * np.abs(geo.detJ)[:, None]
    E, n = len(idx), P.shape[1]
    M = np.zeros((E, n, n))
    rhs = np.zeros((E, n))
    r = 0
    if k >= 1:
        Q = fb.scalar_basis(k - 1).values(rule.points)
        r = Q.shape[1]
        M[:, :r] = np.einsum("eq,qi,qj->eij", dx, Q, P)
        rhs[:, :r] = np.einsum("eq,qi,eq->ei", dx, Q, uq)
    Xf, xf, L, _ = _face_data(geo, star, t)
    psi = fb.face_basis(k).values(t)
    Pf = fb.scalar_basis(k).values(xf.reshape(-1, 2)).reshape(E, len(t), n)
    ds = wt[None, :] * L[:, None]
    M[:, r:] = np.einsum("eq,qm,eqj->emj", ds, psi, Pf)
    rhs[:, r:] = np.einsum("eq,qm,eq->em", ds, psi, u(Xf[..., 0], Xf[..., 1]))
    return _solve(M, rhs)


def project_elem_vector(mesh: Mesh, q, k: int, sface, elements=None) -> np.ndarray:
    """Pi_h q in (P_k)^2, shape (E, dim P_k, 2) (scalar-basis coefficients per component).

    ``q(x, y)`` returns the two components stacked on the first axis.
    """
    idx = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    sface = np.asarray(sface)[idx] if np.ndim(sface) else np.full(len(idx), int(sface))
    geo = Geometry.of(mesh, idx)
    rule, t, wt = _rules(k)
    P = fb.scalar_basis(k).values(rule.points)
    X = geo.map(rule.points)
    qq = np.asarray(q(X[..., 0], X[..., 1]))
    dx = rule.weights[None, :] * np.abs(geo.detJ)[:, None]
    E, n = len(idx), P.shape[1]
    N = 2 * n  # unknowns ordered [component x (n), component y (n)]
    M = np.zeros((E, N, N))
    rhs = np.zeros((E, N))
    r = 0
    if k >= 1:
        Q = fb.scalar_basis(k - 1).values(rule.points)
        m = Q.shape[1]
        block = np.einsum("eq,qi,qj->eij", dx, Q, P)
        for c in range(2):
            M[:, r:r + m, c * n:(c + 1) * n] = block
            rhs[:, r:r + m] = np.einsum("eq,qi,eq->ei", dx, Q, qq[c])
            r += m
    psi = fb.face_basis(k).values(t)
    ds_w = wt
    for offset in (1, 2):
        faces = (sface + offset) % 3
        Xf, xf, L, nrm = _face_data(geo, faces, t)
        Pf = fb.scalar_basis(k).values(xf.reshape(-1, 2)).reshape(E, len(t), n)
        ds = ds_w[None, :] * L[:, None]
        for c in range(2):
            M[:, r:r + k + 1, c * n:(c + 1) * n] = np.einsum("eq,qm,eqj,e->emj", ds, psi, Pf, nrm[:, c])
        qf = np.asarray(q(Xf[..., 0], Xf[..., 1]))
        qn = qf[0] * nrm[:, None, 0] + qf[1] * nrm[:, None, 1]
        rhs[:, r:r + k + 1] = np.einsum("eq,qm,eq->em", ds, psi, qn)
        r += k + 1
    c = _solve(M, rhs)
    return np.stack([c[:, :n], c[:, n:]], axis=-1)


def vector_l2_error(coeffs: np.ndarray, k: int, q, mesh: Mesh) -> float:
    """||q - q_h|| for (P_k)^2 coefficients of shape (nE, dim, 2)."""
    rule = triangle_quadrature(min(2 * k + 6, 12))
    P = fb.scalar_basis(k).values(rule.points)
    geo = Geometry.of(mesh, np.arange(mesh.n_elements))
    X = geo.map(rule.points)
    qq = np.moveaxis(np.asarray(q(X[..., 0], X[..., 1])), 0, -1)
    qh = np.einsum("qi,eic->eqc", P, coeffs)
    dx = rule.weights[None, :] * np.abs(geo.detJ)[:, None]
    return float(np.sqrt(np.sum(dx[..., None] * (qq - qh) ** 2)))
