"""Streamline-aligned triangulations of the unit square.

Nodes are placed on the outflow boundary, traced backwards along beta with
forward Euler (step h/|beta|) until they leave the square, then the point
cloud is Delaunay-triangulated.  Elements that break the special-mesh
condition are repaired by edge flips.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .mesh import BOUNDARY, Mesh, MeshAssumptionReport, check_mesh_assumption, face_sample_params

SIDES = (  # start, end, outward normal
    (np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, -1.0])),
    (np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.array([1.0, 0.0])),
    (np.array([1.0, 1.0]), np.array([0.0, 1.0]), np.array([0.0, 1.0])),
    (np.array([0.0, 1.0]), np.array([0.0, 0.0]), np.array([-1.0, 0.0])),
)
CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class MeshRepairError(RuntimeError):
    """Repair did not reach a mesh satisfying the special-mesh condition."""

    def __init__(self, message, mesh: Mesh, report: MeshAssumptionReport):
        super().__init__(message)
        self.mesh = mesh
        self.report = report


@dataclass
class StreamlineMesh:
    mesh: Mesh
    chains: list[np.ndarray]
    report: MeshAssumptionReport
    sweeps: int
    flips: int


def outflow_segments(beta, nsample: int = 401) -> list[tuple[np.ndarray, np.ndarray]]:
    """Maximal boundary segments with beta.n > 0, as (start, end) point pairs."""
    segs = []
    s = np.linspace(0.0, 1.0, nsample)
    for a, b, n in SIDES:
        pts = a + s[:, None] * (b - a)
        bv = beta(pts[:, 0], pts[:, 1])
        out = bv[0] * n[0] + bv[1] * n[1] > 0
        i = 0
        while i < nsample:
            if out[i]:
                j = i
                while j + 1 < nsample and out[j + 1]:
                    j += 1
                segs.append((pts[i], pts[j]))
                i = j + 1
            else:
                i += 1
    return segs


def _exit_point(x0, x1):
    """Intersection of segment x0 -> x1 with the boundary of the unit square (x0 inside)."""
    d = x1 - x0
    t = 1.0
    for c in range(2):
        if d[c] < 0:
            t = min(t, -x0[c] / d[c])
        elif d[c] > 0:
            t = min(t, (1.0 - x0[c]) / d[c])
    return np.clip(x0 + t * d, 0.0, 1.0)


def trace_chain(beta, x0, h: float, max_steps: int = 100000) -> np.ndarray:
    """Backward streamline nodes from x0 until the chain leaves the square.

    The last node is clipped onto the boundary; a final piece shorter than
    h/2 is merged with the previous step.
    """
    pts = [np.asarray(x0, float)]
    x = pts[0]
    tol = 1e-12
    for _ in range(max_steps):
        b = np.array([float(v) for v in beta(x[0], x[1])])
        speed = np.hypot(*b)
        if speed == 0:
            raise ValueError("beta vanishes along a streamline")
        nxt = x - (h / speed) * b
        if np.all(nxt > -tol) and np.all(nxt < 1 + tol):
            pts.append(np.clip(nxt, 0.0, 1.0))
            x = pts[-1]
            continue
        end = _exit_point(x, nxt)
        if np.linalg.norm(end - x) < 0.5 * h and len(pts) > 1:
            pts.pop()
        pts.append(end)
        break
    else:
        raise RuntimeError("streamline did not leave the domain (closed streamline?)")
    return np.array(pts)


def _boundary_nodes(segs, h):
    nodes = []
    for a, b in segs:
        L = np.linalg.norm(b - a)
        m = max(int(np.ceil(L / h - 1e-9)), 1)
        for i in range(m + 1):
            nodes.append(a + (b - a) * i / m)
    return np.array(nodes) if nodes else np.zeros((0, 2))


def _dedupe(points, radius, priority_count):
    """Drop points within ``radius`` of an earlier kept point (earlier points win)."""
    kept = []
    tree_pts = []
    for i, p in enumerate(points):
        if tree_pts:
            d = np.min(np.linalg.norm(np.array(tree_pts) - p, axis=1))
            limit = 1e-9 if i < priority_count else radius
            if d < limit:
                continue
        kept.append(i)
        tree_pts.append(p)
    return points[kept]


def _face_sup(P, a, b, beta, ccw_sign=1.0):
    """max over samples of beta.n on edge a->b of a CCW triangle."""
    t = face_sample_params()
    pts = P[a] + t[:, None] * (P[b] - P[a])
    d = P[b] - P[a]
    n = np.array([d[1], -d[0]]) / np.hypot(*d)
    bv = beta(pts[:, 0], pts[:, 1])
    return float(np.max(bv[0] * n[0] + bv[1] * n[1]))


def _tri_violations(P, tri, beta, C):
    """Number of faces other than F+ with max(sup beta.n, 0) > C h_K for one CCW triangle."""
    a, b, c = tri
    area = 0.5 * ((P[b, 0] - P[a, 0]) * (P[c, 1] - P[a, 1]) - (P[b, 1] - P[a, 1]) * (P[c, 0] - P[a, 0]))
    if area <= 0:
        return 10
    sup = np.array([_face_sup(P, tri[j], tri[(j + 1) % 3], beta) for j in range(3)])
    plus = int(np.argmax(sup))
    val = np.maximum(sup, 0.0)
    val[plus] = 0.0
    return int(np.sum(val > C * np.sqrt(area)))


def _ccw(P, tri):
    a, b, c = tri
    cross = (P[b, 0] - P[a, 0]) * (P[c, 1] - P[a, 1]) - (P[b, 1] - P[a, 1]) * (P[c, 0] - P[a, 0])
    return tri if cross > 0 else [a, c, b]


def repair(P: np.ndarray, tris: np.ndarray, beta, C: float, max_sweeps: int = 20):
    """Edge flips on violating elements until the checker passes or the cap is hit."""
    tris = np.array(tris)
    flips = 0
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        mesh = Mesh(P, tris)
        rep = check_mesh_assumption(mesh, beta, C)
        if rep.passed:
            return mesh, rep, sweeps - 1, flips
        tris = mesh.elements.copy()
        changed = False
        touched = set()
        for e, jv, _ in rep.violations:
            # try the violating face first, then the element's other faces
            for j in (jv, (jv + 1) % 3, (jv + 2) % 3):
                if e in touched:
                    break
                f = mesh.elem_faces[e, j]
                if mesh.face_kind[f] == BOUNDARY:
                    continue
                e2 = int(mesh.face_elems[f, 0] if mesh.face_elems[f, 0] != e else mesh.face_elems[f, 1])
                if e2 in touched:
                    continue
                va, vb = tris[e, j], tris[e, (j + 1) % 3]
                vc = [v for v in tris[e] if v not in (va, vb)][0]
                vd = [v for v in tris[e2] if v not in (va, vb)][0]
                # the flip is only admissible for a strictly convex quadrilateral
                if not _convex(P, va, vd, vb, vc):
                    continue
                new1 = _ccw(P, [vc, vd, va])
                new2 = _ccw(P, [vd, vc, vb])
                old = _tri_violations(P, list(tris[e]), beta, C) + _tri_violations(P, list(tris[e2]), beta, C)
                new = _tri_violations(P, new1, beta, C) + _tri_violations(P, new2, beta, C)
                if new < old:
                    tris[e] = new1
                    tris[e2] = new2
                    touched.update((e, e2))
                    flips += 1
                    changed = True
        if not changed:
            break
    mesh = Mesh(P, tris)
    return mesh, check_mesh_assumption(mesh, beta, C), sweeps, flips


def _convex(P, a, c, b, d):
    quad = P[[a, c, b, d]]
    cross = []
    for i in range(4):
        p0, p1, p2 = quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]
        cross.append((p1[0] - p0[0]) * (p2[1] - p1[1]) - (p1[1] - p0[1]) * (p2[0] - p1[0]))
    cross = np.array(cross)
    return bool(np.all(cross > 1e-14) or np.all(cross < -1e-14))


def streamline_mesh(beta, h: float, C: float = 1.0, max_sweeps: int = 20, min_spacing: float = 0.3,
                    strict: bool = True) -> StreamlineMesh:
    """Triangulation whose node chains follow backward streamlines from the outflow boundary.

    Raises MeshRepairError (carrying the mesh and the violation list) when
    ``strict`` and the repair pass does not reach a passing mesh.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    s = np.linspace(0.0, 1.0, 21)
    X, Y = np.meshgrid(s, s)
    bv = beta(X, Y)
    if np.min(np.hypot(bv[0], bv[1])) <= 0:
        raise ValueError("beta vanishes in the domain")
    segs = outflow_segments(beta)
    seeds = _boundary_nodes(segs, h)
    if len(seeds):
        seeds = _dedupe(seeds, 1e-9, 0)
    chains = [trace_chain(beta, x0, h) for x0 in seeds]
    # chain nodes first (they carry the alignment), then the square's corners
    pts = [c for c in chains]
    allpts = np.vstack(pts + [CORNERS]) if pts else CORNERS.copy()
    n_prior = sum(len(c) for c in chains)
    # keep every chain node that is not a duplicate; corners only if not too close
    P = _merge_points(allpts, n_prior, min_spacing * h)
    tri = Delaunay(P)
    tris = tri.simplices
    p = P[tris]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    tris = tris[np.abs(area) > 1e-12 * h * h]
    mesh, rep, sweeps, flips = repair(P, tris, beta, C, max_sweeps)
    if strict and not rep.passed:
        raise MeshRepairError(f"special-mesh repair failed after {sweeps} sweeps; "
                              f"{len(rep.violations)} violating faces", mesh, rep)
    return StreamlineMesh(mesh, chains, rep, sweeps, flips)


def _merge_points(points, n_chain, radius):
    """Remove exact duplicates among chain nodes and snap clutter near the boundary.

    Chain nodes closer than ``radius`` to an earlier node are dropped when
    they are clipped boundary endpoints; corners replace any node closer
    than ``radius``.
    """
    tree = cKDTree(points)
    keep = np.ones(len(points), bool)
    on_bdry = np.any((points < 1e-12) | (points > 1 - 1e-12), axis=1)
    # corners take precedence over nearby boundary nodes
    for ci in range(n_chain, len(points)):
        for j in tree.query_ball_point(points[ci], radius):
            if j < n_chain and on_bdry[j] and np.linalg.norm(points[j] - points[ci]) > 0:
                keep[j] = False
    for i in range(n_chain):
        if not keep[i]:
            continue
        for j in tree.query_ball_point(points[i], radius if on_bdry[i] else 1e-9):
            if j > i and keep[j] and (on_bdry[j] or np.linalg.norm(points[j] - points[i]) < 1e-9):
                keep[j] = False
    return points[keep]
