"""Conforming triangulations of the unit square.

Faces carry one fixed unit normal; ``elem_face_sign[K, j]`` is +1 when that
normal is outward for element K on its local face j and -1 otherwise.  Local
face j of an element joins its vertices j and j+1 (counterclockwise order).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

INTERIOR, BOUNDARY, SLIT = 0, 1, 2
NO_ELEMENT = -1


class FaceInfo(NamedTuple):
    vertex_ids: tuple[int, int]
    length: float
    unit_normal: np.ndarray
    left_elem: int
    right_elem: int
    kind: int


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (nV, 2)
    elements: np.ndarray  # (nE, 3) counterclockwise
    faces: np.ndarray = field(init=False)  # (nF, 2), vertex ids sorted
    elem_faces: np.ndarray = field(init=False)  # (nE, 3)
    elem_face_sign: np.ndarray = field(init=False)  # (nE, 3)
    face_elems: np.ndarray = field(init=False)  # (nF, 2) left/right, -1 if none
    face_kind: np.ndarray = field(init=False)

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        elems = np.ascontiguousarray(self.elements, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 2 or not np.all(np.isfinite(verts)):
            raise ValueError("vertices must be a finite (n, 2) array")
        if elems.ndim != 2 or elems.shape[1] != 3:
            raise ValueError("elements must be an (m, 3) index array")
        p = verts[elems]
        cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                 - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
        scale = np.max(np.abs(verts)) if verts.size else 1.0
        if np.any(np.abs(cross) <= 1e-14 * max(scale, 1.0) ** 2):
            raise ValueError("degenerate (collinear) element")
        flip = cross < 0
        elems[flip] = elems[flip][:, [0, 2, 1]]
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "elements", elems)
        self._build_faces()

    def _build_faces(self):
        elems = self.elements
        ne = len(elems)
        local = np.stack([elems, np.roll(elems, -1, axis=1)], axis=-1).reshape(-1, 2)
        key = np.sort(local, axis=1)
        faces, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        counts = np.bincount(inverse, minlength=len(faces))
        if np.any(counts > 2):
            raise ValueError("non-manifold mesh: a face is shared by more than two elements")
        sign = np.where(local[:, 0] == faces[inverse, 0], 1, -1)
        face_elems = np.full((len(faces), 2), NO_ELEMENT, dtype=np.int64)
        owner = np.repeat(np.arange(ne), 3)
        slot = np.where(sign > 0, 0, 1)
        if np.any(np.bincount(inverse * 2 + slot, minlength=2 * len(faces)) > 1):
            raise ValueError("inconsistent orientation between neighbouring elements")
        face_elems[inverse, slot] = owner
        kind = np.where(counts == 2, INTERIOR, BOUNDARY).astype(np.int8)
        for name, val in (("faces", faces), ("elem_faces", inverse.reshape(ne, 3)),
                          ("elem_face_sign", sign.reshape(ne, 3)),
                          ("face_elems", face_elems), ("face_kind", kind)):
            object.__setattr__(self, name, val)

    # geometry -----------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_interior_faces(self) -> int:
        return int(np.count_nonzero(self.face_kind == INTERIOR))

    @property
    def n_boundary_faces(self) -> int:
        return int(np.count_nonzero(self.face_kind == BOUNDARY))

    @property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.elements]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))

    @property
    def h_elem(self) -> np.ndarray:
        return np.sqrt(self.areas)

    @property
    def h(self) -> float:
        return float(self.h_elem.max())

    @property
    def face_lengths(self) -> np.ndarray:
        d = self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def face_normals(self) -> np.ndarray:
        d = self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.hypot(n[:, 0], n[:, 1])[:, None]

    @property
    def outward_normals(self) -> np.ndarray:
        """(nE, 3, 2) outward unit normals per local face."""
        return self.face_normals[self.elem_faces] * self.elem_face_sign[..., None]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    def face(self, i: int) -> FaceInfo:
        a, b = self.faces[i]
        return FaceInfo((int(a), int(b)), float(self.face_lengths[i]), self.face_normals[i],
                        int(self.face_elems[i, 0]), int(self.face_elems[i, 1]), int(self.face_kind[i]))

    def face_points(self, t: np.ndarray) -> np.ndarray:
        """Points at parameters t in [0, 1] (from faces[:,0] to faces[:,1]); (nF, nt, 2)."""
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        t = np.asarray(t, float)
        return a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]

    def with_slit(self, start, end, tol: float = 1e-12) -> "Mesh":
        """Copy of the mesh with every interior face lying on segment [start, end] tagged as slit."""
        start = np.asarray(start, float)
        end = np.asarray(end, float)
        d = end - start
        L2 = d @ d
        ends = np.stack([self.vertices[self.faces[:, 0]], self.vertices[self.faces[:, 1]]], axis=1)
        rel = ends - start
        t = rel @ d / L2
        dist = np.abs(rel[..., 0] * d[1] - rel[..., 1] * d[0]) / np.sqrt(L2)
        on = np.all((dist < tol) & (t > -tol) & (t < 1 + tol), axis=1) & (self.face_kind == INTERIOR)
        if not np.any(on):
            raise ValueError("slit segment is not a union of mesh faces")
        m = Mesh(self.vertices, self.elements)
        kind = m.face_kind.copy()
        kind[on] = SLIT
        object.__setattr__(m, "face_kind", kind)
        return m

    def canonical(self) -> tuple[np.ndarray, np.ndarray]:
        """Vertex coordinates and connectivity in a relabelling-invariant order."""
        order = np.lexsort((np.round(self.vertices[:, 0], 12), np.round(self.vertices[:, 1], 12)))
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        tri = np.sort(rank[self.elements], axis=1)
        tri = tri[np.lexsort(tri.T[::-1])]
        return self.vertices[order], tri

    def validate(self) -> None:
        """Raise ValueError when the mesh breaks a structural invariant."""
        if np.any(self.areas <= 0):
            raise ValueError("element with nonpositive area")
        interior = self.face_kind != BOUNDARY
        if np.any(self.face_elems[interior] < 0):
            raise ValueError("interior face without two neighbours")
        # hanging nodes: a vertex strictly inside some face
        p = self.vertices
        a = p[self.faces[:, 0]]
        b = p[self.faces[:, 1]]
        used = np.unique(self.elements)
        for i in range(len(self.faces)):
            d = b[i] - a[i]
            rel = p[used] - a[i]
            t = rel @ d / (d @ d)
            dist = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0])
            if np.any((t > 1e-12) & (t < 1 - 1e-12) & (dist < 1e-12 * (d @ d))):
                raise ValueError(f"hanging node on face {i}")


def structured_unit_square(n: int, diagonal: str = "NE") -> Mesh:
    """n x n squares, each split in two triangles along its NE or NW diagonal."""
    if n < 1:
        raise ValueError("need at least one subdivision per side")
    diagonal = diagonal.upper()
    if diagonal not in ("NE", "NW"):
        raise ValueError("diagonal must be 'NE' or 'NW'")
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i = i.ravel()
    j = j.ravel()
    p00 = i + (n + 1) * j
    p10 = p00 + 1
    p01 = p00 + n + 1
    p11 = p01 + 1
    if diagonal == "NE":
        lower = np.column_stack([p00, p10, p11])
        upper = np.column_stack([p00, p11, p01])
    else:
        lower = np.column_stack([p00, p10, p01])
        upper = np.column_stack([p10, p11, p01])
    elems = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(verts, elems)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children through edge midpoints."""
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.faces[:, 0]] + mesh.vertices[mesh.faces[:, 1]])
    verts = np.vstack([mesh.vertices, mids])
    v = mesh.elements
    m = nv + mesh.elem_faces  # m[:, j] is the midpoint of (v_j, v_{j+1})
    children = np.stack([
        np.column_stack([v[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([m[:, 0], v[:, 1], m[:, 1]]),
        np.column_stack([m[:, 2], m[:, 1], v[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ], axis=1).reshape(-1, 3)
    refined = Mesh(verts, children)
    slit = mesh.face_kind == SLIT
    if np.any(slit):
        kind = refined.face_kind.copy()
        mid_of = {int(f): nv + int(f) for f in np.flatnonzero(slit)}
        slit_edges = set()
        for f, mv in mid_of.items():
            a, b = mesh.faces[f]
            slit_edges.add(tuple(sorted((int(a), mv))))
            slit_edges.add(tuple(sorted((int(b), mv))))
        for i, (a, b) in enumerate(refined.faces):
            if (int(a), int(b)) in slit_edges:
                kind[i] = SLIT
        object.__setattr__(refined, "face_kind", kind)
    return refined


@dataclass
class MeshAssumptionReport:
    passed: bool
    violations: list[tuple[int, int, float]]  # (element, local face, max(sup beta.n, 0))
    outflow_face: np.ndarray  # (nE,) local index of F_K^+


def face_sample_params(ngauss: int = 5) -> np.ndarray:
    """Gauss points plus the two endpoints, used to estimate sup/inf over a face."""
    t, _ = np.polynomial.legendre.leggauss(ngauss)
    return np.concatenate([[0.0], (t + 1) / 2, [1.0]])


def sample_beta_dot_n(mesh: Mesh, beta, ngauss: int = 5) -> np.ndarray:
    """beta . n_outward at the sample points of every (element, local face); (nE, 3, ns)."""
    t = face_sample_params(ngauss)
    pts = mesh.face_points(t)  # (nF, ns, 2)
    b = beta(pts[..., 0], pts[..., 1])
    bn = b[0] * mesh.face_normals[:, None, 0] + b[1] * mesh.face_normals[:, None, 1]
    return bn[mesh.elem_faces] * mesh.elem_face_sign[..., None]


def check_mesh_assumption(mesh: Mesh, beta, C: float, rtol: float = 1e-12) -> MeshAssumptionReport:
    """Check max(sup_F beta.n, 0) <= C h_K on every face except the outflow face F_K^+.

    Values within ``rtol * max|beta.n|`` of the bound count as satisfied, so
    roundoff on faces aligned with beta is not reported.
    """
    bn = sample_beta_dot_n(mesh, beta)
    sup = bn.max(axis=2)  # (nE, 3)
    plus = np.argmax(sup, axis=1)  # lowest index wins ties
    val = np.maximum(sup, 0.0)
    bound = C * mesh.h_elem + rtol * max(float(np.abs(bn).max()), 1.0)
    bad = val > bound[:, None]
    bad[np.arange(mesh.n_elements), plus] = False
    viol = [(int(e), int(j), float(val[e, j])) for e, j in zip(*np.nonzero(bad))]
    return MeshAssumptionReport(not viol, viol, plus)
