"""Plain-text mesh files and legacy VTK output."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import SLIT, Mesh


def write_mesh(mesh: Mesh, path) -> None:
    """Header ``vertices N / elements M / faces P``, then one line per vertex, element and face.

    Face lines are ``a b kind`` with kind 0 interior, 1 boundary, 2 slit.
    """
    lines = [f"vertices {mesh.n_vertices} / elements {mesh.n_elements} / faces {mesh.n_faces}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.elements]
    lines += [f"{a} {b} {k}" for (a, b), k in zip(mesh.faces, mesh.face_kind)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    text = Path(path).read_text().splitlines()
    head = text[0].replace("/", " ").split()
    try:
        counts = dict(zip(head[0::2], (int(v) for v in head[1::2])))
        nv, ne, nf = counts["vertices"], counts["elements"], counts["faces"]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad mesh header: {text[0]!r}") from exc
    body = [ln.split() for ln in text[1:] if ln.strip()]
    if len(body) != nv + ne + nf:
        raise ValueError("mesh file line count does not match header")
    verts = np.array(body[:nv], float)
    elems = np.array(body[nv:nv + ne], np.int64)
    mesh = Mesh(verts, elems)
    if mesh.n_faces != nf:
        raise ValueError("face count in header does not match connectivity")
    faces = np.array(body[nv + ne:], np.int64)
    slit = faces[faces[:, 2] == SLIT, :2]
    if len(slit):
        key = {tuple(sorted(f)) for f in slit.tolist()}
        kind = mesh.face_kind.copy()
        for i, (a, b) in enumerate(mesh.faces):
            if (int(a), int(b)) in key:
                kind[i] = SLIT
        object.__setattr__(mesh, "face_kind", kind)
    return mesh


def subdivide_reference(level: int):
    """Reference points and sub-triangles of a triangle split 4**level times."""
    m = 2 ** level
    pts = []
    index = {}
    for j in range(m + 1):
        for i in range(m + 1 - j):
            index[i, j] = len(pts)
            pts.append((i / m, j / m))
    tris = []
    for j in range(m):
        for i in range(m - j):
            tris.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if i + j + 1 < m:
                tris.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    return np.array(pts), np.array(tris, np.int64)


def write_vtk(path, points: np.ndarray, triangles: np.ndarray, point_data: dict[str, np.ndarray],
              title: str = "hdgcd field") -> None:
    """Legacy ASCII unstructured grid (VTK 2.0) with scalar point data."""
    out = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(points)} double"]
    out += [f"{x:.12e} {y:.12e} 0" for x, y in points]
    out.append(f"CELLS {len(triangles)} {4 * len(triangles)}")
    out += [f"3 {a} {b} {c}" for a, b, c in triangles]
    out.append(f"CELL_TYPES {len(triangles)}")
    out += ["5"] * len(triangles)
    out.append(f"POINT_DATA {len(points)}")
    for name, vals in point_data.items():
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [f"{v:.12e}" for v in np.asarray(vals, float)]
    Path(path).write_text("\n".join(out) + "\n")


def sample_field(mesh: Mesh, coeffs: np.ndarray, degree: int, level: int):
    """Discontinuous plot data: every element sub-divided 4**level times.

    Returns (points, triangles, values); points are duplicated per element.
    """
    from . import basis as fb
    from .hdg import Geometry

    xref, sub = subdivide_reference(level)
    geo = Geometry.of(mesh, np.arange(mesh.n_elements))
    X = geo.map(xref)  # (nE, np, 2)
    vals = coeffs @ fb.scalar_basis(degree).values(xref).T
    npts = len(xref)
    tris = (sub[None, :, :] + npts * np.arange(mesh.n_elements)[:, None, None]).reshape(-1, 3)
    return X.reshape(-1, 2), tris, vals.reshape(-1)
