import numpy as np
import pytest

from hdgcd.mesh import SLIT, structured_unit_square
from hdgcd.mesh_io import read_mesh, sample_field, subdivide_reference, write_mesh, write_vtk


def test_mesh_round_trip(tmp_path):
    mesh = structured_unit_square(3, "NW")
    write_mesh(mesh, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.elements, mesh.elements)
    np.testing.assert_array_equal(back.faces, mesh.faces)
    np.testing.assert_array_equal(back.face_kind, mesh.face_kind)
    head = (tmp_path / "m.txt").read_text().splitlines()[0]
    assert head == f"vertices 16 / elements 18 / faces {mesh.n_faces}"


def test_mesh_round_trip_keeps_slit(tmp_path):
    mesh = structured_unit_square(4).with_slit((0.0, 0.5), (0.5, 0.5))
    assert np.any(mesh.face_kind == SLIT)
    write_mesh(mesh, tmp_path / "m.txt")
    np.testing.assert_array_equal(read_mesh(tmp_path / "m.txt").face_kind, mesh.face_kind)


def test_bad_mesh_files(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("nonsense\n")
    with pytest.raises(ValueError):
        read_mesh(p)
    write_mesh(structured_unit_square(1), p)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValueError):
        read_mesh(p)


def test_vtk_layout(tmp_path):
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    tris = np.array([[0, 1, 2], [1, 3, 2]])
    write_vtk(tmp_path / "f.vtk", pts, tris, {"u": np.arange(4.0)}, title="demo")
    lines = (tmp_path / "f.vtk").read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 2.0"
    assert lines[1:5] == ["demo", "ASCII", "DATASET UNSTRUCTURED_GRID", "POINTS 4 double"]
    assert "CELLS 2 8" in lines and "CELL_TYPES 2" in lines and "POINT_DATA 4" in lines
    i = lines.index("SCALARS u double 1")
    assert [float(v) for v in lines[i + 2:i + 6]] == [0.0, 1.0, 2.0, 3.0]


@pytest.mark.parametrize("level", [0, 1, 2])
def test_subdivision_counts(level):
    pts, tris = subdivide_reference(level)
    m = 2 ** level
    assert len(pts) == (m + 1) * (m + 2) // 2
    assert len(tris) == 4 ** level
    p = pts[tris]
    area = 0.5 * np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    assert area.sum() == pytest.approx(0.5)


def test_sample_field_linear_values():
    from hdgcd.basis import scalar_basis
    from hdgcd.projections import project_elem_scalar

    mesh = structured_unit_square(2)
    u = lambda x, y: 2 * x - y + 0.5  # noqa: E731
    coeffs = project_elem_scalar(mesh, u, 1, 0)
    pts, tris, vals = sample_field(mesh, coeffs, 1, 1)
    assert len(pts) == mesh.n_elements * 6 and len(tris) == mesh.n_elements * 4
    np.testing.assert_allclose(vals, u(pts[:, 0], pts[:, 1]), atol=1e-12)
    assert scalar_basis(1).dim == coeffs.shape[1]
