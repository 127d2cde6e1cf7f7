import struct

import numpy as np
import pytest

from symscan import meshio
from symscan.errors import EmptyGeometry, ParseError
from symscan.geometry import load_shape
from symscan.synthetic import cube_mesh

CUBE_OBJ = """# unit cube
v 0 0 0
v 0 0 1
v 0 1 0
v 0 1 1
v 1 0 0
v 1 0 1
v 1 1 0
v 1 1 1
f 1 2 4
f 1 4 3
f 5 7 8
f 5 8 6
f 1 5 6
f 1 6 2
f 3 4 8
f 3 8 7
f 1 3 7
f 1 7 5
f 2 6 8
f 2 8 4
"""


def test_load_cube_obj(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ)
    mesh = load_shape(str(path))
    assert len(mesh.vertices) == 8
    assert len(mesh.faces) == 12


def test_zero_area_face_dropped(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ + "f 1 1 2\n")  # degenerate 13th face
    mesh = load_shape(str(path))
    assert len(mesh.faces) == 12
    path2 = tmp_path / "cube2.obj"
    # replace one good face with a zero-area one: 11 survive
    lines = CUBE_OBJ.strip().splitlines()
    lines[-1] = "f 2 2 4"
    path2.write_text("\n".join(lines) + "\n")
    mesh2 = load_shape(str(path2))
    assert len(mesh2.faces) == 11


def test_truncated_obj(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0\n")
    with pytest.raises(ParseError):
        load_shape(str(path))


def test_all_faces_degenerate(tmp_path):
    path = tmp_path / "flat.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
    with pytest.raises(EmptyGeometry):
        load_shape(str(path))


def test_obj_polygon_triangulation(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    verts, faces = meshio.load_obj(str(path))
    assert len(faces) == 2


def test_ascii_ply_roundtrip(tmp_path):
    path = tmp_path / "tri.ply"
    path.write_bytes(b"""ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
3 0 1 2
""")
    verts, faces = meshio.load_ply(str(path))
    assert verts.shape == (3, 3)
    assert faces.tolist() == [[0, 1, 2]]


def test_binary_ply_roundtrip(tmp_path):
    path = tmp_path / "tri.ply"
    header = (b"ply\nformat binary_little_endian 1.0\n"
              b"element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
              b"element face 1\nproperty list uchar int vertex_indices\nend_header\n")
    body = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype="<f4").tobytes()
    body += struct.pack("<B3i", 3, 0, 1, 2)
    path.write_bytes(header + body)
    verts, faces = meshio.load_ply(str(path))
    assert np.allclose(verts, [[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    assert faces.tolist() == [[0, 1, 2]]


def test_ply_point_writer_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(50, 3)).astype(np.float32)
    path = tmp_path / "pts.ply"
    meshio.save_ply_points(str(path), pts)
    verts, faces = meshio.load_ply(str(path))
    assert len(faces) == 0
    assert np.allclose(verts, pts, atol=1e-6)
    # with colors
    colors = rng.integers(0, 255, size=(50, 3)).astype(np.uint8)
    meshio.save_ply_points(str(path), pts, colors)
    verts2, _ = meshio.load_ply(str(path))
    assert np.allclose(verts2, pts, atol=1e-6)


def test_save_obj_roundtrip(tmp_path):
    mesh = cube_mesh()
    path = tmp_path / "cube.obj"
    meshio.save_obj(str(path), mesh.vertices, mesh.faces)
    verts, faces = meshio.load_obj(str(path))
    assert np.allclose(verts, mesh.vertices)
    assert np.array_equal(faces, mesh.faces)


def test_truncated_binary_ply(tmp_path):
    path = tmp_path / "trunc.ply"
    header = (b"ply\nformat binary_little_endian 1.0\n"
              b"element vertex 10\nproperty float x\nproperty float y\nproperty float z\n"
              b"end_header\n")
    path.write_bytes(header + b"\x00" * 8)
    with pytest.raises(ParseError):
        meshio.load_ply(str(path))
