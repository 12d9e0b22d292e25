import numpy as np
import pytest

from eigenmesh.mesh import MeshError
from eigenmesh.meshio import load_mesh, load_mesh_dir, save_mesh
from eigenmesh.synthetic import SynthConfig, make_template


def test_single_triangle_obj(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_mesh(path)
    assert mesh.vertex_count == 3
    assert mesh.topology.face_count == 1
    assert mesh.topology.edge_count == 3


def test_same_file_shares_topology(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    first = load_mesh(path)
    second = load_mesh(path, first.topology)
    assert second.topology is first.topology


def test_quad_face_rejected(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshError, match="non-triangle"):
        load_mesh(path)


def test_obj_slash_references(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n")
    mesh = load_mesh(path)
    assert mesh.topology.face_count == 1


def test_topology_mismatch_detected(tmp_path):
    a = tmp_path / "a.obj"
    b = tmp_path / "b.obj"
    a.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    b.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 3 2\n")
    first = load_mesh(a)
    with pytest.raises(MeshError, match="topology mismatch"):
        load_mesh(b, first.topology)


@pytest.mark.parametrize("ext,binary", [("obj", False), ("ply", False), ("ply", True)])
def test_template_round_trip(tmp_path, ext, binary):
    template, _ = make_template(SynthConfig(subdivisions=2))
    path = tmp_path / f"mesh.{ext}"
    save_mesh(template, path, binary=binary)
    back = load_mesh(path)
    assert np.array_equal(back.topology.faces, template.topology.faces)
    assert np.abs(back.vertices - template.vertices).max() < 1e-6


def test_binary_ply_bit_exact(tmp_path):
    template, _ = make_template(SynthConfig(subdivisions=2))
    path = tmp_path / "mesh.ply"
    save_mesh(template, path, binary=True)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, template.vertices)


def test_float32_binary_ply_reads(tmp_path):
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        "element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
        "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
    )
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype="<f4")
    face = np.array([3], dtype="u1").tobytes() + np.array([0, 1, 2], dtype="<i4").tobytes()
    path = tmp_path / "f32.ply"
    path.write_bytes(header.encode("ascii") + verts.tobytes() + face)
    mesh = load_mesh(path)
    assert mesh.vertex_count == 3
    assert np.allclose(mesh.vertices, verts)


def test_ascii_ply_round_trip(tmp_path):
    template, _ = make_template(SynthConfig(subdivisions=1))
    path = tmp_path / "mesh.ply"
    save_mesh(template, path, binary=False)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, template.vertices)  # %.17g round-trips


def test_save_unwritable_path(triangle_mesh, tmp_path):
    with pytest.raises(OSError):
        save_mesh(triangle_mesh, tmp_path / "missing_dir" / "x.obj")


def test_load_mesh_dir_shares_topology(tmp_path):
    template, _ = make_template(SynthConfig(subdivisions=1))
    for i in range(3):
        save_mesh(template, tmp_path / f"m{i}.ply")
    meshes = load_mesh_dir(tmp_path)
    assert len(meshes) == 3
    assert all(m.topology is meshes[0].topology for m in meshes)
