import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmapkit.mesh import (Mesh, ObjParseError, load_obj, one_ring, save_obj, validate_topology,
                          vertex_normals)
from gmapkit.synthetic import hexagon_patch, icosahedron, icosphere, planar_grid, random_disk_mesh

TRI = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]


def write(tmp_path, text, name="m.obj"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_single_triangle_obj(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert (m.n_vertices, m.n_triangles) == (3, 1)
    assert list(one_ring(m, 0)) == [1, 2]


def test_quad_is_fan_triangulated(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"))
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_out_of_range_face_names_line(tmp_path):
    with pytest.raises(ObjParseError, match="line 4"):
        load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n"))


def test_obj_tokens_comments_and_negative_indices(tmp_path):
    text = "# header\nv 0 0 0\nv 1 0 0\nvt 0 0\nv 0 1 0 # trailing\nvn 0 0 1\nf -3/1/1 -2/1/1 -1//1\n"
    m = load_obj(write(tmp_path, text))
    assert m.triangles.tolist() == [[0, 1, 2]]


@pytest.mark.parametrize("text,pattern", [
    ("v 0 0\nf 1 2 3\n", "line 1"),
    ("v 0 0 x\n", "line 1"),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n", "line 4"),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 a 3\n", "line 4"),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", "line 4"),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n", "line 4"),
    ("v 0 0 0\n", "no face"),
    ("f 1 2 3\n", "no vertex"),
])
def test_obj_parse_errors(tmp_path, text, pattern):
    with pytest.raises(ObjParseError, match=pattern):
        load_obj(write(tmp_path, text))


def test_save_load_roundtrip(tmp_path, rng):
    m = random_disk_mesh(80, rng)
    v = m.vertices * 123.456
    m = m.with_vertices(v)
    save_obj(m, tmp_path / "a.obj")
    back = load_obj(tmp_path / "a.obj")
    assert np.array_equal(back.triangles, m.triangles)
    assert np.abs(back.vertices - m.vertices).max() <= 5e-7


def test_mesh_rejects_bad_input():
    with pytest.raises(IndexError):
        Mesh(TRI, [[0, 1, 3]])
    with pytest.raises(ValueError):
        Mesh(TRI, [[0, 1, 1]])
    with pytest.raises(ValueError):
        Mesh([[0, 0]], [[0, 0, 0]])


def test_mesh_is_immutable():
    m = Mesh(TRI, [[0, 1, 2]])
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
    with pytest.raises(ValueError):
        m.adjacency[0][0] = 2


def test_tetrahedron_is_closed():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    t = [[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]]
    rep = validate_topology(Mesh(v, t))
    assert rep.boundary_loops == 0 and rep.is_manifold and rep.is_oriented


def test_single_triangle_boundary_cycle():
    rep = validate_topology(Mesh(TRI, [[0, 1, 2]]))
    assert rep.boundary_loops == 1
    assert rep.boundary_vertices == [0, 1, 2]


def test_bowtie_is_not_manifold():
    v = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [-1, 0, 0], [-1, -1, 0]]
    rep = validate_topology(Mesh(v, [[0, 1, 2], [0, 3, 4]]))
    assert not rep.is_manifold
    assert rep.non_manifold_vertices == [0]


def test_three_triangles_on_one_edge():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
    rep = validate_topology(Mesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]]))
    assert rep.non_manifold_edges == 1 and not rep.is_manifold


def test_inconsistent_orientation_detected():
    v = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]
    assert validate_topology(Mesh(v, [[0, 1, 2], [0, 2, 3]])).is_oriented
    assert not validate_topology(Mesh(v, [[0, 1, 2], [0, 3, 2]])).is_oriented


def test_boundary_loop_keeps_surface_on_left():
    m = planar_grid(4, 5)
    loop = validate_topology(m).boundary_vertices
    p = m.vertices[loop, :2]
    signed = 0.5 * np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1])
    assert signed > 0
    edges = {tuple(sorted(e)) for e in m.edges.tolist()}
    for a, b in zip(loop, loop[1:] + loop[:1]):
        assert tuple(sorted((a, b))) in edges
    assert len(loop) == 2 * (4 + 5) - 4


def test_ring_sizes():
    assert len(one_ring(hexagon_patch(), 0)) == 6
    ico = icosahedron()
    assert all(len(one_ring(ico, i)) == 5 for i in range(12))
    with pytest.raises(IndexError):
        one_ring(ico, 12)


def test_icosahedron_edges_by_enumeration():
    ico = icosahedron()
    d = np.linalg.norm(ico.vertices[:, None] - ico.vertices[None], axis=2)
    shortest = d[d > 1e-9].min()
    for i in range(12):
        expect = np.flatnonzero(np.abs(d[i] - shortest) < 1e-9)
        assert list(one_ring(ico, i)) == list(expect)


def test_planar_normals_point_up():
    n = vertex_normals(planar_grid(5, 5))
    assert np.allclose(n, [0, 0, 1])


def test_sphere_normals_match_radial():
    s = icosphere(3)
    assert s.n_triangles == 1280
    n = vertex_normals(s)
    radial = s.vertices / np.linalg.norm(s.vertices, axis=1, keepdims=True)
    ang = np.degrees(np.arccos(np.clip(np.sum(n * radial, axis=1), -1, 1)))
    assert ang.max() < 5.0


def test_flipping_one_triangle_changes_only_its_corners(rng):
    m = random_disk_mesh(60, rng)
    t = m.triangles.copy()
    t[10] = t[10][::-1]
    n0 = vertex_normals(m)
    n1 = vertex_normals(Mesh(m.vertices, t))
    changed = np.flatnonzero(np.abs(n0 - n1).max(axis=1) > 0)
    assert set(changed) <= set(m.triangles[10].tolist())


def test_isolated_vertex_warns():
    m = Mesh(TRI + [[5, 5, 5]], [[0, 1, 2]])
    with pytest.warns(RuntimeWarning):
        n = vertex_normals(m)
    assert np.all(n[3] == 0)
    assert validate_topology(m).isolated_vertices == 1


@st.composite
def disk_meshes(draw):
    seed = draw(st.integers(0, 10_000))
    n = draw(st.integers(9, 120))
    rng = np.random.default_rng(seed)
    return random_disk_mesh(n, rng), rng


@settings(max_examples=40, deadline=None)
@given(disk_meshes())
def test_valence_sum_and_ring_symmetry(case):
    m, _ = case
    assert m.valences().sum() == 2 * len(m.edges)
    for i, ring in enumerate(m.adjacency):
        for j in ring:
            assert i in m.adjacency[j]


@settings(max_examples=30, deadline=None)
@given(disk_meshes())
def test_rings_ignore_triangle_order(case):
    m, rng = case
    perm = rng.permutation(m.n_triangles)
    shuffled = Mesh(m.vertices, m.triangles[perm])
    for a, b in zip(m.adjacency, shuffled.adjacency):
        assert np.array_equal(a, b)
