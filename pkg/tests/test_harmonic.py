import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import Delaunay

from gmapkit.harmonic import (UVEmbedding, boundary_to_circle, check_flips, cotangent_weights,
                              solve_harmonic)
from gmapkit.mesh import Mesh, validate_topology
from gmapkit.synthetic import hexagon_patch, planar_grid, random_disk_mesh


def ring_mesh(points):
    """Fan around an interior centre vertex 0; ``points`` are the boundary in CCW order."""
    k = len(points)
    v = np.vstack([[0.0, 0.0, 0.0], points])
    return Mesh(v, [(0, 1 + i, 1 + (i + 1) % k) for i in range(k)])


def angles(placed, order):
    return np.degrees(np.mod(np.arctan2(*np.array([placed[i] for i in order])[:, ::-1].T), 2 * np.pi))


def test_uniform_square_boundary():
    m = ring_mesh(np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], dtype=float))
    rep = validate_topology(m)
    placed = boundary_to_circle(rep, m)
    assert np.allclose(angles(placed, rep.boundary_vertices), [0, 90, 180, 270])


def test_proportional_spacing():
    # 3 boundary vertices on a line-folded loop with edge lengths 1 : 1 : 2
    v = np.array([[1, -1, 0], [1, 0, 0], [1, 1, 0], [0.8, 0, 0]], dtype=float)
    m = Mesh(v, [(0, 1, 3), (1, 2, 3), (2, 0, 3)])
    rep = validate_topology(m)
    placed = boundary_to_circle(rep, m, start=0)
    loop = rep.boundary_vertices
    k = loop.index(0)
    loop = loop[k:] + loop[:k]
    assert np.allclose(angles(placed, loop), [0.0, 90.0, 180.0], atol=1e-9)


def test_long_loop_gaps_follow_edge_lengths(rng):
    k = 100
    ang = np.sort(rng.uniform(0, 2 * np.pi, k))
    r = 1.0 + 0.2 * rng.random(k)
    pts = np.column_stack([r * np.cos(ang), r * np.sin(ang), 0.1 * rng.random(k)])
    m = ring_mesh(pts)
    rep = validate_topology(m)
    loop = rep.boundary_vertices
    placed = boundary_to_circle(rep, m)
    theta = np.unwrap(np.arctan2(*np.array([placed[i] for i in loop])[:, ::-1].T))
    gaps = np.diff(np.append(theta, theta[0] + 2 * np.pi))
    p = m.vertices[loop]
    seg = np.array([np.sqrt(np.sum((p[(i + 1) % k] - p[i]) ** 2)) for i in range(k)])
    assert np.abs(gaps / (2 * np.pi) - seg / seg.sum()).max() < 1e-9


def test_boundary_requires_single_loop():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    t = [[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]]
    m = Mesh(v, t)
    with pytest.raises(ValueError):
        boundary_to_circle(validate_topology(m), m)


def test_single_interior_vertex_is_weighted_centroid():
    m = hexagon_patch()
    rep = validate_topology(m)
    placed = boundary_to_circle(rep, m, phase=0.3)
    uv = solve_harmonic(m, placed)
    W = cotangent_weights(m).toarray()
    ring = m.adjacency[0]
    expect = (W[0, ring, None] * uv.uv[ring]).sum(0) / W[0, ring].sum()
    assert np.allclose(uv.uv[0], expect, atol=1e-12)


def test_flat_convex_patch_is_reproduced(rng):
    pts = rng.uniform(-1, 1, size=(80, 2))
    ang = np.linspace(0, 2 * np.pi, 25)[:-1]
    pts = np.vstack([np.column_stack([1.5 * np.cos(ang), 1.5 * np.sin(ang)]), pts])
    tri = Delaunay(pts).simplices
    # orient CCW
    a = pts[tri]
    cross = (a[:, 1, 0] - a[:, 0, 0]) * (a[:, 2, 1] - a[:, 0, 1]) - (a[:, 1, 1] - a[:, 0, 1]) * (a[:, 2, 0] - a[:, 0, 0])
    tri[cross < 0] = tri[cross < 0][:, ::-1]
    m = Mesh(np.column_stack([pts, np.zeros(len(pts))]), tri)
    rep = validate_topology(m)
    A = np.array([[0.8, 0.3], [-0.2, 1.1]])
    c = np.array([0.1, -0.4])
    boundary = {i: pts[i] @ A.T + c for i in rep.boundary_vertices}
    uv = solve_harmonic(m, boundary)
    # Delaunay interiors have non-negative cotangent weights, so linear precision holds
    assert np.abs(uv.uv - (pts @ A.T + c)).max() < 1e-6


def test_grid_patch_reproduced_exactly():
    m = planar_grid(7, 9, size=(2.0, 1.0), pattern="quadrant")
    rep = validate_topology(m)
    boundary = {i: m.vertices[i, :2] * np.array([0.5, 1.0]) for i in rep.boundary_vertices}
    uv = solve_harmonic(m, boundary)
    assert np.abs(uv.uv - m.vertices[:, :2] * np.array([0.5, 1.0])).max() < 1e-6


def test_disconnected_interior_is_singular():
    a = hexagon_patch()
    v = np.vstack([a.vertices, a.vertices + 5.0])
    t = np.vstack([a.triangles, a.triangles + 7])
    m = Mesh(v, t)
    boundary = {i: a.vertices[i, :2] for i in range(1, 7)}
    with pytest.raises(np.linalg.LinAlgError):
        solve_harmonic(m, boundary)


def test_flip_counting():
    m = planar_grid(4, 4)
    uv = UVEmbedding(m.vertices[:, :2] / 1.0)
    assert check_flips(uv, m) == 0
    bad = uv.uv.copy()
    a, b = m.triangles[4][:2]
    bad[[a, b]] = bad[[b, a]]
    assert check_flips(UVEmbedding(bad), m) >= 1


def test_embedding_validation():
    with pytest.raises(ValueError):
        UVEmbedding(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        UVEmbedding(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        UVEmbedding(np.zeros((3, 2)), frame="circle")
    disk = UVEmbedding(np.array([[-1.0, 1.0]]), "disk")
    assert disk.to_square().uv.tolist() == [[0.0, 1.0]]


@st.composite
def solved(draw):
    seed = draw(st.integers(0, 10_000))
    rng = np.random.default_rng(seed)
    m = random_disk_mesh(draw(st.integers(16, 200)), rng)
    rep = validate_topology(m)
    return m, rep, solve_harmonic(m, boundary_to_circle(rep, m), method="sparse"), rng


@settings(max_examples=30, deadline=None)
@given(solved())
def test_harmonic_properties(case):
    m, rep, uv, rng = case
    interior = np.setdiff1d(np.arange(m.n_vertices), rep.boundary_vertices)
    # weighted-average property
    W = cotangent_weights(m)
    avg = (W @ uv.uv) / np.asarray(W.sum(axis=1))
    assert np.abs(avg[interior] - uv.uv[interior]).max() < 1e-9
    # maximum principle on the unit disk, no flips
    assert np.linalg.norm(uv.uv, axis=1).max() <= 1.0 + 1e-12
    assert check_flips(uv, m) == 0
    # dense path agrees
    dense = solve_harmonic(m, boundary_to_circle(rep, m), method="dense")
    assert np.abs(dense.uv - uv.uv).max() < 1e-9
    # relabelling vertices and undoing it gives the same answer
    perm = rng.permutation(m.n_vertices)
    inv = np.argsort(perm)
    m2 = Mesh(m.vertices[perm], inv[m.triangles])
    rep2 = validate_topology(m2)
    b2 = {int(inv[i]): p for i, p in boundary_to_circle(rep, m).items()}
    uv2 = solve_harmonic(m2, b2)
    assert np.abs(uv2.uv[inv] - uv.uv).max() < 1e-9
    assert rep2.boundary_loops == 1
