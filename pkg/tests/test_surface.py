"""Face geometry, face capping, and the kNN graph against brute force."""

from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest

from hierprot import structure as st
from hierprot.surface import SparseAdjacency, TooFewPoints, cap_faces, face_geometry, knn_graph
from hierprot.synthetic import random_rotation

FIXTURES = Path(__file__).parent / "fixtures"


def brute_force_knn(points, k):
    """Pure-python oracle: per-node sort by (distance, index), union symmetrize."""
    n = len(points)
    kk = min(k, n - 1)
    edges = set()
    for i in range(n):
        dists = sorted((float(np.sum((points[i] - points[j]) ** 2)), j)
                       for j in range(n) if j != i)
        for _, j in dists[:kk]:
            edges.add((i, j))
            edges.add((j, i))
    return edges


def test_unit_right_triangle_geometry():
    mesh = st.SurfaceMesh(vertices=np.array([[0., 0, 0], [1, 0, 0], [0, 1, 0]]),
                          faces=np.array([[0, 1, 2]]))
    geo = face_geometry(mesh)[0]
    npt.assert_allclose(geo.centroid, [1 / 3, 1 / 3, 0], atol=1e-15)
    assert geo.area == pytest.approx(0.5)
    npt.assert_allclose(geo.sorted_edge_lengths, [1.0, 1.0, np.sqrt(2)], atol=1e-15)


def test_equilateral_area():
    h = np.sqrt(3)
    mesh = st.SurfaceMesh(vertices=np.array([[0., 0, 0], [2, 0, 0], [1, h, 0]]),
                          faces=np.array([[0, 1, 2]]))
    assert face_geometry(mesh)[0].area == pytest.approx(np.sqrt(3))


def test_icosahedron_faces_equal_area():
    mesh, _ = st.parse_mesh((FIXTURES / "icosahedron.off").read_text())
    areas = np.array([g.area for g in face_geometry(mesh)])
    npt.assert_allclose(areas, areas[0], atol=1e-9)


def test_cap_faces_identity_under_cap():
    mesh, _ = st.parse_mesh((FIXTURES / "icosahedron.off").read_text())
    assert cap_faces(mesh, cap=1024, seed=0) is mesh


def make_big_mesh(n_faces, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n_faces + 10, 3))
    faces = np.array([[i, i + 1, i + 2] for i in range(n_faces)])
    return st.SurfaceMesh(vertices=pts, faces=faces)


def test_cap_faces_subsamples_deterministically():
    mesh = make_big_mesh(2000)
    capped = cap_faces(mesh, cap=1024, seed=7)
    again = cap_faces(mesh, cap=1024, seed=7)
    assert len(capped.faces) == 1024
    npt.assert_array_equal(capped.faces, again.faces)
    npt.assert_array_equal(capped.vertices, again.vertices)
    # Vertices were pruned and remapped consistently.
    assert capped.faces.max() < len(capped.vertices)


def test_cap_faces_seed_changes_selection():
    mesh = make_big_mesh(2000)
    a = cap_faces(mesh, cap=1024, seed=7)
    b = cap_faces(mesh, cap=1024, seed=8)
    assert len(a.faces) == len(b.faces) == 1024
    sets = [set(map(tuple, m.vertices[m.faces].reshape(-1, 9).round(9))) for m in (a, b)]
    assert sets[0] != sets[1]


def test_knn_three_collinear_points():
    pts = np.array([[0., 0, 0], [1, 0, 0], [2, 0, 0]])
    adj = knn_graph(pts, k=2)
    assert adj.nnz == 6
    assert {(r, c) for r, c, _ in adj.entry_set()} == \
        {(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)}
    assert all(w == 1.0 for _, _, w in adj.entry_set())


def test_knn_two_points_clips_k():
    adj = knn_graph(np.array([[0., 0, 0], [5, 0, 0]]), k=8)
    assert {(r, c) for r, c, _ in adj.entry_set()} == {(0, 1), (1, 0)}


def test_knn_too_few_points():
    with pytest.raises(TooFewPoints):
        knn_graph(np.array([[0., 0, 0]]), k=2)


@pytest.mark.parametrize("seed", range(5))
def test_knn_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 201))
    pts = rng.normal(size=(n, 3))
    adj = knn_graph(pts, k=8)
    oracle = brute_force_knn(pts, 8)
    assert {(r, c) for r, c, _ in adj.entry_set()} == oracle


def test_knn_tie_break_prefers_lower_index():
    # Node 0 is equidistant from 1 and 2; with k=1 it must list node 1.
    # Nodes 2 and 3 pair with each other, so (0, 2) can only appear if the
    # tie broke toward the higher index.
    pts = np.array([[0., 0, 0], [1, 0, 0], [-1, 0, 0], [-1.1, 0, 0]])
    adj = knn_graph(pts, k=1)
    pairs = {(r, c) for r, c, _ in adj.entry_set()}
    assert (0, 1) in pairs and (0, 2) not in pairs and (2, 3) in pairs


@pytest.mark.parametrize("seed", range(5))
def test_knn_rigid_motion_invariance(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(60, 3)) * 4
    rot = random_rotation(rng)
    shift = rng.normal(size=3) * 10
    a = knn_graph(pts, k=8)
    b = knn_graph(pts @ rot.T + shift, k=8)
    assert a.entry_set() == b.entry_set()


def test_sparse_adjacency_dedup_and_validate():
    adj = SparseAdjacency.from_entries(3, [0, 1, 0, 1], [1, 0, 1, 0], [2.0, 2.0, 1.0, 1.0])
    assert adj.nnz == 2
    npt.assert_array_equal(adj.weights, [3.0, 3.0])
    adj.validate()
    bad = SparseAdjacency.from_entries(3, [0], [1], [1.0])
    with pytest.raises(ValueError, match="asymmetric"):
        bad.validate()
