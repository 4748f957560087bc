from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from sizefield import _backend
from sizefield.delaunay import DelaunayError, circumcenter, circumcenters, tetrahedralize, tet_volumes


def brute_force_delaunay(P, tol=1e-10):
    """All 4-subsets with an empty circumsphere (general position assumed)."""
    n = len(P)
    combos = np.array(list(combinations(range(n), 4)))
    vol = tet_volumes(P, combos)
    combos = combos[np.abs(vol) > 1e-12]
    c, r, _ = circumcenters(P, combos)
    d = np.linalg.norm(P[None, :, :] - c[:, None, :], axis=2)
    inside = d < r[:, None] * (1 - tol)
    return {tuple(t) for t, bad in zip(combos.tolist(), inside.any(axis=1)) if not bad}


def empty_sphere_violations(dc, tol=1e-9):
    P = dc.points
    d = np.linalg.norm(P[None, :, :] - dc.circumcenters[:, None, :], axis=2)
    inside = d < dc.circumradii[:, None] * (1 - tol)
    inside[np.arange(len(dc.tets))[:, None], dc.tets] = False
    return int(inside.sum())


def test_single_tet():
    P = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
    dc = tetrahedralize(P)
    assert len(dc.tets) == 1
    assert np.all(dc.neighbors == -1)
    assert len(dc.hull_facets) == 4


def test_cube_corners():
    P = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float)
    dc = tetrahedralize(P)
    assert len(dc.tets) in (5, 6)
    assert empty_sphere_violations(dc) == 0
    assert dc.volume() == pytest.approx(1.0, rel=1e-12)
    assert np.all(tet_volumes(dc.points, dc.tets) > 0)


def test_coplanar_rejected():
    P = np.random.default_rng(0).random((20, 3))
    P[:, 2] = 0.5
    with pytest.raises(DelaunayError, match="coplanar"):
        tetrahedralize(P)


def test_too_few_points():
    with pytest.raises(DelaunayError):
        tetrahedralize(np.eye(3))


def test_duplicates_deduplicated_with_index_map(rng):
    P = rng.random((30, 3))
    Q = np.concatenate([P, P[:7]])
    dc = tetrahedralize(Q)
    assert len(dc.points) == 30
    assert np.array_equal(dc.index_map[30:], np.arange(7))
    assert np.array_equal(dc.points[dc.index_map], Q)


@pytest.mark.parametrize("seed", range(8))
def test_matches_brute_force(seed):
    P = np.random.default_rng(seed).random((18, 3))
    dc = tetrahedralize(P)
    mine = {tuple(sorted(t)) for t in dc.tets.tolist()}
    assert mine == brute_force_delaunay(P)


@pytest.mark.parametrize("seed", range(5))
def test_random_40_empty_sphere_and_volume(seed):
    P = np.random.default_rng(100 + seed).random((40, 3))
    dc = tetrahedralize(P)
    assert empty_sphere_violations(dc) == 0
    assert dc.volume() == pytest.approx(ConvexHull(P).volume, rel=1e-9)


def test_adjacency_symmetric_and_consistent(rng):
    P = rng.random((200, 3))
    dc = tetrahedralize(P)
    for t, row in enumerate(dc.neighbors):
        for i, u in enumerate(row):
            face = set(dc.tets[t]) - {dc.tets[t, i]}
            if u < 0:
                continue
            assert t in dc.neighbors[u]
            j = list(dc.neighbors[u]).index(t)
            assert set(dc.tets[u]) - {dc.tets[u, j]} == face


def test_hull_normals_point_outward(rng):
    P = rng.random((100, 3))
    dc = tetrahedralize(P)
    centroid = P.mean(axis=0)
    a = P[dc.hull_facets[:, 0]]
    assert np.all(np.einsum("ij,ij->i", a - centroid, dc.hull_normals) > 0)
    hull_ids = np.unique(ConvexHull(P).simplices)
    assert np.array_equal(np.flatnonzero(dc.is_hull_vertex), hull_ids)


def test_insertion_order_independence(rng):
    P = rng.random((120, 3))
    perm = rng.permutation(len(P))
    a = tetrahedralize(P)
    b = tetrahedralize(P[perm])
    ea = {tuple(e) for e in a.edges.tolist()}
    eb = {tuple(sorted((perm[i], perm[j]))) for i, j in b.edges.tolist()}
    assert ea == eb


def test_grid_degenerate_volume():
    g = np.array([[i, j, k] for i in range(5) for j in range(4) for k in range(3)], float)
    dc = tetrahedralize(g)
    assert dc.volume() == pytest.approx(4 * 3 * 2, rel=1e-12)
    assert np.all(tet_volumes(dc.points, dc.tets) > 0)
    assert empty_sphere_violations(dc, tol=1e-9) == 0


def test_backends_agree(rng):
    if _backend.BACKEND != "cython":
        pytest.skip("compiled backend not built")
    P = rng.random((300, 3))
    a = tetrahedralize(P, backend="cython")
    b = tetrahedralize(P, backend="python")
    assert np.array_equal(a.tets, b.tets)


def test_circumcenter_examples():
    c, r = circumcenter([(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)])
    assert np.allclose(c, 0, atol=1e-15) and r == pytest.approx(np.sqrt(3), rel=1e-14)
    c, r = circumcenter([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)])
    assert np.allclose(c, 0.5) and r == pytest.approx(np.sqrt(3) / 2, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=12, max_size=12), st.lists(st.floats(-100, 100), min_size=3, max_size=3))
def test_circumcenter_equidistant_and_translation_equivariant(xs, t):
    T = np.array(xs).reshape(4, 3)
    vol = abs(tet_volumes(T, np.arange(4)[None])[0])
    longest = max(np.linalg.norm(T[i] - T[j]) for i in range(4) for j in range(i))
    if longest == 0 or vol < 1e-3 * longest ** 3:
        return
    c, r = circumcenter(T)
    assert np.allclose(np.linalg.norm(T - c, axis=1), r, rtol=1e-9)
    c2, _ = circumcenter(T + np.array(t))
    assert np.allclose(c2, c + np.array(t), rtol=1e-9, atol=1e-9 * (1 + np.abs(t).max()))


def test_sliver_flagged():
    T = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 1e-14]])
    _, _, sliver = circumcenters(T, np.arange(4)[None])
    assert sliver[0]


def test_edge_and_vertex_incidence(rng):
    P = rng.random((60, 3))
    dc = tetrahedralize(P)
    for v in range(0, 60, 7):
        tets = dc.vertex_tets(v)
        assert np.all(np.any(dc.tets[tets] == v, axis=1))
        assert len(tets) == np.sum(np.any(dc.tets == v, axis=1))
    for e in range(0, len(dc.edges), 13):
        a, b = dc.edges[e]
        tets = dc.edge_tets(e)
        expect = np.flatnonzero(np.any(dc.tets == a, axis=1) & np.any(dc.tets == b, axis=1))
        assert np.array_equal(np.sort(tets), expect)
