import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sizefield import shapes
from sizefield.curvature import vertex_normals
from sizefield.delaunay import tetrahedralize
from sizefield.medial import (ANGLE, RATIO, PoleData, compute_feature_field, compute_poles,
                              corner_filter, feature_meshsize, filter_feature_edges)

GAP = 0.1


def fake_umbrellas(dc, normal, radius):
    """Every vertex gets the same single umbrella facet."""
    n = len(dc.points)
    return PoleData(
        pole=np.zeros((n, 3)), pole_tet=np.zeros(n, np.int64), vector=np.tile(normal, (n, 1)),
        unbounded=np.zeros(n, bool), umbrella_offsets=np.arange(n + 1, dtype=np.int64),
        umbrella_facet=np.zeros(n, np.int64), facets=np.array([[0, 1, 2]]),
        facet_normal=np.array([normal], float), facet_radius=np.array([radius], float))


@pytest.fixture(scope="module")
def corner_tet():
    P = np.array([[0, 0, 0], [0, 0, 1], [1, 0, 0], [0, 1, 0]], float)
    return tetrahedralize(P)


def edge_id(dc, a, b):
    return int(np.flatnonzero((dc.edges[:, 0] == min(a, b)) & (dc.edges[:, 1] == max(a, b)))[0])


def test_angle_condition_passes_along_normal(corner_tet):
    ids, reason = filter_feature_edges(corner_tet, fake_umbrellas(corner_tet, (0, 0, 1), 1.0))
    r = dict(zip(ids.tolist(), reason.tolist()))
    assert r[edge_id(corner_tet, 0, 1)] & ANGLE


def test_ratio_rescues_perpendicular_edge(corner_tet):
    e = edge_id(corner_tet, 0, 2)
    ids, reason = filter_feature_edges(corner_tet, fake_umbrellas(corner_tet, (0, 0, 1), 0.1))
    r = dict(zip(ids.tolist(), reason.tolist()))
    assert r[e] == RATIO
    ids, _ = filter_feature_edges(corner_tet, fake_umbrellas(corner_tet, (0, 0, 1), 0.2))
    assert e not in ids


def test_corner_filter_examples():
    P = np.array([[0, 0, 0], [1, 0, 1], [0, 1, 0], [0, 0, 1]], float)
    dc = tetrahedralize(P)
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    ids = np.array([edge_id(dc, 0, 1), edge_id(dc, 0, 3)])
    assert corner_filter(dc, ids, normals).tolist() == [False, True]
    # unsigned: a reversed normal line is the same line
    normals[3] *= -1
    assert corner_filter(dc, ids[1:], normals).tolist() == [True]


def test_feature_meshsize_examples():
    assert feature_meshsize(1.0, 4) == 0.25
    f = np.full(3, np.inf)
    np.minimum.at(f, [0, 0], [1.0, 0.4])
    assert feature_meshsize(f, 4)[0] == pytest.approx(0.1, abs=0)
    assert np.isinf(feature_meshsize(f, 4)[1])
    with pytest.raises(ValueError):
        feature_meshsize(f, 0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(1, 100), st.floats(1.001, 10))
def test_feature_meshsize_monotone_in_layers(f, n_g, factor):
    assert feature_meshsize(f, n_g * factor) < feature_meshsize(f, n_g)


@pytest.fixture(scope="module")
def plates():
    mesh = shapes.plates(gap=GAP, size=1.0, n=41)
    dc = tetrahedralize(mesh.vertices)
    normals = vertex_normals(mesh)[np.argsort(dc.index_map)[:len(dc.points)]]
    return mesh, dc, normals


def interior(P, margin=0.1):
    return (P[:, 0] > margin) & (P[:, 0] < 1 - margin) & (P[:, 1] > margin) & (P[:, 1] < 1 - margin)


def test_plates_pole_vectors_along_z(plates):
    _, dc, _ = plates
    poles = compute_poles(dc)
    bottom = interior(dc.points) & (dc.points[:, 2] == 0)
    v = poles.vector[bottom]
    cosang = np.abs(v[:, 2]) / np.linalg.norm(v, axis=1)
    assert np.degrees(np.arccos(np.clip(cosang, -1, 1))).max() < 10


def test_plates_feature_size_is_gap(plates):
    _, dc, normals = plates
    ff = compute_feature_field(dc, normals, n_g=4)
    inner = interior(dc.points)
    f = ff.f[inner]
    assert np.mean(np.abs(f - GAP) <= 0.1 * GAP) >= 0.9
    assert np.array_equal(ff.h_f, ff.f / 4)


def test_plates_feature_size_determinism_and_layers(plates):
    _, dc, normals = plates
    a = compute_feature_field(dc, normals, n_g=4)
    b = compute_feature_field(dc, normals, n_g=4)
    assert np.array_equal(a.edges, b.edges) and np.array_equal(a.reason, b.reason)
    c = compute_feature_field(dc, normals, n_g=8)
    fin = np.isfinite(a.f)
    assert np.all(c.h_f[fin] < a.h_f[fin])


def test_accepted_edges_pass_both_filters(plates):
    _, dc, normals = plates
    ff = compute_feature_field(dc, normals)
    assert np.all(ff.reason > 0)
    d = dc.points[ff.edges[:, 1]] - dc.points[ff.edges[:, 0]]
    d /= np.linalg.norm(d, axis=1)[:, None]
    for end in (0, 1):
        c = np.abs(np.einsum("ij,ij->i", d, normals[ff.edges[:, end]]))
        assert np.all(c >= np.cos(np.pi / 8))
    touched = np.unique(ff.edges)
    assert np.all(ff.f[touched] > 0)


def test_sphere_poles_near_center():
    mesh = shapes.icosphere(3)
    dc = tetrahedralize(mesh.vertices)
    poles = compute_poles(dc)
    assert np.linalg.norm(poles.pole, axis=1).max() < 0.1
    radial = dc.points / np.linalg.norm(dc.points, axis=1)[:, None]
    assert np.all(np.einsum("ij,ij->i", poles.vector / np.linalg.norm(poles.vector, axis=1)[:, None],
                            radial) > np.cos(np.radians(10)))


def test_umbrellas_nonempty_on_plates(plates):
    _, dc, _ = plates
    poles = compute_poles(dc)
    assert np.all(np.diff(poles.umbrella_offsets) > 0)
    p = 123
    assert np.all(np.any(poles.facets[poles.umbrella(p)] == p, axis=1))
