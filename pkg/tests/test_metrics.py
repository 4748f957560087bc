import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sizefield.field import SizeField
from sizefield.metrics import (TetMeshError, discrete_gradation, efficiency_index, evaluate_mesh, lbar,
                               metric_edge_lengths, read_tet_mesh, tet_quality, unique_edges, write_report)
from sizefield.octree import Octree, SizeFieldParams

REGULAR = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)


def uniform_field(c, side=4.0, depth=3):
    tree = Octree(np.full(3, -side / 2), side)
    for _ in range(depth):
        tree.split(tree.leaves())
    n = len(tree.leaves())
    return SizeField(SizeFieldParams(h_b=c, h_min=c / 10), tree, np.full(n, c), np.zeros((n, 3)))


def affine_field(h0, slope, depth=4):
    """h(y) = h0 + slope * y on [0, 1]^3, exact inside every leaf."""
    tree = Octree(np.zeros(3), 1.0)
    for _ in range(depth):
        tree.split(tree.leaves())
    c = tree.centers(tree.leaves())
    n = len(c)
    grad = np.zeros((n, 3))
    grad[:, 1] = slope
    return SizeField(SizeFieldParams(h_b=10.0, h_min=1e-3), tree, h0 + slope * c[:, 1], grad)


def test_uniform_lengths():
    f = uniform_field(0.3)
    a = np.zeros((2, 3))
    b = np.array([[0.3, 0, 0], [0.3, 0.3, 0]])
    assert np.allclose(metric_edge_lengths(f, a, b), [1.0, np.sqrt(2)], rtol=1e-14)


@pytest.mark.parametrize("alpha", [1.05, 1.1, 1.3])
def test_affine_log_integral(alpha):
    h0 = 0.05
    f = affine_field(h0, alpha - 1)
    a, b = np.array([[0.3, 0.0, 0.4]]), np.array([[0.3, 1.0, 0.4]])
    exact = np.log((h0 + (alpha - 1)) / h0) / (alpha - 1)
    assert metric_edge_lengths(f, a, b)[0] == pytest.approx(exact, rel=1e-6)


def test_simpson_convergence():
    h = lambda x: 0.2 + 0.1 * np.sin(3 * x[:, 0]) + 0.05 * x[:, 1] ** 2
    a, b = np.array([[0.0, 0.1, 0.0]]), np.array([[1.0, 0.9, 0.2]])
    l1 = metric_edge_lengths(h, a, b, min_intervals=64)
    l2 = metric_edge_lengths(h, a, b, min_intervals=128)
    assert abs(l1 - l2)[0] < 1e-8


def test_tau_examples():
    assert efficiency_index(np.ones(10)) == (1.0, 1.0)
    tau, frac = efficiency_index(np.full(7, np.sqrt(2)))
    assert tau == pytest.approx(np.exp(1 / np.sqrt(2) - 1), abs=1e-9)
    assert frac == 1.0
    assert lbar([0.5, 2.0]).tolist() == [-0.5, -0.5]
    with pytest.raises(ValueError):
        efficiency_index([])


@settings(max_examples=50)
@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=40))
def test_tau_at_most_one(l):
    tau, _ = efficiency_index(l)
    assert 0 < tau <= 1
    assert (tau == 1) == all(x == 1 for x in l)


def test_chain_gradation():
    V = np.array([[0, 0, 0], [1, 0, 0], [2.1, 0, 0], [3.31, 0, 0]])
    E = np.array([[0, 1], [1, 2], [2, 3]])
    ad, _ = discrete_gradation(V, E)
    assert ad[1] == pytest.approx(1.1, rel=1e-12)


def test_uniform_grid_gradation_exactly_one():
    n = 5
    idx = np.arange(n * n).reshape(n, n)
    E = np.vstack([np.c_[idx[:, :-1].ravel(), idx[:, 1:].ravel()], np.c_[idx[:-1].ravel(), idx[1:].ravel()]])
    V = np.c_[np.divmod(np.arange(n * n), n)[1], np.divmod(np.arange(n * n), n)[0], np.zeros(n * n)] * 0.25
    # interior vertices only: boundary vertices see the same lengths too on a uniform grid
    ad, mean = discrete_gradation(V.astype(float), E)
    assert np.all(ad == 1.0) and mean == 1.0


def test_regular_tet_quality():
    assert tet_quality(REGULAR) == pytest.approx(1 / 3, abs=1e-12)


def test_sliver_quality_matches_direct():
    T = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.004]], float)
    g = tet_quality(T)
    vol = abs(np.linalg.det(T[1:] - T[0])) / 6
    area = sum(0.5 * np.linalg.norm(np.cross(T[j] - T[i], T[k] - T[i]))
               for i, j, k in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)))
    A = 2 * (T[1:] - T[0])
    c = np.linalg.solve(A, (T[1:] ** 2).sum(1) - (T[0] ** 2).sum())
    R = np.linalg.norm(c - T[0])
    assert g < 0.01
    assert g == pytest.approx(3 * vol / area / R, rel=1e-9)
    assert tet_quality(np.zeros((4, 3))) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_quality_scale_and_translation_invariant(s, t):
    T = np.array([[0, 0, 0], [1, 0.2, 0], [0.1, 1, 0.3], [0.2, 0.3, 1]])
    assert tet_quality(T * s + np.array(t)) == pytest.approx(tet_quality(T), rel=1e-9)


def test_metrics_scale_invariant():
    V = np.random.default_rng(3).random((20, 3))
    E = np.array([[i, i + 1] for i in range(19)])
    for s in (0.01, 7.0):
        r1 = evaluate_mesh(uniform_field(0.2), V, E)
        r2 = evaluate_mesh(uniform_field(0.2 * s, side=4.0 * s), V * s, E)
        assert np.allclose(r1.lengths, r2.lengths, rtol=1e-12)
        assert r1.alpha_d_mean == pytest.approx(r2.alpha_d_mean, rel=1e-12)


def test_tet_file_and_report(tmp_path):
    p = tmp_path / "m.tet"
    p.write_text("4\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n1\n0 1 2 3\n")
    V, T = read_tet_mesh(p)
    E = unique_edges(T)
    assert len(E) == 6
    rep = evaluate_mesh(uniform_field(2 * np.sqrt(2)), V, E, T)
    s = rep.summary()
    assert s["tau"] == pytest.approx(1.0, abs=1e-12)
    assert s["gamma_norm_min"] == pytest.approx(1.0, abs=1e-12)
    write_report(rep, tmp_path / "out")
    assert (tmp_path / "out" / "summary.csv").read_text().startswith("key,value")
    assert (tmp_path / "out" / "hist_gamma.csv").exists()


@pytest.mark.parametrize("text", ["", "4\n0 0 0\n", "3\n0 0 0\n1 0 0\n0 1 0\n1\n0 1 2 5\n", "1\n0 0 0\n0\nextra"])
def test_bad_tet_file(tmp_path, text):
    p = tmp_path / "bad.tet"
    p.write_text(text)
    with pytest.raises(TetMeshError):
        read_tet_mesh(p)
