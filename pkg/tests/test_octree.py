import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sizefield import shapes
from sizefield.curvature import compute_curvature
from sizefield.mesh_io import AABB, SurfaceMesh, bounding_box
from sizefield.octree import (MAXDEPTH, Octree, OctreeError, SizeFieldParams, balance_octree, face_pairs,
                              init_octree, leaf_targets, refine_octree)
from sizefield.rtree import build_rtree, triangle_boxes


def brute_face_pairs(tree):
    """Face-adjacent leaf pairs by direct integer box comparison."""
    leaves = tree.leaves()
    a = tree.anchor[leaves]
    s = tree.size_units(leaves)
    b = a + s[:, None]
    out = set()
    for ax in range(3):
        o1, o2 = [k for k in range(3) if k != ax]
        touch = b[:, None, ax] == a[None, :, ax]
        ov1 = (np.minimum(b[:, None, o1], b[None, :, o1]) > np.maximum(a[:, None, o1], a[None, :, o1]))
        ov2 = (np.minimum(b[:, None, o2], b[None, :, o2]) > np.maximum(a[:, None, o2], a[None, :, o2]))
        for i, j in zip(*np.nonzero(touch & ov1 & ov2)):
            out.add((int(i), int(j), ax))
    return out


def surface_tree(mesh, params, target=None):
    tree = init_octree(bounding_box(mesh), params)
    rt = build_rtree(*triangle_boxes(mesh.vertices, mesh.triangles))
    tt = np.full(mesh.n_triangles, params.h_b / 8 if target is None else target)
    refine_octree(tree, rt, tt, params)
    balance_octree(tree, rt, tt, params)
    return tree, rt, tt


@pytest.fixture(scope="module")
def finned_tree(finned):
    params = SizeFieldParams.defaults(bounding_box(finned).L)
    return (*surface_tree(finned, params, target=params.h_b / 4), params)


@pytest.mark.parametrize("L", [1.0, 10.0])
def test_init_depth(L):
    bbox = AABB(np.zeros(3), np.full(3, L))
    tree = init_octree(bbox, SizeFieldParams.defaults(L))
    assert tree.side == 1.5 * L
    assert np.all(tree.level[tree.leaves()] == 5)
    assert len(tree.leaves()) == 32 ** 3
    assert np.all(tree.h[tree.leaves()] == L / 20)
    assert np.allclose(tree.lo + tree.side / 2, L / 2)


def test_init_single_leaf():
    bbox = AABB(np.zeros(3), np.ones(3))
    tree = init_octree(bbox, SizeFieldParams(h_b=3.0, h_min=0.01))
    assert len(tree.leaves()) == 1 and tree.h[0] == 3.0


def test_refine_example_four_splits():
    tree = Octree(np.zeros(3), 0.1)
    tree.h[:] = 0.1
    V = np.array([[0.03, 0.03, 0.05], [0.07, 0.03, 0.05], [0.05, 0.07, 0.05]])
    mesh = SurfaceMesh(V, np.array([[0, 1, 2]]))
    rt = build_rtree(*triangle_boxes(mesh.vertices, mesh.triangles))
    params = SizeFieldParams(h_b=0.1, h_min=0.001)
    refine_octree(tree, rt, np.array([0.012]), params)
    leaves = tree.leaves()
    hit = leaves[tree.intersects[leaves]]
    assert np.all(tree.sides(hit) == 0.00625)
    assert np.all(tree.h[hit] == 0.012)
    assert np.all(tree.h[leaves[~tree.intersects[leaves]]] == 0.1)


def test_target_clamped_to_h_min():
    tree = Octree(np.zeros(3), 1.0)
    mesh = SurfaceMesh(np.array([[0.2, 0.2, 0.5], [0.8, 0.2, 0.5], [0.5, 0.8, 0.5]]), np.array([[0, 1, 2]]))
    rt = build_rtree(*triangle_boxes(mesh.vertices, mesh.triangles))
    inter, target = leaf_targets(tree, np.array([0]), rt, np.array([1e-6]), SizeFieldParams(h_b=1, h_min=0.001))
    assert inter[0] and target[0] == 0.001


def test_user_size_function():
    tree = Octree(np.zeros(3), 1.0)
    mesh = SurfaceMesh(np.array([[0.2, 0.2, 0.5], [0.8, 0.2, 0.5], [0.5, 0.8, 0.5]]), np.array([[0, 1, 2]]))
    rt = build_rtree(*triangle_boxes(mesh.vertices, mesh.triangles))
    p = SizeFieldParams(h_b=1, h_min=0.001, h_u=lambda x: np.full(len(x), 0.3))
    _, target = leaf_targets(tree, np.array([0]), rt, np.array([0.5]), p)
    assert target[0] == 0.3


def test_finned_block_structure(finned_tree):
    tree, rt, tt, params = finned_tree
    leaves = tree.leaves()
    lo, hi, ax, dx = face_pairs(tree)
    lv = tree.level[leaves].astype(int)
    assert np.abs(lv[lo] - lv[hi]).max() <= 1
    assert tree.leaf_volume_sum() == pytest.approx(tree.side ** 3, rel=1e-9)
    hit = leaves[tree.intersects[leaves]]
    inter, target = leaf_targets(tree, hit, rt, tt, params)
    assert inter.all() and np.all(tree.sides(hit) <= target)
    h = tree.h[leaves]
    assert np.all((h >= params.h_min) & (h <= params.h_b))


def test_face_pairs_match_brute_force():
    mesh = shapes.icosphere(1, radius=0.4, center=(0.5, 0.5, 0.5))
    params = SizeFieldParams(h_b=0.4, h_min=0.01)
    tree, _, _ = surface_tree(mesh, params, target=0.1)
    lo, hi, ax, dx = face_pairs(tree)
    got = set(zip(lo.tolist(), hi.tolist(), ax.tolist()))
    assert len(got) == len(lo)
    assert got == brute_face_pairs(tree)
    s = tree.sides(tree.leaves())
    assert np.array_equal(dx, 0.5 * (s[lo] + s[hi]))
    order = np.lexsort((hi, lo, ax))
    assert np.array_equal(order, np.arange(len(lo)))


def test_balance_idempotent_and_uniform_unchanged(finned, finned_tree):
    tree, _, _, params = finned_tree
    n = tree.n_nodes
    balance_octree(tree)
    assert tree.n_nodes == n
    uni = init_octree(bounding_box(finned), params)
    n = uni.n_nodes
    balance_octree(uni)
    assert uni.n_nodes == n


def test_balance_level_jump_example():
    tree = Octree(np.zeros(3), 1.0)
    tree.h[:] = 1.0
    tree.split([0])
    node = tree.child[0]
    for _ in range(4):
        tree.split([node])
        node = tree.child[node] + 7
    balance_octree(tree)
    lv = tree.level[tree.leaves()].astype(int)
    lo, hi, _, _ = face_pairs(tree)
    assert np.abs(lv[lo] - lv[hi]).max() <= 1
    assert tree.leaf_volume_sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(tree.h[tree.leaves()] == 1.0)


def test_monotone_in_parameters():
    mesh = shapes.icosphere(2, radius=0.5)
    cf = compute_curvature(mesh)
    L = bounding_box(mesh).L

    def count(**kw):
        p = SizeFieldParams.defaults(L, **kw)
        hc = cf.meshsize(p.n_d)
        tree, _, _ = surface_tree(mesh, p, target=hc[mesh.triangles].min(axis=1))
        return len(tree.leaves())

    assert count(n_d=10) <= count(n_d=20) <= count(n_d=40)
    assert count(n_d=80, h_min=L / 50) <= count(n_d=80, h_min=L / 200)


def test_from_leaf_levels_round_trip(finned_tree):
    tree = finned_tree[0]
    leaves = tree.leaves()
    t2 = Octree.from_leaf_levels(tree.lo, tree.side, tree.level[leaves])
    l2 = t2.leaves()
    assert np.array_equal(t2.anchor[l2], tree.anchor[leaves])
    with pytest.raises(ValueError):
        Octree.from_leaf_levels(tree.lo, tree.side, tree.level[leaves][:-1])
    with pytest.raises(ValueError):
        Octree.from_leaf_levels(tree.lo, tree.side, [1] * 9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 3), min_size=3, max_size=3))
def test_locate_contains_point(x):
    tree = Octree(np.zeros(3), 1.0)
    tree.split([0])
    tree.split([tree.child[0] + 3])
    leaf = tree.locate(np.array([x]))[0]
    lo, hi = tree.boxes(np.array([leaf]))
    p = np.clip(x, 0, 1)
    assert tree.child[leaf] == -1
    assert np.all(lo[0] <= p) and np.all(p <= hi[0])


def test_depth_cap():
    tree = Octree(np.zeros(3), 1.0)
    node = 0
    for _ in range(MAXDEPTH):
        node = tree.split([node])[0, 0]
    with pytest.raises(OctreeError, match="depth cap"):
        tree.split([node])


def test_params_validation():
    for bad in (dict(h_b=1, h_min=0), dict(h_b=0.1, h_min=1), dict(h_b=1, h_min=0.1, n_d=2),
                dict(h_b=1, h_min=0.1, n_g=0.5), dict(h_b=1, h_min=0.1, alpha=1.0)):
        with pytest.raises(ValueError):
            SizeFieldParams(**bad)
    p = SizeFieldParams.defaults(2.0)
    assert (p.h_b, p.h_min, p.n_d, p.n_g, p.alpha) == (0.1, 0.002, 20, 4, 1.1)
