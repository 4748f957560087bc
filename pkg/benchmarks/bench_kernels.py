"""Compare the compiled and pure-Python kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3]

Times the float-filtered predicates, the limiter sweeps and octree point
location on each available backend, then a full Delaunay build, and checks
that both backends give identical results.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sizefield import _backend, shapes
from sizefield.delaunay import tetrahedralize
from sizefield.octree import SizeFieldParams, balance_octree, face_pairs, init_octree, refine_octree
from sizefield.mesh_io import bounding_box
from sizefield.rtree import build_rtree, triangle_boxes


def best(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_predicates(kern, repeat, n_calls=200_000):
    rng = np.random.default_rng(1)
    P = rng.random((1000, 3))
    idx = rng.integers(0, 1000, size=(n_calls, 5)).tolist()

    def run():
        pred = kern.Predicates(P)
        o = pred.orient
        s = pred.insphere
        acc = 0
        for a, b, c, d, e in idx:
            acc += o(a, b, c, d) + s(a, b, c, d, e)
        return acc
    return best(run, repeat)


def _sample_tree():
    mesh = shapes.finned_block()
    params = SizeFieldParams.defaults(bounding_box(mesh).L)
    tree = init_octree(bounding_box(mesh), params)
    rt = build_rtree(*triangle_boxes(mesh.vertices, mesh.triangles))
    tt = np.full(mesh.n_triangles, params.h_b / 4)
    refine_octree(tree, rt, tt, params)
    balance_octree(tree, rt, tt, params)
    return tree, params


def bench_limiter(kern, repeat, tree, params):
    leaves = tree.leaves()
    lo, hi, ax, dx = face_pairs(tree, leaves)
    start = np.searchsorted(ax, np.arange(4)).astype(np.int64)
    h0 = np.ascontiguousarray(tree.h[leaves])

    def run():
        h = h0.copy()
        passes = kern.limit_sweeps(h, lo, hi, dx, start, params.alpha - 1.0, 1000)
        return passes, h
    return best(run, repeat)


def bench_locate(kern, repeat, tree, n=1_000_000):
    rng = np.random.default_rng(2)
    q = rng.integers(0, 1 << 30, size=(n, 3), dtype=np.int64)
    qx, qy, qz = (np.ascontiguousarray(q[:, i]) for i in range(3))
    return best(lambda: kern.locate(tree.child, qx, qy, qz, 30), repeat)


def bench_delaunay(name, repeat, n=3000):
    P = np.random.default_rng(3).random((n, 3))
    return best(lambda: tetrahedralize(P, backend=name), repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    names = ["python"]
    try:
        _backend.get("cython")
        names.insert(0, "cython")
    except ImportError:
        print("compiled backend not built; timing the fallback only")
    tree, params = _sample_tree()
    print(f"octree sample: {len(tree.leaves())} leaves")
    rows = {}
    results = {}
    for name in names:
        kern = _backend.get(name)
        t_pred, r_pred = bench_predicates(kern, args.repeat)
        t_lim, r_lim = bench_limiter(kern, args.repeat, tree, params)
        t_loc, r_loc = bench_locate(kern, args.repeat, tree)
        t_del, r_del = bench_delaunay(name, args.repeat)
        rows[name] = (t_pred, t_lim, t_loc, t_del)
        results[name] = (r_pred, r_lim, r_loc, r_del)
    header = f"{'kernel':<28}" + "".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    labels = ("predicates (200k pairs)", "limiter sweeps", "locate (1e6 points)", "delaunay (3000 pts)")
    for i, label in enumerate(labels):
        line = f"{label:<28}" + "".join(f"{rows[n][i]:>11.3f}s" for n in names)
        if len(names) == 2:
            line += f"{rows['python'][i] / rows['cython'][i]:>9.1f}x"
        print(line)
    if len(names) == 2:
        a, b = results["cython"], results["python"]
        same = (a[0] == b[0] and a[1][0] == b[1][0] and np.array_equal(a[1][1], b[1][1])
                and np.array_equal(a[2], b[2]) and np.array_equal(a[3].tets, b[3].tets))
        print("backends agree:", same)


if __name__ == "__main__":
    main()
