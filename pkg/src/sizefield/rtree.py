"""Static R-tree over axis-aligned boxes, bulk-loaded by Sort-Tile-Recursive.

Queries are answered in batches: a frontier of (query, node) pairs descends
one level at a time with vectorized overlap tests.  Boxes are closed, so
touching boxes intersect.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RTree", "build_rtree", "triangle_boxes"]


def triangle_boxes(vertices: np.ndarray, triangles: np.ndarray):
    P = vertices[triangles]
    return P.min(axis=1), P.max(axis=1)


def _str_order(centers: np.ndarray, capacity: int) -> np.ndarray:
    n = len(centers)
    idx = np.arange(n)
    n_leaves = -(-n // capacity)
    slabs = max(1, int(np.ceil(n_leaves ** (1 / 3))))
    out = []
    xs = idx[np.argsort(centers[:, 0], kind="stable")]
    per_x = -(-n // slabs)
    for xs_chunk in np.array_split(xs, max(1, -(-n // per_x))):
        m = len(xs_chunk)
        ys = xs_chunk[np.argsort(centers[xs_chunk, 1], kind="stable")]
        per_y = -(-m // slabs)
        for ys_chunk in np.array_split(ys, max(1, -(-m // per_y))):
            zs = ys_chunk[np.argsort(centers[ys_chunk, 2], kind="stable")]
            out.append(zs)
    return np.concatenate(out)


@dataclass
class RTree:
    """Levels are stored bottom-up; ``lo[0]/hi[0]`` are the item boxes in packed order."""

    item: np.ndarray           # packed position -> original item id
    lo: list
    hi: list
    capacity: int

    @property
    def n_items(self) -> int:
        return len(self.item)

    def query(self, qlo, qhi):
        """Items whose box meets each query box.

        Returns
        -------
        offsets : ndarray (q + 1,)
        items : ndarray
            Item ids for query ``i`` are ``items[offsets[i]:offsets[i + 1]]``,
            ascending.
        """
        qlo = np.atleast_2d(np.asarray(qlo, dtype=np.float64))
        qhi = np.atleast_2d(np.asarray(qhi, dtype=np.float64))
        nq = len(qlo)
        top = len(self.lo) - 1
        qid = np.arange(nq)
        node = np.zeros(nq, dtype=np.int64)
        lo, hi = self.lo[top], self.hi[top]
        hit = np.all((lo[node] <= qhi[qid]) & (hi[node] >= qlo[qid]), axis=1)
        qid, node = qid[hit], node[hit]
        cap = self.capacity
        for level in range(top - 1, -1, -1):
            n_child = len(self.lo[level])
            start = node * cap
            cnt = np.minimum(start + cap, n_child) - start
            qid = np.repeat(qid, cnt)
            base = np.repeat(start, cnt)
            rank = np.arange(len(qid)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            node = base + rank
            lo, hi = self.lo[level], self.hi[level]
            hit = np.all((lo[node] <= qhi[qid]) & (hi[node] >= qlo[qid]), axis=1)
            qid, node = qid[hit], node[hit]
        items = self.item[node]
        order = np.lexsort((items, qid))
        qid, items = qid[order], items[order]
        offsets = np.zeros(nq + 1, dtype=np.int64)
        np.cumsum(np.bincount(qid, minlength=nq), out=offsets[1:])
        return offsets, items


def build_rtree(lo: np.ndarray, hi: np.ndarray, capacity: int = 16) -> RTree:
    """Bulk-load an R-tree over boxes ``[lo[i], hi[i]]``."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if len(lo) == 0:
        raise ValueError("cannot build an R-tree over no boxes")
    if capacity < 2:
        raise ValueError("capacity must be at least 2")
    order = _str_order(0.5 * (lo + hi), capacity)
    los, his = [lo[order]], [hi[order]]
    while len(los[-1]) > 1:
        L, H = los[-1], his[-1]
        starts = np.arange(0, len(L), capacity)
        los.append(np.minimum.reduceat(L, starts, axis=0))
        his.append(np.maximum.reduceat(H, starts, axis=0))
    if len(los) == 1:
        los.append(los[0].copy())
        his.append(his[0].copy())
    return RTree(order.astype(np.int64), los, his, capacity)
