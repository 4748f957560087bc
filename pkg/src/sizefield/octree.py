"""Pointer-free octree over a cubic root, refined against a triangle R-tree.

Nodes live in flat arrays.  Anchors are integers in units of
``root_side / 2**MAXDEPTH`` so that sides, centres and face adjacency are exact.
The eight children of a node are stored contiguously in Morton order
(octant = bx | by << 1 | bz << 2), which makes a depth-first traversal a
space-filling-curve (Z-order) traversal of the leaves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from ._backend import kernels
from .mesh_io import AABB
from .rtree import RTree

logger = logging.getLogger(__name__)

__all__ = [
    "MAXDEPTH",
    "Octree",
    "OctreeError",
    "SizeFieldParams",
    "balance_octree",
    "face_pairs",
    "init_octree",
    "leaf_targets",
    "refine_octree",
]

MAXDEPTH = 30
UNITS = 1 << MAXDEPTH
ROOT_STRETCH = 1.5

_OCT = np.array([[b & 1, (b >> 1) & 1, (b >> 2) & 1] for b in range(8)], dtype=np.int64)


class OctreeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SizeFieldParams:
    """Sizing parameters, lengths in model units.

    Parameters
    ----------
    h_b : float
        Bulk size, the largest size anywhere.
    h_min : float
        Smallest admissible size.
    n_d : float
        Nodes per osculating circle (curvature sizing), at least 3.
    n_g : float
        Element layers across a gap (feature sizing), at least 1.
    alpha : float
        Gradation; the limited field satisfies ``|grad h| <= alpha - 1``.
    h_u : callable, optional
        User size function mapping an (m, 3) array to m sizes.
    """

    h_b: float
    h_min: float
    n_d: float = 20.0
    n_g: float = 4.0
    alpha: float = 1.1
    h_u: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not (np.isfinite(self.h_min) and self.h_min > 0):
            raise ValueError(f"h_min must be positive, got {self.h_min}")
        if not (np.isfinite(self.h_b) and self.h_b >= self.h_min):
            raise ValueError(f"h_b must be finite and >= h_min, got {self.h_b}")
        if not self.n_d >= 3:
            raise ValueError(f"n_d must be at least 3, got {self.n_d}")
        if not self.n_g >= 1:
            raise ValueError(f"n_g must be at least 1, got {self.n_g}")
        if not (np.isfinite(self.alpha) and self.alpha > 1):
            raise ValueError(f"alpha must be > 1, got {self.alpha}")

    @classmethod
    def defaults(cls, L: float, **overrides) -> "SizeFieldParams":
        """h_b = L/20, h_min = L/1000, n_d = 20, n_g = 4, alpha = 1.1."""
        if not L > 0:
            raise ValueError("model size L must be positive")
        base = dict(h_b=L / 20.0, h_min=L / 1000.0, n_d=20.0, n_g=4.0, alpha=1.1)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def with_(self, **kw) -> "SizeFieldParams":
        return replace(self, **kw)


class Octree:
    """Flat-array octree.

    Attributes
    ----------
    lo : ndarray (3,)
        Low corner of the root cube.
    side : float
        Root side length.
    level : ndarray (nodes,) int8
    anchor : ndarray (nodes, 3) int64
    child : ndarray (nodes,) int64
        First-child index or -1 for leaves.
    h : ndarray (nodes,)
        Stored size (meaningful on leaves).
    """

    def __init__(self, lo, side: float):
        if not side > 0:
            raise ValueError("root side must be positive")
        self.lo = np.asarray(lo, dtype=np.float64).copy()
        self.side = float(side)
        self.level = np.zeros(1, dtype=np.int8)
        self.anchor = np.zeros((1, 3), dtype=np.int64)
        self.child = np.full(1, -1, dtype=np.int64)
        self.h = np.full(1, np.nan)
        self.intersects = np.zeros(1, dtype=bool)
        self._leaves = None

    @classmethod
    def from_leaf_levels(cls, lo, side: float, levels) -> "Octree":
        """Rebuild a tree from its leaf levels listed in Z-order."""
        levels = np.asarray(levels, dtype=np.int64)
        if len(levels) == 0:
            raise ValueError("no leaves")
        if levels.min() < 0 or levels.max() > MAXDEPTH:
            raise ValueError("leaf level out of range")
        lv = [0]
        anc = [(0, 0, 0)]
        child = [-1]
        stack = [0]
        i = 0
        n = len(levels)
        seq = levels.tolist()
        while stack:
            node = stack.pop()
            if i >= n:
                raise ValueError("too few leaves")
            if seq[i] == lv[node]:
                i += 1
                continue
            if seq[i] < lv[node]:
                raise ValueError(f"leaf {i} is coarser than its position allows")
            first = len(lv)
            child[node] = first
            half = 1 << (MAXDEPTH - lv[node] - 1)
            ax, ay, az = anc[node]
            for b in range(8):
                lv.append(lv[node] + 1)
                anc.append((ax + (b & 1) * half, ay + ((b >> 1) & 1) * half, az + ((b >> 2) & 1) * half))
                child.append(-1)
            stack.extend(range(first + 7, first - 1, -1))
        if i != n:
            raise ValueError("too many leaves")
        tree = cls(lo, side)
        tree.level = np.array(lv, dtype=np.int8)
        tree.anchor = np.array(anc, dtype=np.int64).reshape(-1, 3)
        tree.child = np.array(child, dtype=np.int64)
        tree.h = np.full(len(lv), np.nan)
        tree.intersects = np.zeros(len(lv), dtype=bool)
        return tree

    @property
    def n_nodes(self) -> int:
        return len(self.level)

    @property
    def unit(self) -> float:
        return np.ldexp(self.side, -MAXDEPTH)

    def split(self, nodes) -> np.ndarray:
        """Subdivide leaves ``nodes``; children inherit ``h``.  Returns (k, 8) ids."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if len(nodes) == 0:
            return np.empty((0, 8), dtype=np.int64)
        if np.any(self.child[nodes] >= 0):
            raise OctreeError("split of an internal node")
        lv = self.level[nodes].astype(np.int64)
        if lv.max() >= MAXDEPTH:
            raise OctreeError(f"octree depth cap {MAXDEPTH} reached")
        k = len(nodes)
        ids = self.n_nodes + 8 * np.arange(k)[:, None] + np.arange(8)[None, :]
        half = (np.int64(1) << (MAXDEPTH - lv - 1))[:, None, None]
        anchors = self.anchor[nodes][:, None, :] + _OCT[None, :, :] * half
        self.level = np.concatenate([self.level, np.repeat(lv + 1, 8).astype(np.int8)])
        self.anchor = np.concatenate([self.anchor, anchors.reshape(-1, 3)])
        self.child = np.concatenate([self.child, np.full(8 * k, -1, dtype=np.int64)])
        self.h = np.concatenate([self.h, np.repeat(self.h[nodes], 8)])
        self.intersects = np.concatenate([self.intersects, np.zeros(8 * k, dtype=bool)])
        self.child[nodes] = ids[:, 0]
        self._leaves = None
        return ids

    def leaves(self) -> np.ndarray:
        """Leaf node ids in Z-order."""
        if self._leaves is None:
            cur = np.zeros(1, dtype=np.int64)
            while True:
                c = self.child[cur]
                inner = c >= 0
                if not inner.any():
                    break
                reps = np.where(inner, 8, 1)
                out = np.repeat(cur, reps)
                rank = np.arange(len(out)) - np.repeat(np.cumsum(reps) - reps, reps)
                inner_rep = np.repeat(inner, reps)
                out[inner_rep] = np.repeat(c[inner], 8) + rank[inner_rep]
                cur = out
            self._leaves = cur
        return self._leaves

    def size_units(self, nodes) -> np.ndarray:
        return np.int64(1) << (MAXDEPTH - self.level[nodes].astype(np.int64))

    def sides(self, nodes) -> np.ndarray:
        return np.ldexp(self.side, -self.level[nodes].astype(np.int64))

    def boxes(self, nodes):
        u = self.unit
        a = self.anchor[nodes]
        lo = self.lo + a * u
        hi = self.lo + (a + self.size_units(nodes)[:, None]) * u
        return lo, hi

    def centers(self, nodes) -> np.ndarray:
        lo, hi = self.boxes(nodes)
        return 0.5 * (lo + hi)

    def to_units(self, points) -> np.ndarray:
        """Integer coordinates of points, clamped into the root cube."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        q = np.floor((p - self.lo) / self.side * UNITS)
        return np.clip(np.nan_to_num(q, nan=0.0), 0, UNITS - 1).astype(np.int64)

    def locate_units(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.int64)
        return kernels.locate(self.child, np.ascontiguousarray(q[:, 0]), np.ascontiguousarray(q[:, 1]),
                              np.ascontiguousarray(q[:, 2]), MAXDEPTH)

    def locate(self, points) -> np.ndarray:
        """Leaf node containing each point (after clamping into the root)."""
        return self.locate_units(self.to_units(points))

    def leaf_volume_sum(self) -> float:
        return float(np.sum(self.sides(self.leaves()) ** 3))


def init_octree(bbox: AABB, params: SizeFieldParams) -> Octree:
    """Cubic root of side 1.5 L centred on ``bbox``, refined uniformly to h_b."""
    L = bbox.L
    if not L > 0:
        raise ValueError("bounding box is degenerate (L = 0)")
    side = ROOT_STRETCH * L
    tree = Octree(bbox.center - side / 2.0, side)
    depth = 0
    while np.ldexp(side, -depth) > params.h_b:
        depth += 1
    if depth > MAXDEPTH:
        raise OctreeError("h_b is too small for the depth cap")
    tree.h[:] = params.h_b
    for _ in range(depth):
        tree.split(tree.leaves())
    logger.info("octree init: side %.6g, depth %d, %d leaves", side, depth, 8 ** depth)
    return tree


def leaf_targets(tree: Octree, nodes, rtree: RTree, tri_target: np.ndarray, params: SizeFieldParams):
    """Surface contact and target size of each node.

    The target of a node touching triangle boxes is
    ``max(h_min, min(t, h_u(centre), h_b))`` with ``t`` the smallest triangle
    target among them. Returns ``(intersects, target)``; target is NaN elsewhere.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    lo, hi = tree.boxes(nodes)
    off, items = rtree.query(lo, hi)
    cnt = np.diff(off)
    inter = cnt > 0
    tmin = np.full(len(nodes), np.inf)
    if len(items):
        owner = np.repeat(np.arange(len(nodes)), cnt)
        np.minimum.at(tmin, owner, tri_target[items])
    target = np.full(len(nodes), np.nan)
    if inter.any():
        t = np.minimum(tmin[inter], params.h_b)
        if params.h_u is not None:
            hu = np.asarray(params.h_u(tree.centers(nodes[inter])), dtype=np.float64).reshape(-1)
            t = np.minimum(t, hu)
        target[inter] = np.maximum(params.h_min, t)
    return inter, target


def refine_octree(tree: Octree, rtree: RTree, tri_target: np.ndarray, params: SizeFieldParams) -> Octree:
    """Split surface leaves until each side is at most its target.

    Surface leaves store their target; other new leaves get h_b.
    """
    frontier = tree.leaves()
    rounds = 0
    while len(frontier):
        inter, target = leaf_targets(tree, frontier, rtree, tri_target, params)
        hit = frontier[inter]
        tree.h[hit] = target[inter]
        tree.intersects[hit] = True
        split = inter & (tree.sides(frontier) > target)
        parents = frontier[split]
        if len(parents) == 0:
            break
        if tree.level[parents].max() >= MAXDEPTH:
            raise OctreeError(f"refinement reached the depth cap {MAXDEPTH}")
        kids = tree.split(parents)
        tree.h[kids] = params.h_b
        frontier = kids.ravel()
        rounds += 1
    logger.info("refinement: %d rounds, %d leaves", rounds, len(tree.leaves()))
    return tree


def _across(tree: Octree, leaves: np.ndarray):
    """Integer probe points just across each of the 6 faces of every leaf.

    Returns ``probe (6, n, 3)`` and ``valid (6, n)``; direction ``2*axis`` is
    the + face and ``2*axis + 1`` the - face.
    """
    a = tree.anchor[leaves]
    s = tree.size_units(leaves)
    mid = a + (s // 2)[:, None]
    probe = np.empty((6, len(leaves), 3), dtype=np.int64)
    valid = np.empty((6, len(leaves)), dtype=bool)
    for axis in range(3):
        plus = mid.copy()
        plus[:, axis] = a[:, axis] + s
        minus = mid.copy()
        minus[:, axis] = a[:, axis] - 1
        probe[2 * axis] = plus
        probe[2 * axis + 1] = minus
        valid[2 * axis] = plus[:, axis] < UNITS
        valid[2 * axis + 1] = minus[:, axis] >= 0
    return probe, valid


def balance_octree(tree: Octree, rtree: RTree | None = None, tri_target=None,
                   params: SizeFieldParams | None = None) -> Octree:
    """Enforce 2:1 face balance by splitting coarse leaves.

    Children created here inherit the parent size, except that children
    touching the surface get their own target when ``rtree`` is given.
    """
    rounds = 0
    while True:
        leaves = tree.leaves()
        probe, valid = _across(tree, leaves)
        lv = tree.level[leaves].astype(np.int64)
        coarse = []
        for d in range(6):
            ok = valid[d]
            B = tree.locate_units(probe[d][ok])
            bad = tree.level[B].astype(np.int64) < lv[ok] - 1
            coarse.append(B[bad])
        coarse = np.unique(np.concatenate(coarse))
        if len(coarse) == 0:
            break
        kids = tree.split(coarse).ravel()
        parent_hit = np.repeat(tree.intersects[coarse], 8)
        if rtree is not None and parent_hit.any():
            cand = kids[parent_hit]
            inter, target = leaf_targets(tree, cand, rtree, tri_target, params)
            tree.h[cand[inter]] = target[inter]
            tree.intersects[cand[inter]] = True
        rounds += 1
    logger.info("balance: %d rounds, %d leaves", rounds, len(tree.leaves()))
    return tree


def face_pairs(tree: Octree, leaves: np.ndarray | None = None):
    """All face-adjacent leaf pairs.

    Returns
    -------
    lo, hi : ndarray of leaf positions (indices into ``leaves``)
        ``lo`` lies on the negative side of the shared face.
    axis : ndarray of int8
    dx : ndarray
        Centre-to-centre distance along the axis, (s_lo + s_hi) / 2.

    Pairs are sorted by axis, then by ``lo``, then by ``hi``.
    """
    if leaves is None:
        leaves = tree.leaves()
    pos = np.full(tree.n_nodes, -1, dtype=np.int64)
    pos[leaves] = np.arange(len(leaves))
    probe, valid = _across(tree, leaves)
    lv = tree.level[leaves].astype(np.int64)
    out_lo, out_hi, out_ax = [], [], []
    for d in range(6):
        axis, minus = divmod(d, 2)
        idx = np.flatnonzero(valid[d])
        B = tree.locate_units(probe[d][idx])
        lb = tree.level[B].astype(np.int64)
        if minus:
            keep = lb < lv[idx]
            A, Bp = idx[keep], pos[B[keep]]
            out_lo.append(Bp)
            out_hi.append(A)
        else:
            keep = lb <= lv[idx]
            A, Bp = idx[keep], pos[B[keep]]
            out_lo.append(A)
            out_hi.append(Bp)
        out_ax.append(np.full(len(A), axis, dtype=np.int8))
    lo = np.concatenate(out_lo)
    hi = np.concatenate(out_hi)
    ax = np.concatenate(out_ax)
    order = np.lexsort((hi, lo, ax))
    lo, hi, ax = lo[order], hi[order], ax[order]
    sides = tree.sides(leaves)
    dx = 0.5 * (sides[lo] + sides[hi])
    return lo, hi, ax, dx
