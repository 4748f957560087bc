"""Gradient limiting on a balanced octree.

Sizes are clamped pairwise across faces, ``h_big = min(h_big, h_small +
dx (alpha - 1))``, until no pair changes.  Sizes only decrease, so the sweeps
terminate at the unique fixed point
``h*_i = min_j (h_j + (alpha - 1) d(i, j))`` with ``d`` the graph distance of
face-adjacent centre offsets.
"""

from __future__ import annotations

import logging

import numpy as np

from ._backend import kernels

logger = logging.getLogger(__name__)

__all__ = ["LimiterError", "StencilError", "compute_gradients", "limit_sizes", "max_residual",
           "MAX_PASSES", "BOUND_TOL"]

MAX_PASSES = 1000
BOUND_TOL = 1e-12


class LimiterError(RuntimeError):
    pass


class StencilError(RuntimeError):
    """Face-neighbour configuration not allowed on a 2:1 balanced tree."""


def max_residual(h: np.ndarray, lo, hi, dx, alpha: float) -> float:
    """max over pairs of |h_a - h_b| / dx - (alpha - 1); -inf without pairs."""
    if len(lo) == 0:
        return -np.inf
    return float(np.max(np.abs(h[lo] - h[hi]) / dx) - (alpha - 1.0))


def limit_sizes(h: np.ndarray, pairs, alpha: float, max_passes: int = MAX_PASSES) -> int:
    """Clamp ``h`` in place; returns the number of sweeps that changed a value.

    Parameters
    ----------
    h : ndarray (n,) float64
        Leaf sizes, modified in place.
    pairs : tuple
        ``(lo, hi, axis, dx)`` as returned by :func:`sizefield.octree.face_pairs`,
        sorted by axis.
    alpha : float
        Gradation, > 1.
    """
    if not alpha > 1:
        raise ValueError("alpha must be > 1")
    lo, hi, axis, dx = pairs
    if h.dtype != np.float64 or not h.flags.c_contiguous:
        raise ValueError("h must be a contiguous float64 array")
    if len(lo) and np.any(np.diff(axis) < 0):
        raise ValueError("pairs must be sorted by axis")
    start = np.searchsorted(axis, np.arange(4)).astype(np.int64)
    before = max_residual(h, lo, hi, dx, alpha)
    passes = kernels.limit_sweeps(h, np.ascontiguousarray(lo, dtype=np.int64),
                                  np.ascontiguousarray(hi, dtype=np.int64),
                                  np.ascontiguousarray(dx, dtype=np.float64),
                                  start, float(alpha - 1.0), int(max_passes))
    after = max_residual(h, lo, hi, dx, alpha)
    if passes < 0:
        raise LimiterError(f"no fixed point after {max_passes} sweeps; worst residual {after:.3e}")
    logger.info("limiter: %d sweeps, residual %.3e -> %.3e", passes, before, after)
    return passes


def compute_gradients(levels: np.ndarray, h: np.ndarray, pairs) -> np.ndarray:
    """Cell-centred gradient of every leaf.

    Per axis, ``dh = (hbar_+ - h) / (2 dx_+) + (h - hbar_-) / (2 dx_-)``, where
    ``hbar`` is the neighbour size or the mean of the four finer neighbours
    across the face, and a side without neighbours contributes 0.
    """
    lo, hi, axis, dx = pairs
    n = len(h)
    levels = np.asarray(levels, dtype=np.int64)
    grad = np.zeros((n, 3))
    for ax in range(3):
        sel = axis == ax
        a, b, d = lo[sel], hi[sel], dx[sel]
        for me, other, sign in ((a, b, 1.0), (b, a, -1.0)):
            cnt = np.bincount(me, minlength=n)
            ssum = np.bincount(me, weights=h[other], minlength=n)
            dxs = np.zeros(n)
            dxs[me] = d
            jump = levels[other] - levels[me]
            bad_count = ~np.isin(cnt, (0, 1, 4))
            fine = np.bincount(me, weights=(jump == 1), minlength=n)
            ok_jump = np.isin(jump, (-1, 0, 1))
            bad = bad_count | ((cnt == 4) & (fine != 4)) | ((cnt == 1) & (fine != 0))
            if bad.any() or not ok_jump.all():
                raise StencilError("unbalanced face neighbourhood; balance the tree first")
            has = cnt > 0
            hbar = np.zeros(n)
            hbar[has] = ssum[has] / cnt[has]
            term = np.zeros(n)
            if sign > 0:
                term[has] = (hbar[has] - h[has]) / (2.0 * dxs[has])
            else:
                term[has] = (h[has] - hbar[has]) / (2.0 * dxs[has])
            grad[:, ax] += term
    return grad
