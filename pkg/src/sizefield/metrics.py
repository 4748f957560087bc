"""Mesh evaluation against a size field.

Metric edge length, efficiency index tau, discrete gradation and the
inradius/circumradius quality of tetrahedra.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .delaunay import circumcenters

logger = logging.getLogger(__name__)

__all__ = [
    "MeshReport",
    "TetMeshError",
    "discrete_gradation",
    "efficiency_index",
    "evaluate_mesh",
    "lbar",
    "metric_edge_lengths",
    "read_tet_mesh",
    "tet_quality",
    "unique_edges",
    "write_report",
]

SQRT2 = np.sqrt(2.0)


class TetMeshError(ValueError):
    pass


def _simpson(field_fn, A, B, n):
    """Composite Simpson of |B - A| / h over each segment, ``n`` even subintervals."""
    length = np.linalg.norm(B - A, axis=1)
    m = len(A)
    npts = n + 1
    seg = np.repeat(np.arange(m), npts)
    k = np.arange(npts.sum()) - np.repeat(np.cumsum(npts) - npts, npts)
    t = k / np.repeat(n, npts)
    X = A[seg] + t[:, None] * (B - A)[seg]
    w = np.where(k % 2 == 1, 4.0, 2.0)
    nn = np.repeat(n, npts)
    w[(k == 0) | (k == nn)] = 1.0
    vals = w / field_fn(X)
    total = np.bincount(seg, weights=vals, minlength=m)
    return length * total / (3.0 * n), X, seg


def metric_edge_lengths(field, A, B, min_intervals: int = 4, max_rounds: int = 8,
                        rtol: float = 1e-9, max_doublings: int = 12) -> np.ndarray:
    """l = integral over [0, 1] of |b - a| / h(a + t (b - a)) dt for every segment.

    The subinterval count starts at ``max(min_intervals, ceil(|b - a| / s))``
    rounded up to even, with ``s`` the smallest leaf side met along the
    segment.  Leaves are discovered at the sample points, so ``s`` is refined
    until stable.  Segments whose estimate still moves by more than ``rtol``
    when the count is doubled keep doubling, up to ``max_doublings`` times.

    Parameters
    ----------
    field : SizeField or callable
        A callable ``h(points)``; when it has ``leaf_of`` and ``sides`` (a
        :class:`~sizefield.field.SizeField`) leaf sides drive the sample count.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    length = np.linalg.norm(B - A, axis=1)
    fn = field.query if hasattr(field, "query") else field
    has_leaves = hasattr(field, "leaf_of")

    def count(side):
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.ceil(np.where(side > 0, length / side, 0.0))
        c = np.maximum(min_intervals, np.nan_to_num(c, posinf=min_intervals)).astype(np.int64)
        return c + (c % 2)

    n = count(np.full(len(A), np.inf))
    if has_leaves:
        sides = field.sides
        n = count(np.minimum(sides[field.leaf_of(A)], sides[field.leaf_of(B)]))
        for _ in range(max_rounds):
            _, X, seg = _simpson(fn, A, B, n)
            seen = np.full(len(A), np.inf)
            np.minimum.at(seen, seg, sides[field.leaf_of(X)])
            n_new = np.maximum(n, count(seen))
            if np.array_equal(n_new, n):
                break
            n = n_new
    val = _simpson(fn, A, B, n)[0]
    todo = np.arange(len(A))
    for _ in range(max_doublings):
        if len(todo) == 0:
            break
        n[todo] *= 2
        fine = _simpson(fn, A[todo], B[todo], n[todo])[0]
        moved = np.abs(fine - val[todo]) > rtol * np.abs(fine)
        val[todo] = fine
        todo = todo[moved]
    if len(todo):
        logger.warning("%d edge integrals not converged to rtol %g", len(todo), rtol)
    return val


def lbar(l):
    """l - 1 for l < 1, 1/l - 1 otherwise."""
    l = np.asarray(l, dtype=np.float64)
    return np.where(l < 1.0, l - 1.0, 1.0 / l - 1.0)


def efficiency_index(lengths):
    """Returns ``(tau, fraction of lengths in [1/sqrt 2, sqrt 2])``."""
    l = np.asarray(lengths, dtype=np.float64).reshape(-1)
    if len(l) == 0:
        raise ValueError("efficiency index needs at least one edge")
    tau = float(np.exp(np.mean(lbar(l))))
    frac = float(np.mean((l >= 1.0 / SQRT2) & (l <= SQRT2)))
    return tau, frac


def unique_edges(cells: np.ndarray) -> np.ndarray:
    """Sorted unique edges of triangles (k=3) or tetrahedra (k=4)."""
    cells = np.asarray(cells, dtype=np.int64)
    k = cells.shape[1]
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    e = np.sort(cells[:, pairs].reshape(-1, 2), axis=1)
    return np.unique(e, axis=0)


def discrete_gradation(vertices, edges):
    """Per-edge ratio of the endpoint average incident-edge lengths.

    Returns ``(alpha_d per edge, mean)``.
    """
    V = np.asarray(vertices, dtype=np.float64)
    E = np.asarray(edges, dtype=np.int64)
    ln = np.linalg.norm(V[E[:, 1]] - V[E[:, 0]], axis=1)
    n = len(V)
    deg = np.bincount(E.ravel(), minlength=n)
    tot = np.bincount(E.ravel(), weights=np.repeat(ln, 2), minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        lavg = tot / deg
    a, b = lavg[E[:, 0]], lavg[E[:, 1]]
    ad = np.maximum(a, b) / np.minimum(a, b)
    return ad, float(np.mean(ad)) if len(ad) else float("nan")


def tet_quality(tets) -> np.ndarray:
    """gamma = r / R per tet, 0 for degenerate ones; 1/3 for the regular tet.

    ``tets`` is (4, 3) or (m, 4, 3).
    """
    T = np.asarray(tets, dtype=np.float64)
    single = T.ndim == 2
    T = T.reshape(-1, 4, 3)
    a, b, c, d = T[:, 0], T[:, 1], T[:, 2], T[:, 3]
    vol = np.abs(np.einsum("ij,ij->i", b - a, np.cross(c - a, d - a))) / 6.0
    area = sum(0.5 * np.linalg.norm(np.cross(q - p, r - p), axis=1)
               for p, q, r in ((b, c, d), (a, c, d), (a, b, d), (a, b, c)))
    P = T.reshape(-1, 3)
    idx = np.arange(len(P)).reshape(-1, 4)
    _, R, sliver = circumcenters(P, idx)
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = (3.0 * vol / area) / R
    gamma[sliver | ~np.isfinite(gamma)] = 0.0
    return float(gamma[0]) if single else gamma


@dataclass
class MeshReport:
    lengths: np.ndarray
    tau: float
    in_range: float
    alpha_d: np.ndarray
    alpha_d_mean: float
    gamma: np.ndarray | None = None
    histograms: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "edges": len(self.lengths),
            "tau": self.tau,
            "in_range": self.in_range,
            "length_median": float(np.median(self.lengths)),
            "alpha_d_mean": self.alpha_d_mean,
            "alpha_d_max": float(np.max(self.alpha_d)) if len(self.alpha_d) else float("nan"),
        }
        if self.gamma is not None and len(self.gamma):
            out.update({
                "tets": len(self.gamma),
                "gamma_min": float(self.gamma.min()),
                "gamma_mean": float(self.gamma.mean()),
                "gamma_norm_min": float(3 * self.gamma.min()),
                "gamma_norm_below_0.4": float(np.mean(3 * self.gamma < 0.4)),
            })
        return out


def evaluate_mesh(field, vertices, edges, tets=None, bins: int = 20) -> MeshReport:
    """Metric lengths, tau, discrete gradation and (for tets) quality."""
    V = np.asarray(vertices, dtype=np.float64)
    E = np.asarray(edges, dtype=np.int64)
    l = metric_edge_lengths(field, V[E[:, 0]], V[E[:, 1]])
    tau, frac = efficiency_index(l)
    ad, adm = discrete_gradation(V, E)
    hist = {"length": np.histogram(l, bins=bins, range=(0.0, 2.0)),
            "alpha_d": np.histogram(ad, bins=bins, range=(1.0, 3.0))}
    gamma = None
    if tets is not None and len(tets):
        gamma = tet_quality(V[np.asarray(tets, dtype=np.int64)])
        hist["gamma"] = np.histogram(gamma, bins=bins, range=(0.0, 1.0 / 3.0))
        hist["gamma_normalized"] = np.histogram(3 * gamma, bins=bins, range=(0.0, 1.0))
    return MeshReport(l, tau, frac, ad, adm, gamma, hist)


def read_tet_mesh(path):
    """Minimal ASCII tet format: node count, nodes (x y z), tet count, tets (4 ids, 0-based)."""
    try:
        tokens = Path(path).read_text().split()
    except OSError as exc:
        raise TetMeshError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise TetMeshError(f"{path} is not a text tet mesh") from None
    try:
        pos = 0
        nn = int(tokens[pos]); pos += 1
        nodes = np.array(tokens[pos:pos + 3 * nn], dtype=np.float64).reshape(nn, 3); pos += 3 * nn
        nt = int(tokens[pos]); pos += 1
        tets = np.array(tokens[pos:pos + 4 * nt], dtype=np.int64).reshape(nt, 4); pos += 4 * nt
    except (IndexError, ValueError) as exc:
        raise TetMeshError(f"malformed tet mesh {path}: {exc}") from None
    if pos != len(tokens):
        raise TetMeshError(f"trailing data in tet mesh {path}")
    if nt and (tets.min() < 0 or tets.max() >= nn):
        raise TetMeshError("tet index out of range")
    return nodes, tets


def write_report(report: MeshReport, out_dir):
    """Write summary.csv and one histogram CSV per quantity into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["key,value"] + [f"{k},{v!r}" for k, v in report.summary().items()]
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    for name, (counts, edges) in report.histograms.items():
        rows = ["bin_lo,bin_hi,count"] + [f"{lo!r},{hi!r},{c}" for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
        (out / f"hist_{name}.csv").write_text("\n".join(rows) + "\n")
