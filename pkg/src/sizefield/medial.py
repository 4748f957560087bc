"""Medial-axis feature size from Voronoi poles and filtered Delaunay edges.

For every surface vertex p the pole p+ is the farthest Voronoi vertex of its
cell and v_p = p+ - p approximates the surface normal.  The umbrella U_p is
the set of Delaunay facets around p whose dual Voronoi edges cross the plane
through p normal to v_p.  A Delaunay edge pq whose direction is close to the
umbrella normals (angle condition) or that is much longer than the umbrella
triangles (ratio condition) crosses the medial axis; its length is the local
feature size.  Edges steeply inclined to the vertex normals are discarded as
corner branches.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .delaunay import DelaunayComplex
from .mesh_io import MeshWarning

logger = logging.getLogger(__name__)

__all__ = [
    "FeatureField",
    "PoleData",
    "compute_poles",
    "corner_filter",
    "feature_meshsize",
    "filter_feature_edges",
    "compute_feature_field",
    "THETA",
    "RHO",
]

THETA = np.pi / 8
RHO = 8.0
# Facets with twice-area below this times longest edge**2 have no usable R_i.
_FLAT_FACET = 1e-12


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, v / n, np.nan)


@dataclass
class PoleData:
    """Poles, pole vectors and umbrellas of every vertex.

    ``pole[p]`` is the farthest incident circumcenter even for hull vertices,
    whose cells are unbounded; for those ``unbounded[p]`` is set and
    ``vector[p]`` is the mean outward normal of the incident hull facets.
    Umbrella facets of ``p`` are ``umbrella_facet[umbrella_offsets[p]:umbrella_offsets[p + 1]]``.
    """

    pole: np.ndarray
    pole_tet: np.ndarray
    vector: np.ndarray
    unbounded: np.ndarray
    umbrella_offsets: np.ndarray
    umbrella_facet: np.ndarray
    facets: np.ndarray
    facet_normal: np.ndarray
    facet_radius: np.ndarray

    def umbrella(self, p: int) -> np.ndarray:
        return self.umbrella_facet[self.umbrella_offsets[p]:self.umbrella_offsets[p + 1]]


def _facet_geometry(P, facets):
    a, b, c = (P[facets[:, i]] for i in range(3))
    ab, ac = b - a, c - a
    cr = np.cross(ab, ac)
    dbl = np.linalg.norm(cr, axis=1)
    longest2 = np.max(np.stack([(ab * ab).sum(1), (ac * ac).sum(1), ((c - b) ** 2).sum(1)]), axis=0)
    flat = dbl <= _FLAT_FACET * longest2
    normal = _unit(cr)
    with np.errstate(invalid="ignore", divide="ignore"):
        R = np.linalg.norm(ab, axis=1) * np.linalg.norm(ac, axis=1) * np.linalg.norm(c - b, axis=1) / (2 * dbl)
    R[flat] = np.nan
    return normal, R


def compute_poles(dc: DelaunayComplex) -> PoleData:
    """Poles and umbrellas for every point of the complex."""
    P = dc.points
    n = len(P)
    cc = dc.circumcenters
    off = dc.vertex_tet_offsets
    tets = dc.vertex_tet_index
    owner = np.repeat(np.arange(n), np.diff(off))
    dist = np.linalg.norm(cc[tets] - P[owner], axis=1)
    # slivers only compete when nothing else is incident
    order = np.lexsort((tets, -dist, dc.sliver[tets], owner))
    first = np.ones(len(order), dtype=bool)
    first[1:] = owner[order][1:] != owner[order][:-1]
    pick = order[first]
    pole_tet = np.full(n, -1, dtype=np.int64)
    pole_tet[owner[pick]] = tets[pick]
    missing = pole_tet < 0
    if missing.any():
        warnings.warn(f"{int(missing.sum())} point(s) without incident tets", MeshWarning, stacklevel=2)
    pole = np.full((n, 3), np.nan)
    pole[~missing] = cc[pole_tet[~missing]]
    vector = pole - P

    unbounded = dc.is_hull_vertex.copy()
    out = np.zeros((n, 3))
    for i in range(3):
        np.add.at(out, dc.hull_facets[:, i], dc.hull_normals)
    vector[unbounded] = out[unbounded]
    vhat = _unit(vector)

    facets, ft = dc.facets()
    normal, R = _facet_geometry(P, facets)
    F = len(facets)
    c0 = cc[ft[:, 0]]
    hull = ft[:, 1] < 0
    c1 = np.where(hull[:, None], 0.0, cc[np.maximum(ft[:, 1], 0)])
    # outward direction of the Voronoi ray dual to a hull facet
    ray = np.zeros((F, 3))
    if hull.any():
        key = {tuple(sorted(f)): k for k, f in enumerate(dc.hull_facets.tolist())}
        idx = np.array([key[tuple(f)] for f in facets[hull].tolist()], dtype=np.int64)
        ray[hull] = dc.hull_normals[idx]

    fid = np.repeat(np.arange(F), 3)
    pid = facets.ravel()
    vp = vhat[pid]
    s0 = np.einsum("ij,ij->i", c0[fid] - P[pid], vp)
    s1 = np.einsum("ij,ij->i", c1[fid] - P[pid], vp)
    sr = np.einsum("ij,ij->i", ray[fid], vp)
    on_hull = hull[fid]
    cut = np.where(on_hull, (s0 == 0) | (np.sign(sr) * np.sign(s0) < 0), s0 * s1 <= 0)
    cut &= np.isfinite(vp).all(axis=1)
    pid, fid = pid[cut], fid[cut]
    order = np.lexsort((fid, pid))
    pid, fid = pid[order], fid[order]
    uoff = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(pid, minlength=n), out=uoff[1:])
    return PoleData(pole, pole_tet, vector, unbounded, uoff, fid, facets, normal, R)


@dataclass
class FeatureField:
    """Accepted edges and per-vertex feature sizes.

    ``reason`` holds a bitmask per accepted edge (1: angle, 2: ratio).
    ``f`` and ``h_f`` are ``inf`` where no accepted edge touches a vertex.
    ``sampling_ratio`` is the longest incident surface edge over f, an
    epsilon-sampling diagnostic.
    """

    edges: np.ndarray
    reason: np.ndarray
    f: np.ndarray
    n_g: float
    sampling_ratio: np.ndarray | None = None

    @property
    def h_f(self) -> np.ndarray:
        return feature_meshsize(self.f, self.n_g)


ANGLE = 1
RATIO = 2


def filter_feature_edges(dc: DelaunayComplex, poles: PoleData, theta: float = THETA, rho: float = RHO):
    """Delaunay edges passing the angle or ratio condition at either endpoint.

    Returns ``(edge_ids, reason)`` with ``reason`` a bitmask (ANGLE | RATIO).
    """
    P = dc.points
    E = dc.edges
    d = P[E[:, 1]] - P[E[:, 0]]
    length = np.linalg.norm(d, axis=1)
    dhat = d / length[:, None]
    reason = np.zeros(len(E), dtype=np.int8)
    sin_t = np.sin(theta)
    uoff = poles.umbrella_offsets
    usize = np.diff(uoff)
    empty = 0
    for end in (0, 1):
        p = E[:, end]
        cnt = usize[p]
        empty += int((cnt == 0).sum())
        eid = np.repeat(np.arange(len(E)), cnt)
        start = np.repeat(uoff[p], cnt)
        rank = np.arange(len(eid)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        fac = poles.umbrella_facet[start + rank]
        cosv = np.abs(np.einsum("ij,ij->i", dhat[eid], poles.facet_normal[fac]))
        R = poles.facet_radius[fac]
        min_cos = np.full(len(E), np.inf)
        np.minimum.at(min_cos, eid, cosv)
        min_R = np.full(len(E), np.inf)
        ok = np.isfinite(R)
        np.minimum.at(min_R, eid[ok], R[ok])
        has = cnt > 0
        # max angle to the normal lines < pi/2 - theta  <=>  min |cos| > sin(theta)
        reason[has & (min_cos > sin_t)] |= ANGLE
        reason[has & (length > rho * min_R)] |= RATIO
    if empty:
        logger.info("%d edge endpoints with empty umbrella", empty)
    keep = np.flatnonzero(reason)
    return keep, reason[keep]


def corner_filter(dc: DelaunayComplex, edge_ids: np.ndarray, normals: np.ndarray, theta: float = THETA):
    """Mask of edges whose line stays within ``theta`` of both endpoint normal lines."""
    E = dc.edges[edge_ids]
    d = dc.points[E[:, 1]] - dc.points[E[:, 0]]
    dhat = d / np.linalg.norm(d, axis=1)[:, None]
    c = np.cos(theta)
    cp = np.abs(np.einsum("ij,ij->i", dhat, normals[E[:, 0]]))
    cq = np.abs(np.einsum("ij,ij->i", dhat, normals[E[:, 1]]))
    return (cp >= c) & (cq >= c)


def feature_meshsize(f, n_g):
    """h_f = f / n_g (unconstrained where f is inf)."""
    if n_g < 1:
        raise ValueError("n_g must be at least 1")
    return np.asarray(f, dtype=np.float64) / n_g


def compute_feature_field(dc: DelaunayComplex, normals: np.ndarray, n_g: float = 4,
                          theta: float = THETA, rho: float = RHO, surface_edges=None) -> FeatureField:
    """Poles, edge filters and per-vertex feature size in one call.

    ``normals`` are the surface vertex normals indexed like ``dc.points``.
    """
    poles = compute_poles(dc)
    ids, reason = filter_feature_edges(dc, poles, theta, rho)
    keep = corner_filter(dc, ids, normals, theta)
    ids, reason = ids[keep], reason[keep]
    E = dc.edges[ids]
    length = np.linalg.norm(dc.points[E[:, 1]] - dc.points[E[:, 0]], axis=1)
    f = np.full(len(dc.points), np.inf)
    np.minimum.at(f, E[:, 0], length)
    np.minimum.at(f, E[:, 1], length)
    ratio = None
    if surface_edges is not None and len(surface_edges):
        se = np.asarray(surface_edges)
        sl = np.linalg.norm(dc.points[se[:, 1]] - dc.points[se[:, 0]], axis=1)
        longest = np.zeros(len(dc.points))
        np.maximum.at(longest, se[:, 0], sl)
        np.maximum.at(longest, se[:, 1], sl)
        with np.errstate(invalid="ignore"):
            ratio = longest / f
    logger.info("feature edges: %d accepted of %d", len(ids), len(dc.edges))
    return FeatureField(E, reason, f, n_g, ratio)
