"""Incremental Delaunay tetrahedrization with exact predicates.

Points are inserted one at a time (Bowyer-Watson) in a spatially sorted order.
The enclosing super-simplex is symbolic: a single vertex at infinity closes the
complex, so hull facets are exact and nothing has to be carved away at the end.
Co-spherical ties are resolved by the index-keyed perturbation of
:mod:`.predicates`, which makes the result independent of insertion order.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

import numpy as np

from . import _backend

logger = logging.getLogger(__name__)

__all__ = [
    "DelaunayComplex",
    "DelaunayError",
    "tetrahedralize",
    "circumcenter",
    "circumcenters",
    "tet_volumes",
]

SLIVER_TOL = 1e-12


class DelaunayError(ValueError):
    pass


def tet_volumes(points: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volumes det[b - a, c - a, d - a] / 6."""
    a, b, c, d = (points[tets[:, i]] for i in range(4))
    return np.einsum("ij,ij->i", b - a, np.cross(c - a, d - a)) / 6.0


def circumcenters(points: np.ndarray, tets: np.ndarray):
    """Circumcenters and radii of many tets.

    Returns
    -------
    centers : ndarray (T, 3)
    radii : ndarray (T,)
    sliver : ndarray (T,) of bool
        Tets with ``|volume| < 1e-12 * longest_edge**3``; their center comes from
        a least-squares solve of the equidistance system and is only indicative.
    """
    points = np.asarray(points, dtype=np.float64)
    tets = np.asarray(tets, dtype=np.int64).reshape(-1, 4)
    a = points[tets[:, 0]]
    u = points[tets[:, 1]] - a
    v = points[tets[:, 2]] - a
    w = points[tets[:, 3]] - a
    uu = np.einsum("ij,ij->i", u, u)
    vv = np.einsum("ij,ij->i", v, v)
    ww = np.einsum("ij,ij->i", w, w)
    vxw = np.cross(v, w)
    wxu = np.cross(w, u)
    uxv = np.cross(u, v)
    det = np.einsum("ij,ij->i", u, vxw)
    edges = np.stack(
        [uu, vv, ww,
         np.einsum("ij,ij->i", v - u, v - u),
         np.einsum("ij,ij->i", w - u, w - u),
         np.einsum("ij,ij->i", w - v, w - v)], axis=1)
    longest = np.sqrt(edges.max(axis=1))
    sliver = np.abs(det) / 6.0 <= SLIVER_TOL * longest**3
    offset = np.empty_like(a)
    ok = ~sliver
    if ok.any():
        num = uu[ok, None] * vxw[ok] + vv[ok, None] * wxu[ok] + ww[ok, None] * uxv[ok]
        offset[ok] = num / (2.0 * det[ok, None])
    for t in np.flatnonzero(sliver):
        M = np.stack([u[t], v[t], w[t]])
        rhs = 0.5 * np.array([uu[t], vv[t], ww[t]])
        offset[t] = np.linalg.lstsq(M, rhs, rcond=1e-12)[0]
    centers = a + offset
    radii = np.linalg.norm(offset, axis=1)
    return centers, radii, sliver


def circumcenter(tet_points) -> tuple[np.ndarray, float]:
    """Center and radius of the sphere through four points."""
    P = np.asarray(tet_points, dtype=np.float64).reshape(4, 3)
    c, r, sliver = circumcenters(P, np.arange(4)[None, :])
    if sliver[0]:
        logger.warning("circumcenter of a near-flat tet: regularized solve")
    return c[0], float(r[0])


def _csr(keys: np.ndarray, n: int):
    order = np.argsort(keys, kind="stable")
    counts = np.bincount(keys, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, order


def _morton_order(points: np.ndarray) -> np.ndarray:
    lo = points.min(axis=0)
    ext = np.ptp(points, axis=0).max()
    q = np.floor((points - lo) / (ext if ext > 0 else 1.0) * 1023.0).astype(np.int64)
    code = np.zeros(len(points), dtype=np.int64)
    for bit in range(10):
        for axis in range(3):
            code |= ((q[:, axis] >> bit) & 1) << (3 * bit + axis)
    return np.lexsort((np.arange(len(points)), code))


@dataclass
class DelaunayComplex:
    """Finite part of a Delaunay tetrahedrization.

    ``neighbors[t, i]`` is the tet across the face opposite ``tets[t, i]``, or -1
    on the convex hull.  ``index_map`` maps each input point to its row in
    ``points`` (duplicates collapse onto their first occurrence).
    """

    points: np.ndarray
    tets: np.ndarray
    neighbors: np.ndarray
    index_map: np.ndarray
    circumcenters: np.ndarray = field(repr=False)
    circumradii: np.ndarray = field(repr=False)
    sliver: np.ndarray = field(repr=False)
    hull_facets: np.ndarray = field(repr=False)
    hull_facet_tet: np.ndarray = field(repr=False)
    hull_normals: np.ndarray = field(repr=False)
    exact_calls: int = 0

    def __post_init__(self):
        n = len(self.points)
        self.vertex_tet_offsets, self.vertex_tet_index = _csr(self.tets.ravel(), n)
        self.vertex_tet_index = self.vertex_tet_index // 4
        self.is_hull_vertex = np.zeros(n, dtype=bool)
        self.is_hull_vertex[self.hull_facets.ravel()] = True
        pairs = self.tets[:, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]].reshape(-1, 2)
        pairs.sort(axis=1)
        self.edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.edge_tet_offsets, order = _csr(inverse, len(self.edges))
        self.edge_tet_index = order // 6
        self._facets = None

    @property
    def n_points(self) -> int:
        return len(self.points)

    def vertex_tets(self, v: int) -> np.ndarray:
        """Indices (ascending) of the tets incident to vertex ``v``."""
        return self.vertex_tet_index[self.vertex_tet_offsets[v]:self.vertex_tet_offsets[v + 1]]

    def edge_tets(self, e: int) -> np.ndarray:
        return self.edge_tet_index[self.edge_tet_offsets[e]:self.edge_tet_offsets[e + 1]]

    def facets(self):
        """Unique triangles of the complex.

        Returns ``(facets (F, 3) sorted vertex ids, facet_tets (F, 2))`` where the
        second column is -1 for hull facets.
        """
        if self._facets is None:
            faces = self.tets[:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]].reshape(-1, 3)
            faces = np.sort(faces, axis=1)
            uniq, inverse = np.unique(faces, axis=0, return_inverse=True)
            inverse = inverse.ravel()
            owner = np.arange(len(faces)) // 4
            order = np.lexsort((owner, inverse))
            ft = np.full((len(uniq), 2), -1, dtype=np.int64)
            inv_sorted = inverse[order]
            first = np.ones(len(order), dtype=bool)
            first[1:] = inv_sorted[1:] != inv_sorted[:-1]
            ft[inv_sorted[first], 0] = owner[order][first]
            ft[inv_sorted[~first], 1] = owner[order][~first]
            self._facets = (uniq, ft)
        return self._facets

    def volume(self) -> float:
        return float(np.abs(tet_volumes(self.points, self.tets)).sum())


class _Builder:
    def __init__(self, points: np.ndarray, kern):
        self.P = points
        self.n = len(points)
        self.INF = self.n
        self.pred = kern.Predicates(points)
        self.V: list[int] = []
        self.N: list[int] = []
        self.alive: list[bool] = []
        self.stamp: list[int] = []
        self.free: list[int] = []
        self.rng = random.Random(0x5EED)
        self.last = 0

    def alloc(self, verts) -> int:
        if self.free:
            t = self.free.pop()
            b = 4 * t
            self.V[b:b + 4] = verts
            self.N[b:b + 4] = [-1, -1, -1, -1]
            self.alive[t] = True
        else:
            t = len(self.alive)
            self.V.extend(verts)
            self.N.extend((-1, -1, -1, -1))
            self.alive.append(True)
            self.stamp.append(-1)
        return t

    def link_all(self, tets):
        faces = {}
        V, N = self.V, self.N
        for t in tets:
            vs = V[4 * t:4 * t + 4]
            for k in range(4):
                key = tuple(sorted(vs[:k] + vs[k + 1:]))
                other = faces.pop(key, None)
                if other is None:
                    faces[key] = (t, k)
                else:
                    N[4 * t + k] = other[0]
                    N[4 * other[0] + other[1]] = t
        if faces:
            raise DelaunayError("initial complex is not closed")

    def start(self, a, b, c, d):
        if self.pred.orient(a, b, c, d) < 0:
            a, b = b, a
        t0 = self.alloc([a, b, c, d])
        created = [t0]
        base = [a, b, c, d]
        INF = self.INF
        for k in range(4):
            vs = list(base)
            vs[k] = INF
            j, l = [x for x in range(4) if x != k][:2]
            vs[j], vs[l] = vs[l], vs[j]
            created.append(self.alloc(vs))
        self.link_all(created)
        self.last = t0

    def conflict(self, t: int, p: int) -> bool:
        V = self.V
        b = 4 * t
        v0, v1, v2, v3 = V[b], V[b + 1], V[b + 2], V[b + 3]
        INF = self.INF
        if v0 == INF or v1 == INF or v2 == INF or v3 == INF:
            q = [v0, v1, v2, v3]
            k = q.index(INF)
            q[k] = p
            o = self.pred.orient(q[0], q[1], q[2], q[3])
            if o != 0:
                return o > 0
            f = self.N[b + k]
            fb = 4 * f
            return self.pred.insphere(V[fb], V[fb + 1], V[fb + 2], V[fb + 3], p) > 0
        return self.pred.insphere(v0, v1, v2, v3, p) > 0

    def locate(self, p: int) -> int:
        V, N, INF = self.V, self.N, self.INF
        orient = self.pred.orient
        t = self.last
        prev = -1
        rng = self.rng
        while True:
            b = 4 * t
            vs = V[b:b + 4]
            if INF in vs:
                return t
            s = rng.getrandbits(2)
            for kk in range(4):
                k = (s + kk) & 3
                nb = N[b + k]
                if nb == prev:
                    continue
                q = list(vs)
                q[k] = p
                if orient(q[0], q[1], q[2], q[3]) < 0:
                    prev = t
                    t = nb
                    break
            else:
                return t

    def insert(self, p: int, stamp_id: int):
        V, N, stamp = self.V, self.N, self.stamp
        t0 = self.locate(p)
        if not self.conflict(t0, p):
            raise DelaunayError(f"point {p}: located tet is not in conflict")
        cavity = [t0]
        stamp[t0] = stamp_id
        rejected = set()
        boundary = []
        i = 0
        while i < len(cavity):
            t = cavity[i]
            i += 1
            b = 4 * t
            for k in range(4):
                nb = N[b + k]
                if stamp[nb] == stamp_id:
                    continue
                if nb not in rejected:
                    if self.conflict(nb, p):
                        stamp[nb] = stamp_id
                        cavity.append(nb)
                        continue
                    rejected.add(nb)
                boundary.append((t, k, nb))
        INF = self.INF
        newverts = []
        for t, k, nb in boundary:
            vs = V[4 * t:4 * t + 4]
            vs[k] = p
            newverts.append(vs)
        created = [self.alloc(vs) for vs in newverts]
        faces = {}
        last = -1
        for T, (t, k, nb), vs in zip(created, boundary, newverts):
            N[4 * T + k] = nb
            nbb = 4 * nb
            for j in range(4):
                if N[nbb + j] == t:
                    N[nbb + j] = T
                    break
            if INF not in vs:
                last = T
            for j in range(4):
                if j == k:
                    continue
                o1, o2 = [vs[x] for x in range(4) if x != j and x != k]
                key = (o1, o2) if o1 < o2 else (o2, o1)
                other = faces.pop(key, None)
                if other is None:
                    faces[key] = (T, j)
                else:
                    N[4 * T + j] = other[0]
                    N[4 * other[0] + other[1]] = T
        if faces:
            raise DelaunayError(f"point {p}: cavity retriangulation is not closed")
        for t in cavity:
            self.alive[t] = False
            self.free.append(t)
        if last >= 0:
            self.last = last


def _first_independent(P: np.ndarray, order: np.ndarray, pred) -> tuple[int, int, int, int]:
    exact = pred.exact
    ints = exact.ints
    a = int(order[0])
    b = int(order[1])
    pa, pb = ints[a], ints[b]
    ab = [pb[i] - pa[i] for i in range(3)]
    c = None
    for cand in order[2:]:
        pc = ints[int(cand)]
        ac = [pc[i] - pa[i] for i in range(3)]
        cross = (ab[1] * ac[2] - ab[2] * ac[1], ab[2] * ac[0] - ab[0] * ac[2],
                 ab[0] * ac[1] - ab[1] * ac[0])
        if any(cross):
            c = int(cand)
            break
    if c is None:
        raise DelaunayError("all points are collinear")
    for cand in order[2:]:
        cand = int(cand)
        if cand != c and exact.orient(a, b, c, cand) != 0:
            return a, b, c, cand
    raise DelaunayError("all points are coplanar")


def tetrahedralize(points, backend: str | None = None) -> DelaunayComplex:
    """Delaunay tetrahedrization of a 3D point set.

    Parameters
    ----------
    points : array_like, shape (m, 3)
    backend : {"cython", "python"}, optional
        Predicate kernels; the import-time default when omitted.

    Raises
    ------
    DelaunayError
        Fewer than four distinct points, or all points coplanar.
    """
    raw = np.asarray(points, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != 3:
        raise DelaunayError("points must have shape (m, 3)")
    if not np.all(np.isfinite(raw)):
        raise DelaunayError("points must be finite")
    _, first, inverse = np.unique(raw, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    keep = np.sort(first)
    remap = np.empty(len(raw), dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    index_map = remap[first[inverse]]
    P = np.ascontiguousarray(raw[keep])
    if len(keep) < len(raw):
        logger.info("removed %d duplicate points", len(raw) - len(keep))
    if len(P) < 4:
        raise DelaunayError("need at least 4 distinct points")

    order = _morton_order(P)
    builder = _Builder(P, _backend.kernels if backend is None else _backend.get(backend))
    seed = _first_independent(P, order, builder.pred)
    builder.start(*seed)
    seeded = set(seed)
    stamp_id = 0
    for p in order:
        p = int(p)
        if p in seeded:
            continue
        builder.insert(p, stamp_id)
        stamp_id += 1
    return _finalize(builder, P, index_map)


def _finalize(builder: _Builder, P: np.ndarray, index_map: np.ndarray) -> DelaunayComplex:
    INF = builder.INF
    V = np.asarray(builder.V, dtype=np.int64).reshape(-1, 4)
    N = np.asarray(builder.N, dtype=np.int64).reshape(-1, 4)
    alive = np.asarray(builder.alive, dtype=bool)
    finite = alive & ~(V == INF).any(axis=1)
    new_id = np.full(len(V), -1, dtype=np.int64)
    new_id[finite] = np.arange(finite.sum())
    tets = V[finite]
    neighbors = new_id[N[finite]]
    if (neighbors[N[finite] >= 0] < -1).any():
        raise DelaunayError("dangling adjacency")

    hull_t, hull_k = np.nonzero(neighbors < 0)
    face_idx = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    hull_facets = tets[hull_t[:, None], face_idx[hull_k]]
    opposite = P[tets[hull_t, hull_k]]
    a, b, c = (P[hull_facets[:, i]] for i in range(3))
    nrm = np.cross(b - a, c - a)
    flip = np.einsum("ij,ij->i", nrm, opposite - a) > 0
    nrm[flip] *= -1.0
    hull_facets[flip] = hull_facets[flip][:, [1, 0, 2]]
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]

    centers, radii, sliver = circumcenters(P, tets)
    if sliver.any():
        logger.info("%d sliver-degenerate tets flagged", int(sliver.sum()))
    return DelaunayComplex(
        points=P,
        tets=tets,
        neighbors=neighbors,
        index_map=index_map,
        circumcenters=centers,
        circumradii=radii,
        sliver=sliver,
        hull_facets=hull_facets,
        hull_facet_tet=hull_t,
        hull_normals=nrm,
        exact_calls=builder.pred.exact_calls,
    )
