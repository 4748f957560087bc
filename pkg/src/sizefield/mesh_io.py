"""Triangle surface meshes: STL/OBJ readers and writers, welding, validation."""

from __future__ import annotations

import logging
import os
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

__all__ = [
    "AABB",
    "MeshError",
    "MeshWarning",
    "SurfaceMesh",
    "bounding_box",
    "load_surface_mesh",
    "save_obj",
    "save_stl",
    "weld",
    "WELD_RTOL",
]

WELD_RTOL = 1e-9
# A triangle is degenerate when twice its area is below this times L**2.
AREA_RTOL = 1e-14


class MeshError(ValueError):
    """Malformed, empty or unusable surface mesh."""


class MeshWarning(UserWarning):
    """Recoverable input defect (dropped facets, open boundary, winding)."""


@dataclass(frozen=True)
class AABB:
    lo: np.ndarray
    hi: np.ndarray

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def L(self) -> float:
        return float(np.max(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


@dataclass
class SurfaceMesh:
    """Indexed triangle mesh.

    Construct through :meth:`from_arrays`, which welds and validates; the
    constructor itself trusts its input.

    Attributes
    ----------
    vertices : ndarray (n, 3) float64
    triangles : ndarray (m, 3) int64
    vt_offsets, vt_index : ndarray
        CSR vertex-to-triangle adjacency; triangles of vertex ``v`` are
        ``vt_index[vt_offsets[v]:vt_offsets[v + 1]]`` in ascending order.
    edges : ndarray (e, 2) int64
        Unique undirected edges, each row sorted.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vt_offsets: np.ndarray = field(init=False, repr=False)
    vt_index: np.ndarray = field(init=False, repr=False)
    edges: np.ndarray = field(init=False, repr=False)
    edge_valence: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = len(self.vertices)
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        self.vt_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(flat, minlength=n), out=self.vt_offsets[1:])
        self.vt_index = order // 3
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        self.edges, self.edge_valence = np.unique(e, axis=0, return_counts=True)

    @classmethod
    def from_arrays(cls, vertices, triangles, weld_rtol: float = WELD_RTOL) -> "SurfaceMesh":
        """Weld, drop degenerate and unused data, validate, warn on defects."""
        V = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        T = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if len(V) == 0 or len(T) == 0:
            raise MeshError("empty mesh")
        if not np.all(np.isfinite(V)):
            raise MeshError("non-finite vertex coordinates")
        if T.min() < 0 or T.max() >= len(V):
            raise MeshError("triangle index out of range")
        used = np.unique(T)
        L = float(np.ptp(V[used], axis=0).max())
        V, T = weld(V, T, weld_rtol * L)
        T = _drop_degenerate(V, T, L)
        used, T = np.unique(T, return_inverse=True)
        mesh = cls(V[used], T.reshape(-1, 3))
        mesh._check_topology()
        return mesh

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def vertex_triangles(self, v: int) -> np.ndarray:
        return self.vt_index[self.vt_offsets[v]:self.vt_offsets[v + 1]]

    def face_normals(self, unit: bool = True) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        if unit:
            n /= np.linalg.norm(n, axis=1)[:, None]
        return n

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(unit=False), axis=1)

    def is_watertight(self) -> bool:
        return bool(np.all(self.edge_valence == 2))

    def boundary_vertices(self) -> np.ndarray:
        """Mask of vertices on an edge used by a single triangle."""
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.edge_valence == 1].ravel()] = True
        return mask

    def winding_consistent(self) -> bool:
        directed = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        _, counts = np.unique(directed, axis=0, return_counts=True)
        return bool(np.all(counts == 1))

    def _check_topology(self):
        if not self.is_watertight():
            warnings.warn(
                f"mesh is not watertight ({int(np.sum(self.edge_valence != 2))} open or "
                "non-manifold edges); feature sizes may degrade",
                MeshWarning, stacklevel=3)
        if not self.winding_consistent():
            warnings.warn("inconsistent triangle winding", MeshWarning, stacklevel=3)


def weld(vertices: np.ndarray, triangles: np.ndarray, tol: float):
    """Merge vertices closer than ``tol``; the first occurrence in a cluster wins.

    Clusters are transitive (connected components of the closeness graph).
    Returns the surviving vertices, in first-occurrence order, and remapped
    triangles.
    """
    n = len(vertices)
    if tol > 0:
        pairs = cKDTree(vertices).query_pairs(tol, output_type="ndarray")
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
    if tol == 0 or len(pairs) == 0:
        # exact duplicates still merge when tol is 0
        _, first, inv = np.unique(vertices, axis=0, return_index=True, return_inverse=True)
        rep = first[inv.ravel()]
    else:
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, label = connected_components(g, directed=False)
        first = np.full(label.max() + 1, n, dtype=np.int64)
        np.minimum.at(first, label, np.arange(n))
        rep = first[label]
    keep = np.flatnonzero(rep == np.arange(n))
    new = np.empty(n, dtype=np.int64)
    new[keep] = np.arange(len(keep))
    merged = n - len(keep)
    if merged:
        logger.debug("welded %d vertices", merged)
    return vertices[keep], new[rep][triangles]


def _drop_degenerate(V: np.ndarray, T: np.ndarray, L: float) -> np.ndarray:
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    dbl_area = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    repeated = (T[:, 0] == T[:, 1]) | (T[:, 1] == T[:, 2]) | (T[:, 0] == T[:, 2])
    bad = repeated | (dbl_area <= AREA_RTOL * L * L)
    if bad.all():
        raise MeshError("all triangles are degenerate")
    if bad.any():
        warnings.warn(f"dropped {int(bad.sum())} degenerate triangle(s)", MeshWarning, stacklevel=3)
    return T[~bad]


def bounding_box(mesh: SurfaceMesh) -> AABB:
    if mesh.n_vertices == 0:
        raise MeshError("empty mesh")
    return AABB(mesh.vertices.min(axis=0), mesh.vertices.max(axis=0))


# ---------------------------------------------------------------- readers

def _sniff(path: Path, data: bytes) -> str:
    ext = path.suffix.lower()
    if ext == ".obj":
        return "obj"
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            return "stl-binary"
    if ext == ".stl" or data.lstrip()[:5].lower() == b"solid":
        return "stl-ascii"
    raise MeshError(f"cannot determine mesh format of {path}")


def _read_stl_binary(data: bytes):
    if len(data) < 84:
        raise MeshError("binary STL shorter than its header")
    (count,) = struct.unpack_from("<I", data, 80)
    if len(data) < 84 + 50 * count:
        raise MeshError(f"binary STL truncated: header announces {count} facets")
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    facets = np.frombuffer(data, dtype=rec, count=count, offset=84)
    V = facets["v"].reshape(-1, 3).astype(np.float64)
    return V, np.arange(len(V), dtype=np.int64).reshape(-1, 3)


def _read_stl_ascii(text: str):
    coords = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if parts and parts[0].lower() == "vertex":
            if len(parts) != 4:
                raise MeshError(f"line {lineno}: malformed vertex")
            try:
                coords.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise MeshError(f"line {lineno}: {exc}") from None
    if len(coords) % 3:
        raise MeshError("ASCII STL vertex count is not a multiple of 3")
    V = np.array(coords, dtype=np.float64).reshape(-1, 3)
    return V, np.arange(len(V), dtype=np.int64).reshape(-1, 3)


def _read_obj(text: str):
    verts = []
    tris = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    if i == 0:
                        raise MeshError(f"line {lineno}: OBJ indices start at 1")
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise MeshError(f"line {lineno}: face needs 3 vertices")
                for k in range(1, len(idx) - 1):
                    tris.append((idx[0], idx[k], idx[k + 1]))
        except ValueError as exc:
            if isinstance(exc, MeshError):
                raise
            raise MeshError(f"line {lineno}: {exc}") from None
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3)


def load_surface_mesh(path, format: str | None = None, weld_rtol: float = WELD_RTOL) -> SurfaceMesh:
    """Read an STL (ASCII or binary) or OBJ surface and return a welded mesh.

    Parameters
    ----------
    path : str or Path
    format : {"stl-ascii", "stl-binary", "obj"}, optional
        Sniffed from the content and extension when omitted.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc.strerror}") from None
    fmt = format or _sniff(path, data)
    if fmt == "stl-binary":
        V, T = _read_stl_binary(data)
    elif fmt in ("stl-ascii", "obj"):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            raise MeshError(f"{path} is not valid text") from None
        V, T = _read_stl_ascii(text) if fmt == "stl-ascii" else _read_obj(text)
    else:
        raise MeshError(f"unknown mesh format {fmt!r}")
    logger.info("read %s: %d raw vertices, %d triangles", path.name, len(V), len(T))
    return SurfaceMesh.from_arrays(V, T, weld_rtol=weld_rtol)


# ---------------------------------------------------------------- writers

def _atomic_write(path, payload: bytes):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def save_stl(mesh: SurfaceMesh, path, binary: bool = True):
    tri = mesh.vertices[mesh.triangles]
    nrm = mesh.face_normals()
    if binary:
        rec = np.zeros(mesh.n_triangles, dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
        rec["n"] = nrm
        rec["v"] = tri
        payload = b"sizefield binary STL".ljust(80, b" ") + struct.pack("<I", len(rec)) + rec.tobytes()
    else:
        lines = ["solid sizefield"]
        for n, t in zip(nrm, tri):
            lines.append("  facet normal %.17g %.17g %.17g" % tuple(n))
            lines.append("    outer loop")
            lines.extend("      vertex %.17g %.17g %.17g" % tuple(p) for p in t)
            lines.append("    endloop")
            lines.append("  endfacet")
        lines.append("endsolid sizefield")
        payload = ("\n".join(lines) + "\n").encode()
    _atomic_write(path, payload)


def save_obj(mesh: SurfaceMesh, path):
    lines = ["v %.17g %.17g %.17g" % tuple(p) for p in mesh.vertices]
    lines += ["f %d %d %d" % tuple(t + 1) for t in mesh.triangles]
    _atomic_write(path, ("\n".join(lines) + "\n").encode())
