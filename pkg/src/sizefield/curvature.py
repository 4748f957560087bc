"""Per-vertex curvature from per-face second fundamental form fits.

Each triangle carries an orthonormal frame (u_f, v_f, n_f).  The variation of
the vertex normals along its three edges gives six linear equations for the
three components (e, f, g) of the second fundamental form, solved in the
least-squares sense.  Face tensors are then tilted into each vertex tangent
plane, re-expressed in a vertex frame (u_p, v_p) and averaged.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh_io import MeshWarning, SurfaceMesh

logger = logging.getLogger(__name__)

__all__ = [
    "CurvatureField",
    "compute_curvature",
    "curvature_meshsize",
    "face_frames",
    "face_fundamental_forms",
    "vertex_curvature",
    "vertex_normals",
    "write_curvature_csv",
]

COND_MAX = 1e8
TILT_EPS = 1e-8


def vertex_normals(mesh: SurfaceMesh) -> np.ndarray:
    """Unweighted mean of the unit normals of the adjacent faces.

    Where the mean cancels, the normal of the largest adjacent face is used and
    a :class:`MeshWarning` is issued.  Vertices without faces get NaN.
    """
    fn = mesh.face_normals()
    acc = np.zeros_like(mesh.vertices)
    for i in range(3):
        np.add.at(acc, mesh.triangles[:, i], fn)
    norm = np.linalg.norm(acc, axis=1)
    degree = np.diff(mesh.vt_offsets)
    isolated = degree == 0
    cancel = (norm <= 1e-12 * np.maximum(degree, 1)) & ~isolated
    out = np.full_like(acc, np.nan)
    ok = ~cancel & ~isolated
    out[ok] = acc[ok] / norm[ok, None]
    if cancel.any():
        area = mesh.face_areas()
        for v in np.flatnonzero(cancel):
            tris = mesh.vertex_triangles(v)
            out[v] = fn[tris[np.argmax(area[tris])]]
        warnings.warn(f"{int(cancel.sum())} vertex normal(s) cancelled; using largest face",
                      MeshWarning, stacklevel=2)
    if isolated.any():
        logger.warning("%d isolated vertices excluded from curvature", int(isolated.sum()))
    return out


def face_frames(mesh: SurfaceMesh):
    """Orthonormal (u_f, v_f, n_f) per face, u_f along the first edge."""
    P = mesh.vertices[mesh.triangles]
    e0 = P[:, 1] - P[:, 0]
    n = np.cross(e0, P[:, 2] - P[:, 0])
    n /= np.linalg.norm(n, axis=1)[:, None]
    u = e0 / np.linalg.norm(e0, axis=1)[:, None]
    v = np.cross(n, u)
    return u, v, n


def face_fundamental_forms(mesh: SurfaceMesh, normals: np.ndarray):
    """Least-squares (e, f, g) per face in its own frame.

    Returns
    -------
    II : ndarray (m, 3)
        (e, f, g) per face.
    reliable : ndarray (m,) of bool
        False when the normal-equations matrix has condition number above 1e8
        or a corner normal is missing.
    residual : ndarray (m,)
        Euclidean norm of the residual of the 6 x 3 system.
    """
    u, v, _ = face_frames(mesh)
    T = mesh.triangles
    P = mesh.vertices[T]
    N = normals[T]
    A = np.zeros((len(T), 6, 3))
    b = np.zeros((len(T), 6))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        e = P[:, k] - P[:, j]
        dn = N[:, k] - N[:, j]
        eu = np.einsum("ij,ij->i", e, u)
        ev = np.einsum("ij,ij->i", e, v)
        A[:, 2 * i, 0] = eu
        A[:, 2 * i, 1] = ev
        A[:, 2 * i + 1, 1] = eu
        A[:, 2 * i + 1, 2] = ev
        b[:, 2 * i] = np.einsum("ij,ij->i", dn, u)
        b[:, 2 * i + 1] = np.einsum("ij,ij->i", dn, v)
    AtA = np.einsum("fki,fkj->fij", A, A)
    Atb = np.einsum("fki,fk->fi", A, b)
    finite = np.isfinite(Atb).all(axis=1)
    cond = np.full(len(T), np.inf)
    cond[finite] = np.linalg.cond(AtA[finite])
    reliable = finite & (cond <= COND_MAX)
    II = np.zeros((len(T), 3))
    if reliable.any():
        II[reliable] = np.linalg.solve(AtA[reliable], Atb[reliable][..., None])[..., 0]
    res = np.full(len(T), np.nan)
    res[reliable] = np.linalg.norm(
        np.einsum("fki,fi->fk", A[reliable], II[reliable]) - b[reliable], axis=1)
    if (~reliable).any():
        logger.info("%d ill-conditioned face fits excluded", int((~reliable).sum()))
    return II, reliable, res


def _rotate(vec, axis, cos_t, sin_t):
    """Rodrigues rotation of ``vec`` about unit ``axis``."""
    return (vec * cos_t[:, None] + np.cross(axis, vec) * sin_t[:, None]
            + axis * (np.einsum("ij,ij->i", axis, vec) * (1 - cos_t))[:, None])


def _vertex_frames(mesh: SurfaceMesh, normals: np.ndarray):
    # u_p: first incident edge projected on the tangent plane
    n = mesh.n_vertices
    tri_first = mesh.vt_index[np.minimum(mesh.vt_offsets[:-1], len(mesh.vt_index) - 1)]
    t = mesh.triangles[tri_first]
    pos = np.argmax(t == np.arange(n)[:, None], axis=1)
    other = t[np.arange(n), (pos + 1) % 3]
    e = mesh.vertices[other] - mesh.vertices
    e -= np.einsum("ij,ij->i", e, normals)[:, None] * normals
    u = e / np.linalg.norm(e, axis=1)[:, None]
    v = np.cross(normals, u)
    return u, v


def vertex_curvature(mesh: SurfaceMesh, normals: np.ndarray, II: np.ndarray, reliable: np.ndarray):
    """Average face tensors at the vertices.

    Returns ``(II_p (n, 3), u_p, v_p, n_faces_used (n,))`` where ``II_p`` holds
    (e_p, f_p, g_p) in the vertex frame (u_p, v_p).
    """
    uf, vf, nf = face_frames(mesh)
    up, vp = _vertex_frames(mesh, normals)
    T = mesh.triangles
    acc = np.zeros((mesh.n_vertices, 3))
    count = np.zeros(mesh.n_vertices)
    for c in range(3):
        p = T[:, c]
        npn = normals[p]
        e, f, g = II[:, 0].copy(), II[:, 1].copy(), II[:, 2].copy()
        u, v, nn = uf.copy(), vf.copy(), nf.copy()
        flip = np.einsum("ij,ij->i", nn, npn) < 0
        # an opposite face normal describes the same frame with v mirrored
        v[flip] *= -1
        nn[flip] *= -1
        f[flip] *= -1
        axis = np.cross(nn, npn)
        s = np.linalg.norm(axis, axis=1)
        cos_t = np.clip(np.einsum("ij,ij->i", nn, npn), -1.0, 1.0)
        tilt = np.arctan2(s, cos_t) >= TILT_EPS
        if tilt.any():
            ax = axis[tilt] / s[tilt, None]
            st = s[tilt]
            ct = cos_t[tilt]
            u[tilt] = _rotate(u[tilt], ax, ct, st)
            v[tilt] = _rotate(v[tilt], ax, ct, st)
        # components of the rotated face axes in the vertex frame
        uu = np.einsum("ij,ij->i", up[p], u)
        uv = np.einsum("ij,ij->i", up[p], v)
        vu = np.einsum("ij,ij->i", vp[p], u)
        vv = np.einsum("ij,ij->i", vp[p], v)
        ep = uu * uu * e + 2 * uu * uv * f + uv * uv * g
        fp = uu * vu * e + (uu * vv + uv * vu) * f + uv * vv * g
        gp = vu * vu * e + 2 * vu * vv * f + vv * vv * g
        w = reliable & np.isfinite(npn).all(axis=1)
        np.add.at(acc, p[w], np.stack([ep, fp, gp], axis=1)[w])
        np.add.at(count, p[w], 1.0)
    out = np.zeros_like(acc)
    has = count > 0
    out[has] = acc[has] / count[has, None]
    return out, up, vp, count.astype(np.int64)


def _eig2(II: np.ndarray):
    e, f, g = II[:, 0], II[:, 1], II[:, 2]
    mean = 0.5 * (e + g)
    rad = np.hypot(0.5 * (e - g), f)
    return mean + rad, mean - rad


def curvature_meshsize(kappa_max, n_d):
    """h_c = 2 pi / (kappa_max n_d); ``inf`` (unconstrained) where kappa_max is 0."""
    if n_d < 3:
        raise ValueError("n_d must be at least 3")
    k = np.asarray(kappa_max, dtype=np.float64)
    with np.errstate(divide="ignore"):
        h = np.where(k > 0, 2.0 * np.pi / (k * n_d), np.inf)
    return h if h.ndim else float(h)


@dataclass
class CurvatureField:
    normals: np.ndarray
    II: np.ndarray
    u: np.ndarray
    v: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    kmax: np.ndarray
    faces_used: np.ndarray
    face_II: np.ndarray
    face_reliable: np.ndarray
    face_residual: np.ndarray

    def meshsize(self, n_d: float) -> np.ndarray:
        return curvature_meshsize(self.kmax, n_d)


def compute_curvature(mesh: SurfaceMesh) -> CurvatureField:
    """Full curvature pipeline for a mesh."""
    normals = vertex_normals(mesh)
    fII, rel, res = face_fundamental_forms(mesh, normals)
    II, up, vp, used = vertex_curvature(mesh, normals, fII, rel)
    k1, k2 = _eig2(II)
    kmax = np.maximum(np.abs(k1), np.abs(k2))
    orphan = used == 0
    if orphan.any():
        kmax[orphan] = 0.0
        warnings.warn(f"{int(orphan.sum())} vertex(es) without a reliable face fit; "
                      "curvature left unconstrained", MeshWarning, stacklevel=2)
    return CurvatureField(normals, II, up, vp, k1, k2, kmax, used, fII, rel, res)


def write_curvature_csv(mesh: SurfaceMesh, field: CurvatureField, n_d: float, path):
    hc = field.meshsize(n_d)
    data = np.column_stack([mesh.vertices, field.kmax, hc])
    np.savetxt(Path(path), data, delimiter=",", header="x,y,z,kmax,hc", comments="", fmt="%.17g")
