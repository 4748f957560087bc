"""Synthetic test surfaces with known geometry."""

from __future__ import annotations

import numpy as np

from .mesh_io import SurfaceMesh

__all__ = ["icosphere", "cylinder", "plates", "box", "finned_block", "voxel_surface"]


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Subdivided icosahedron projected on a sphere (outward winding)."""
    t = (1.0 + 5.0 ** 0.5) / 2.0
    V = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
         (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
         (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    F = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
         (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
         (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
         (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in V]
    faces = F
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    P = np.array(verts) * radius + np.asarray(center, dtype=float)
    return SurfaceMesh.from_arrays(P, np.array(faces))


def _grid_triangles(nu: int, nv: int) -> np.ndarray:
    """Triangles of an (nu x nv) vertex grid, vertex id = i * nv + j."""
    i, j = np.meshgrid(np.arange(nu - 1), np.arange(nv - 1), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a, b, c, d = i * nv + j, (i + 1) * nv + j, (i + 1) * nv + j + 1, i * nv + j + 1
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def cylinder(radius: float = 1.0, height: float = 2.0, n_theta: int = 64, n_z: int | None = None) -> SurfaceMesh:
    """Open tube along z, z in [0, height].

    Alternate rings are staggered by half a step and quads are split along
    their short diagonal, so with the default ``n_z`` the triangles are close
    to equilateral.
    """
    step = 2 * np.pi * radius / n_theta
    if n_z is None:
        n_z = max(2, int(round(height / (step * np.sqrt(3) / 2))) + 1)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    z = np.linspace(0.0, height, n_z)
    T, Z = np.meshgrid(th, z, indexing="ij")
    T = T + (np.arange(n_z)[None, :] % 2) * (np.pi / n_theta)
    P = np.stack([radius * np.cos(T), radius * np.sin(T), Z], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(n_theta), np.arange(n_z - 1), indexing="ij")
    i, j = i.ravel(), j.ravel()
    i1 = (i + 1) % n_theta
    a, b, c, d = i * n_z + j, i1 * n_z + j, i1 * n_z + j + 1, i * n_z + j + 1
    even = (j % 2 == 0)[:, None]
    t1 = np.where(even, np.stack([a, b, d], 1), np.stack([a, b, c], 1))
    t2 = np.where(even, np.stack([b, c, d], 1), np.stack([a, c, d], 1))
    return SurfaceMesh.from_arrays(P, np.concatenate([t1, t2]))


def plates(gap: float = 0.1, size: float = 1.0, n: int = 41) -> SurfaceMesh:
    """Two parallel square sheets z=0 and z=gap, each an n x n vertex grid."""
    s = np.linspace(0.0, size, n)
    X, Y = np.meshgrid(s, s, indexing="ij")
    sheet = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    top = sheet + [0.0, 0.0, gap]
    tri = _grid_triangles(n, n)
    P = np.concatenate([sheet, top])
    T = np.concatenate([tri[:, [0, 2, 1]], tri + n * n])
    return SurfaceMesh.from_arrays(P, T)


def voxel_surface(occupied: np.ndarray, spacing: float = 1.0, origin=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Outward-wound boundary of a union of unit voxels.

    ``occupied[i, j, k]`` marks voxel [i, i+1] x [j, j+1] x [k, k+1] (scaled by
    ``spacing``).  Each boundary face is split into two triangles.
    """
    occ = np.pad(np.asarray(occupied, dtype=bool), 1)
    nx, ny, nz = occ.shape
    vid = lambda i, j, k: (i * (ny + 1) + j) * (nz + 1) + k  # noqa: E731
    quads = []
    for axis in range(3):
        sl_a = [slice(None)] * 3
        sl_b = [slice(None)] * 3
        sl_a[axis] = slice(0, -1)
        sl_b[axis] = slice(1, None)
        a, b = occ[tuple(sl_a)], occ[tuple(sl_b)]
        for sign, mask in ((1, a & ~b), (-1, ~a & b)):
            idx = np.argwhere(mask)
            idx[:, axis] += 1  # face plane index
            u, v = [d for d in range(3) if d != axis]
            corners = []
            for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                c = idx.copy()
                c[:, u] += du
                c[:, v] += dv
                corners.append(vid(c[:, 0], c[:, 1], c[:, 2]))
            q = np.stack(corners, axis=1)
            # (u, v, axis) is right-handed for axis 0 and 2 and for axis 1 it's (x, z, y)
            right = axis != 1
            if (sign > 0) != right:
                q = q[:, ::-1]
            quads.append(q)
    Q = np.concatenate(quads)
    T = np.concatenate([Q[:, [0, 1, 2]], Q[:, [0, 2, 3]]])
    used, inv = np.unique(T, return_inverse=True)
    k = used % (nz + 1)
    j = (used // (nz + 1)) % (ny + 1)
    i = used // ((nz + 1) * (ny + 1))
    P = (np.stack([i, j, k], axis=1) - 1).astype(float) * spacing + np.asarray(origin, dtype=float)
    return SurfaceMesh.from_arrays(P, inv.reshape(-1, 3))


def box(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), n: int = 1) -> SurfaceMesh:
    """Axis-aligned box surface with each face an n x n grid of quads."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mesh = voxel_surface(np.ones((n, n, n), dtype=bool))
    P = lo + mesh.vertices / n * (hi - lo)
    return SurfaceMesh.from_arrays(P, mesh.triangles)


def finned_block(voxel: float = 0.05) -> SurfaceMesh:
    """A 1.0 x 0.6 x 0.3 base carrying five thin vertical fins.

    Fins are one voxel thick, 0.3 tall and 0.15 apart, giving thin walls and
    narrow gaps next to large flat regions.
    """
    occ = np.zeros((20, 12, 12), dtype=bool)
    occ[:, :, :6] = True
    for x in (2, 6, 10, 14, 18):
        occ[x, 1:11, 6:] = True
    return voxel_surface(occ, spacing=voxel)
