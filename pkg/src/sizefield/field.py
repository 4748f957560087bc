"""The finished size field: point queries, binary storage and VTK export.

File layout (little-endian)::

    8s   magic  b"SZFIELD\\0"
    u32  version
    5f8  h_b, h_min, n_d, n_g, alpha
    u8   1 if a user size function was used (the function itself is not stored)
    4f8  root low corner (x, y, z) and side
    u64  leaf count n
    n x (u8 level, f8 h, 3f8 grad)   leaves in Z-order
    32s  SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .octree import Octree, SizeFieldParams, face_pairs
from .vtk import VTK_HEXAHEDRON, write_unstructured

logger = logging.getLogger(__name__)

__all__ = ["FieldFileError", "SizeField", "load_field", "save_field", "MAGIC", "VERSION"]

MAGIC = b"SZFIELD\0"
VERSION = 1
_HEADER = struct.Struct("<8sI5dB4dQ")
_RECORD = np.dtype([("level", "u1"), ("h", "<f8"), ("grad", "<f8", (3,))])
_DIGEST = 32


class FieldFileError(ValueError):
    pass


@dataclass
class SizeField:
    """Leaf sizes and gradients on a balanced octree.

    ``h[i]`` and ``grad[i]`` belong to the i-th leaf in Z-order,
    ``tree.leaves()[i]``.
    """

    params: SizeFieldParams
    tree: Octree
    h: np.ndarray
    grad: np.ndarray
    user_size: bool = False

    def __post_init__(self):
        leaves = self.tree.leaves()
        self._leaves = leaves
        self._pos = np.full(self.tree.n_nodes, -1, dtype=np.int64)
        self._pos[leaves] = np.arange(len(leaves))
        self._centers = self.tree.centers(leaves)

    @property
    def n_leaves(self) -> int:
        return len(self._leaves)

    @property
    def levels(self) -> np.ndarray:
        return self.tree.level[self._leaves]

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    @property
    def sides(self) -> np.ndarray:
        return self.tree.sides(self._leaves)

    def leaf_of(self, points) -> np.ndarray:
        """Z-order index of the leaf holding each point (clamped into the root)."""
        return self._pos[self.tree.locate(points)]

    def query(self, points) -> np.ndarray:
        """h(x) = h_i + grad_i . (x - x_i), clamped to [h_min, h_b].

        Points outside the root cube are first moved to its nearest boundary point.
        """
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        t = self.tree
        p = np.clip(p, t.lo, t.lo + t.side)
        i = self.leaf_of(p)
        off = p - self._centers[i]
        val = self.h[i] + (self.grad[i, 0] * off[:, 0] + self.grad[i, 1] * off[:, 1]
                           + self.grad[i, 2] * off[:, 2])
        return np.clip(val, self.params.h_min, self.params.h_b)

    __call__ = query

    def face_pairs(self):
        return face_pairs(self.tree, self._leaves)

    def equal(self, other: "SizeField") -> bool:
        """Bitwise equality of the stored leaves, root and parameters."""
        a, b = self.params, other.params
        same_params = (a.h_b, a.h_min, a.n_d, a.n_g, a.alpha) == (b.h_b, b.h_min, b.n_d, b.n_g, b.alpha)
        return (same_params and self.user_size == other.user_size
                and np.array_equal(self.tree.lo, other.tree.lo) and self.tree.side == other.tree.side
                and np.array_equal(self.levels, other.levels)
                and self.h.tobytes() == other.h.tobytes()
                and self.grad.tobytes() == other.grad.tobytes())

    # -------------------------------------------------------------- I/O

    def to_bytes(self) -> bytes:
        p = self.params
        head = _HEADER.pack(MAGIC, VERSION, p.h_b, p.h_min, p.n_d, p.n_g, p.alpha,
                            1 if (self.user_size or p.h_u is not None) else 0,
                            *self.tree.lo, self.tree.side, self.n_leaves)
        rec = np.empty(self.n_leaves, dtype=_RECORD)
        rec["level"] = self.levels
        rec["h"] = self.h
        rec["grad"] = self.grad
        body = head + rec.tobytes()
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SizeField":
        if len(data) < _HEADER.size + _DIGEST:
            raise FieldFileError("field file truncated (header incomplete)")
        magic, version = struct.unpack_from("<8sI", data)
        if magic != MAGIC:
            raise FieldFileError("not a size-field file (bad magic)")
        if version != VERSION:
            raise FieldFileError(f"unsupported field file version {version} (this build reads {VERSION})")
        vals = _HEADER.unpack_from(data)
        h_b, h_min, n_d, n_g, alpha, user, x, y, z, side, n = vals[2:]
        expected = _HEADER.size + n * _RECORD.itemsize + _DIGEST
        if len(data) != expected:
            raise FieldFileError(f"field file truncated or padded: {len(data)} bytes, expected {expected}")
        body, digest = data[:-_DIGEST], data[-_DIGEST:]
        if hashlib.sha256(body).digest() != digest:
            raise FieldFileError("field file checksum mismatch")
        rec = np.frombuffer(body, dtype=_RECORD, count=n, offset=_HEADER.size)
        try:
            params = SizeFieldParams(h_b=h_b, h_min=h_min, n_d=n_d, n_g=n_g, alpha=alpha)
            tree = Octree.from_leaf_levels((x, y, z), side, rec["level"])
        except ValueError as exc:
            raise FieldFileError(f"invalid field contents: {exc}") from None
        return cls(params, tree, rec["h"].copy(), rec["grad"].copy(), user_size=bool(user))

    def export_vtk(self, path):
        """Leaves as hexahedra with cell scalars ``h`` and ``level``."""
        t = self.tree
        a = t.anchor[self._leaves]
        s = t.size_units(self._leaves)[:, None]
        hexo = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                         [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=np.int64)
        corners = (a[:, None, :] + hexo[None, :, :] * s[:, :, None]).reshape(-1, 3)
        uniq, inv = np.unique(corners, axis=0, return_inverse=True)
        pts = t.lo + uniq * t.unit
        write_unstructured(path, pts, inv.reshape(-1, 8), VTK_HEXAHEDRON,
                           cell_data={"h": self.h, "level": self.levels.astype(np.int64)})


def save_field(field: SizeField, path):
    """Write atomically; an existing file is replaced only on success."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        tmp.write_bytes(field.to_bytes())
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def load_field(path) -> SizeField:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FieldFileError(f"cannot read {path}: {exc.strerror}") from None
    return SizeField.from_bytes(data)

