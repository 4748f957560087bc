"""Legacy ASCII VTK writers."""

from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np

__all__ = ["write_unstructured", "VTK_LINE", "VTK_TETRA", "VTK_HEXAHEDRON", "VTK_VERTEX"]

VTK_VERTEX = 1
VTK_LINE = 3
VTK_TETRA = 10
VTK_HEXAHEDRON = 12


def write_unstructured(path, points, cells, cell_type: int, cell_data=None, point_data=None,
                       title: str = "sizefield"):
    """Write one homogeneous cell block as a legacy unstructured grid.

    ``cell_data`` and ``point_data`` map names to per-cell / per-point scalars.
    The file is written to a temporary name and moved into place.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cells = np.asarray(cells, dtype=np.int64)
    cells = cells.reshape(len(cells), -1)
    k = cells.shape[1]
    buf = io.StringIO()
    buf.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    buf.write(f"POINTS {len(points)} double\n")
    np.savetxt(buf, points, fmt="%.17g")
    buf.write(f"CELLS {len(cells)} {len(cells) * (k + 1)}\n")
    np.savetxt(buf, np.column_stack([np.full(len(cells), k), cells]), fmt="%d")
    buf.write(f"CELL_TYPES {len(cells)}\n")
    np.savetxt(buf, np.full(len(cells), cell_type), fmt="%d")
    for header, data, n in (("CELL_DATA", cell_data, len(cells)), ("POINT_DATA", point_data, len(points))):
        if not data:
            continue
        buf.write(f"{header} {n}\n")
        for name, values in data.items():
            values = np.asarray(values).reshape(-1)
            kind = "int" if np.issubdtype(values.dtype, np.integer) else "double"
            buf.write(f"SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n")
            np.savetxt(buf, values, fmt="%d" if kind == "int" else "%.17g")
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        tmp.write_text(buf.getvalue())
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
