"""Pure-Python kernels.

Same API and the same arithmetic as the compiled ``_kernels`` module, so both
backends produce identical results.  Used when the extension is not built or
when ``SIZEFIELD_PURE_PYTHON=1``.
"""

from __future__ import annotations

import numpy as np

from .predicates import INSPHERE_ERRBOUND, ORIENT_ERRBOUND, ExactPredicates

NAME = "python"


class Predicates:
    """Filtered orient/insphere over a fixed point array (see :mod:`.predicates`)."""

    def __init__(self, points):
        points = np.ascontiguousarray(points, dtype=np.float64)
        self._P = points.tolist()
        self.exact = ExactPredicates(points)

    @property
    def exact_calls(self) -> int:
        return self.exact.calls

    def orient(self, a, b, c, d):
        P = self._P
        ax, ay, az = P[a]
        pb, pc, pd = P[b], P[c], P[d]
        bx, by, bz = pb[0] - ax, pb[1] - ay, pb[2] - az
        cx, cy, cz = pc[0] - ax, pc[1] - ay, pc[2] - az
        dx, dy, dz = pd[0] - ax, pd[1] - ay, pd[2] - az
        m1 = cy * dz - cz * dy
        m2 = cx * dz - cz * dx
        m3 = cx * dy - cy * dx
        det = bx * m1 - by * m2 + bz * m3
        perm = (
            abs(bx) * (abs(cy * dz) + abs(cz * dy))
            + abs(by) * (abs(cx * dz) + abs(cz * dx))
            + abs(bz) * (abs(cx * dy) + abs(cy * dx))
        )
        bound = ORIENT_ERRBOUND * perm
        if det > bound:
            return 1
        if det < -bound:
            return -1
        return self.exact.orient(a, b, c, d)

    def insphere(self, a, b, c, d, e):
        P = self._P
        ex, ey, ez = P[e]
        pa, pb, pc, pd = P[a], P[b], P[c], P[d]
        ax, ay, az = pa[0] - ex, pa[1] - ey, pa[2] - ez
        bx, by, bz = pb[0] - ex, pb[1] - ey, pb[2] - ez
        cx, cy, cz = pc[0] - ex, pc[1] - ey, pc[2] - ez
        dx, dy, dz = pd[0] - ex, pd[1] - ey, pd[2] - ez
        aw = ax * ax + ay * ay + az * az
        bw = bx * bx + by * by + bz * bz
        cw = cx * cx + cy * cy + cz * cz
        dw = dx * dx + dy * dy + dz * dz
        # 2x2 minors on (x, y)
        ab = ax * by - bx * ay
        ac = ax * cy - cx * ay
        ad = ax * dy - dx * ay
        bc = bx * cy - cx * by
        bd = bx * dy - dx * by
        cd = cx * dy - dx * cy
        m_a = bz * cd - cz * bd + dz * bc
        m_b = az * cd - cz * ad + dz * ac
        m_c = az * bd - bz * ad + dz * ab
        m_d = az * bc - bz * ac + cz * ab
        det = -aw * m_a + bw * m_b - cw * m_c + dw * m_d
        pab = abs(ax * by) + abs(bx * ay)
        pac = abs(ax * cy) + abs(cx * ay)
        pad = abs(ax * dy) + abs(dx * ay)
        pbc = abs(bx * cy) + abs(cx * by)
        pbd = abs(bx * dy) + abs(dx * by)
        pcd = abs(cx * dy) + abs(dx * cy)
        p_a = abs(bz) * pcd + abs(cz) * pbd + abs(dz) * pbc
        p_b = abs(az) * pcd + abs(cz) * pad + abs(dz) * pac
        p_c = abs(az) * pbd + abs(bz) * pad + abs(dz) * pab
        p_d = abs(az) * pbc + abs(bz) * pac + abs(cz) * pab
        perm = aw * p_a + bw * p_b + cw * p_c + dw * p_d
        bound = INSPHERE_ERRBOUND * perm
        if det > bound:
            return -1
        if det < -bound:
            return 1
        return self.exact.insphere(a, b, c, d, e)


def limit_sweeps(h, pa, pb, dx, axis_start, slope, max_passes):
    """Clamp ``h`` in place until every pair satisfies |h_a - h_b| <= slope * dx.

    Pairs are grouped by axis (``axis_start`` holds the 4 group offsets); each
    sweep visits axis 0, 1, 2, forward then backward.  Returns the number of
    sweeps that changed a value, or ``-1`` if ``max_passes`` sweeps were not
    enough.
    """
    hv = h.tolist()
    A = pa.tolist()
    B = pb.tolist()
    W = (np.asarray(dx, dtype=np.float64) * slope).tolist()
    bounds = [int(x) for x in axis_start]
    passes = 0
    while True:
        changed = False
        for axis in range(3):
            lo, hi = bounds[axis], bounds[axis + 1]
            for order in (range(lo, hi), range(hi - 1, lo - 1, -1)):
                for k in order:
                    i = A[k]
                    j = B[k]
                    w = W[k]
                    hi_ = hv[i]
                    hj = hv[j]
                    if hi_ > hj + w:
                        hv[i] = hj + w
                        changed = True
                    elif hj > hi_ + w:
                        hv[j] = hi_ + w
                        changed = True
        if not changed:
            break
        passes += 1
        if passes > max_passes:
            h[:] = hv
            return -1
    h[:] = hv
    return passes


def locate(child, qx, qy, qz, maxdepth):
    """Descend the octree from the root to the leaf containing each integer point."""
    child = np.asarray(child)
    node = np.zeros(len(qx), dtype=np.int64)
    qx = np.asarray(qx, dtype=np.int64)
    qy = np.asarray(qy, dtype=np.int64)
    qz = np.asarray(qz, dtype=np.int64)
    for level in range(maxdepth):
        c = child[node]
        inner = c >= 0
        if not inner.any():
            break
        shift = maxdepth - 1 - level
        octant = ((qx >> shift) & 1) | (((qy >> shift) & 1) << 1) | (((qz >> shift) & 1) << 2)
        node = np.where(inner, c + octant, node)
    return node
