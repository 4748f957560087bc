"""Exact orientation and in-sphere predicates.

Floating-point filters live in the kernel backends; this module is the exact
fallback they defer to when the filter cannot certify a sign.  Coordinates are
converted once to integers on a common power-of-two scale, so every
determinant below is evaluated exactly with Python integers.

Conventions
-----------
``orient(a, b, c, d)`` is the sign of ``det[b - a, c - a, d - a]``; a tet is
positively oriented when it is positive.

``insphere(a, b, c, d, e)`` is positive when ``e`` lies inside the circumsphere
of the positively oriented tet ``(a, b, c, d)``.  Exact co-spherical ties are
broken by perturbing the lifted coordinate ``|p|^2`` of every point by an
infinitesimal whose magnitude decreases with the point index (the highest index
dominates), so the answer is never 0 for five points that are not coplanar.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ExactPredicates", "ORIENT_ERRBOUND", "INSPHERE_ERRBOUND"]

_EPS = np.finfo(float).eps / 2.0
# Relative error bounds (against the permanent) used by the float filters.
ORIENT_ERRBOUND = 32.0 * _EPS
INSPHERE_ERRBOUND = 256.0 * _EPS


def _sign(x: int) -> int:
    return (x > 0) - (x < 0)


def _det3(a, b, c):
    return (
        a[0] * (b[1] * c[2] - b[2] * c[1])
        - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
    )


def _to_scaled_ints(points: np.ndarray) -> list[tuple[int, int, int]]:
    ratios = [[float(x).as_integer_ratio() for x in row] for row in points]
    shift = max((den.bit_length() - 1 for row in ratios for _, den in row), default=0)
    out = []
    for row in ratios:
        out.append(tuple(num << (shift - (den.bit_length() - 1)) for num, den in row))
    return out


class ExactPredicates:
    """Exact predicates over a fixed point array.

    Parameters
    ----------
    points : ndarray, shape (n, 3)
        Finite float64 coordinates.  The integer image is built lazily, on the
        first call that needs it.
    """

    def __init__(self, points: np.ndarray):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if not np.all(np.isfinite(points)):
            raise ValueError("points must be finite")
        self.points = points
        self._ints: list[tuple[int, int, int]] | None = None
        self.calls = 0

    @property
    def ints(self) -> list[tuple[int, int, int]]:
        if self._ints is None:
            self._ints = _to_scaled_ints(self.points)
        return self._ints

    def orient_value(self, a: int, b: int, c: int, d: int) -> int:
        P = self.ints
        pa, pb, pc, pd = P[a], P[b], P[c], P[d]
        u = (pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2])
        v = (pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2])
        w = (pd[0] - pa[0], pd[1] - pa[1], pd[2] - pa[2])
        return _det3(u, v, w)

    def orient(self, a: int, b: int, c: int, d: int) -> int:
        self.calls += 1
        return _sign(self.orient_value(a, b, c, d))

    def lifted_value(self, a: int, b: int, c: int, d: int, e: int) -> int:
        """Exact 5x5 lifted determinant det[[x, y, z, |p|^2, 1]] of the five points."""
        P = self.ints
        pe = P[e]
        rows = []
        for i in (a, b, c, d):
            p = P[i]
            dx, dy, dz = p[0] - pe[0], p[1] - pe[1], p[2] - pe[2]
            rows.append((dx, dy, dz, dx * dx + dy * dy + dz * dz))
        ra, rb, rc, rd = rows
        m_a = _det3(rb, rc, rd)
        m_b = _det3(ra, rc, rd)
        m_c = _det3(ra, rb, rd)
        m_d = _det3(ra, rb, rc)
        return -ra[3] * m_a + rb[3] * m_b - rc[3] * m_c + rd[3] * m_d

    def insphere(self, a: int, b: int, c: int, d: int, e: int) -> int:
        self.calls += 1
        s = self.lifted_value(a, b, c, d, e)
        if s != 0:
            return -_sign(s)
        return -self._perturbed_lifted_sign((a, b, c, d, e))

    def _perturbed_lifted_sign(self, idx: tuple[int, int, int, int, int]) -> int:
        # d/d(eps_i) of the lifted determinant is the cofactor of the |p|^2 entry
        # of row i: (-1)^(i+3) * det[[x, y, z, 1]] of the other four rows, and
        # det[[x, y, z, 1]](q0..q3) = -orient(q0..q3).
        for pos in sorted(range(5), key=lambda i: -idx[i]):
            rest = [idx[j] for j in range(5) if j != pos]
            minor = -self.orient_value(*rest)
            if minor != 0:
                return _sign(minor) * (1 if pos % 2 == 1 else -1)
        raise ValueError("insphere on five coplanar points")

