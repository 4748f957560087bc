from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sizefield import _backend
from sizefield.predicates import ExactPredicates

BACKENDS = ["python"] + (["cython"] if _backend.BACKEND == "cython" else [])


def _frac_det(M):
    M = [[Fraction(x) for x in row] for row in M]
    n = len(M)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
            det = -det
        det *= M[c][c]
        for r in range(c + 1, n):
            f = M[r][c] / M[c][c]
            for k in range(c, n):
                M[r][k] -= f * M[c][k]
    return det


def _sign(x):
    return (x > 0) - (x < 0)


def oracle_orient(P, a, b, c, d):
    pa = P[a]
    return _sign(_frac_det([[Fraction(P[i][k]) - Fraction(pa[k]) for k in range(3)] for i in (b, c, d)]))


def oracle_lifted(P, idx):
    rows = []
    for i in idx:
        x, y, z = (Fraction(v) for v in P[i])
        rows.append([x, y, z, x * x + y * y + z * z, Fraction(1)])
    return _frac_det(rows)


coords = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
pts5 = st.lists(st.tuples(coords, coords, coords), min_size=5, max_size=5)


@settings(max_examples=200, deadline=None)
@given(pts5)
def test_exact_orient_matches_rational_oracle(pts):
    P = np.array(pts)
    ex = ExactPredicates(P)
    assert ex.orient(0, 1, 2, 3) == oracle_orient(P.tolist(), 0, 1, 2, 3)


@settings(max_examples=200, deadline=None)
@given(pts5)
def test_lifted_value_sign_matches_rational_oracle(pts):
    P = np.array(pts)
    ex = ExactPredicates(P)
    # det[[x,y,z,|p|^2,1]] over rows a..e equals the translated form up to sign
    s = ex.lifted_value(0, 1, 2, 3, 4)
    assert _sign(s) == _sign(oracle_lifted(P.tolist(), range(5)))


def test_insphere_convention_inside_positive():
    P = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0.2, 0.2, 0.2], [5, 5, 5]], float)
    ex = ExactPredicates(P)
    assert ex.orient(0, 1, 2, 3) == 1
    assert ex.insphere(0, 1, 2, 3, 4) == 1
    assert ex.insphere(0, 1, 2, 3, 5) == -1
    assert ex.insphere(1, 0, 2, 3, 4) == -1          # negative orientation flips


def test_cospherical_perturbation_is_nonzero_and_consistent():
    # cube corners are cospherical: every insphere needs the perturbation
    P = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float)
    ex = ExactPredicates(P)
    tet = (0, 1, 2, 4)
    if ex.orient(*tet) < 0:
        tet = (1, 0, 2, 4)
    for e in (3, 5, 6, 7):
        s = ex.insphere(*tet, e)
        assert s in (-1, 1)
        # the answer depends only on the point set, not on the vertex order
        for perm in permutations(tet):
            o = ex.orient(*perm)
            assert ex.insphere(*perm, e) * o == s


def test_perturbation_matches_mpmath_limit():
    # Evaluate the lifted determinant with |p_i|^2 + eps**(n - i) at a tiny eps
    # using 200-digit arithmetic and compare the sign with the symbolic rule.
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 200
    P = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float)
    ex = ExactPredicates(P)
    n = len(P)
    eps = mpmath.mpf("1e-20")
    for tet, e in [((0, 1, 2, 4), 7), ((0, 1, 2, 4), 3), ((1, 3, 5, 7), 0), ((0, 2, 4, 6), 5)]:
        if ex.orient(*tet) < 0:
            tet = (tet[1], tet[0]) + tet[2:]
        rows = []
        for i in tet + (e,):
            x, y, z = (mpmath.mpf(v) for v in P[i])
            # larger index gets the larger perturbation (dominant term)
            rows.append([x, y, z, x * x + y * y + z * z + eps ** (n - i), 1])
        det = mpmath.det(mpmath.matrix(rows))
        assert ex.insphere(*tet, e) == -int(mpmath.sign(det))


@pytest.mark.parametrize("name", BACKENDS)
@settings(max_examples=100, deadline=None)
@given(pts=pts5)
def test_filtered_equals_exact(name, pts):
    P = np.array(pts)
    kern = _backend.get(name)
    f = kern.Predicates(P)
    ex = ExactPredicates(P)
    assert f.orient(0, 1, 2, 3) == ex.orient(0, 1, 2, 3)
    if ex.orient(0, 1, 2, 3) != 0:
        assert f.insphere(0, 1, 2, 3, 4) == ex.insphere(0, 1, 2, 3, 4)


@pytest.mark.parametrize("name", BACKENDS)
def test_filter_defers_on_near_degenerate_input(name):
    # points on the plane x + y + z = 1 up to rounding: the float determinant
    # is pure noise and the exact fallback must decide
    P = np.array([[0.1, 0.2, 0.7], [0.3, 0.3, 0.4], [0.6, 0.1, 0.3], [0.25, 0.35, 0.4]])
    f = _backend.get(name).Predicates(P)
    assert f.orient(0, 1, 2, 3) == oracle_orient(P.tolist(), 0, 1, 2, 3)
    assert f.exact_calls >= 1
