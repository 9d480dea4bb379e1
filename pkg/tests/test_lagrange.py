import numpy as np
import pytest

from crtbp_contact.core import eval_H, grad_H, grad_U
from crtbp_contact.lagrange import axis_gradient, collinear_points, lagrange_set, lift, triangular_points


def _bisect(g, a, b, tol=1e-15):
    # independent oracle: plain bisection on a sign-changing bracket
    ga = g(a)
    while b - a > tol * max(1.0, abs(a)):
        m = 0.5 * (a + b)
        gm = g(m)
        if gm == 0:
            return m
        if np.sign(gm) == np.sign(ga):
            a, ga = m, gm
        else:
            b = m
    return 0.5 * (a + b)


def test_symmetric_case():
    ls = lagrange_set(0.5)
    assert ls.l1[0] == pytest.approx(0.5, abs=1e-14)
    assert ls.c1 == pytest.approx(-2.0, abs=1e-12)
    np.testing.assert_allclose(ls.l1, [0.5, 0, 0], atol=1e-14)


def test_collinear_roots_against_bisection():
    mu = 0.1
    g = lambda x: float(axis_gradient(x, mu))
    got = collinear_points(mu)[:, 0]
    brackets = [(-3.0, -1e-9), (1e-9, 1 - 1e-9), (1 + 1e-9, 3.0)]
    oracle = [_bisect(g, a, b) for a, b in brackets]
    np.testing.assert_allclose(got, oracle, atol=1e-10)


@pytest.mark.parametrize("mu", [0.5, 0.01, 0.3, 0.9])
def test_triangular_points(mu):
    tri = triangular_points(mu)
    for q in tri:
        assert np.linalg.norm(grad_U(q, mu)) < 1e-10
        # equilateral with both primaries, found by Newton not assumed
        assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-10)
        assert np.linalg.norm(q - [1, 0, 0]) == pytest.approx(1.0, abs=1e-10)
    assert tri[0][1] > 0 > tri[1][1]
    if mu == 0.5:
        np.testing.assert_allclose(tri, [[0.5, np.sqrt(3) / 2, 0], [0.5, -np.sqrt(3) / 2, 0]], atol=1e-12)


@pytest.mark.parametrize("mu", np.round(np.linspace(0.01, 0.99, 25), 4))
def test_set_properties(mu):
    ls = lagrange_set(mu)
    assert [p.index for p in ls.points] == [1, 2, 3, 4, 5]
    assert 0.0 < ls.l1[0] < 1.0
    assert ls.c1 <= -1.5
    assert ls.d_moon < 1 and ls.d_earth < 1
    assert np.all(np.diff(ls.critical_values) >= 0)
    for p in ls.points:
        assert np.linalg.norm(grad_U(p.q, mu)) < 1e-9
        assert np.max(np.abs(grad_H(p.phase_point, mu))) < 1e-9
        assert eval_H(p.phase_point, mu) == pytest.approx(p.critical_value, abs=1e-15)


def test_lift_moon_frame():
    z = lift(np.array([0.3, 0.2, 0.0]), 0.4)
    np.testing.assert_allclose(z, [0.3, 0.2, 0, -0.2, 0.3 - 1 + 0.4, 0])


def test_swap_symmetry_of_points():
    a, b = lagrange_set(0.2), lagrange_set(0.8)
    assert a.c1 == pytest.approx(b.c1, abs=1e-12)
    assert a.l1[0] == pytest.approx(1.0 - b.l1[0], abs=1e-12)
    np.testing.assert_allclose(a.critical_values, b.critical_values, atol=1e-12)


def test_to_dict_round():
    d = lagrange_set(0.5).to_dict()
    assert d["mu"] == 0.5 and len(d["points"]) == 5
    assert all(isinstance(v, float) for v in d["points"][0]["q"])
