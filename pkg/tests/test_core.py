import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from crtbp_contact.core import (
    CollisionError,
    check_mu,
    eval_H,
    eval_H_completed,
    eval_U,
    from_barycentric,
    from_spherical,
    grad_H,
    grad_U,
    hamiltonian_vector_field,
    hessian_H,
    hessian_U,
    planar_reflection,
    swap_primaries,
    to_barycentric,
    to_spherical,
)
from crtbp_contact.lagrange import lagrange_set

finite = st.floats(-3, 3, allow_nan=False)
mus = st.floats(0.01, 0.99)


def _random_states(rng, n, mu=None):
    z = rng.uniform(-2, 2, (n, 6))
    far = (np.linalg.norm(z[:, :3], axis=1) > 0.05) & (np.linalg.norm(z[:, :3] - [1, 0, 0], axis=1) > 0.05)
    return z[far]


def test_H_at_symmetric_l1():
    assert eval_H([0.5, 0, 0, 0, 0, 0], 0.5) == pytest.approx(-2.0, abs=1e-15)


def test_H_term_by_term():
    # |p|^2/2 = 1/8, Kepler terms -1 each, p1 q2 = 0, p2 (q1 - 1 + mu) = 0
    assert eval_H([0.5, 0, 0, 0, -0.5, 0], 0.5) == pytest.approx(-15 / 8, abs=1e-15)


def test_H_forms_agree(rng):
    z = _random_states(rng, 2000)
    for mu in (0.1, 0.5, 0.77):
        np.testing.assert_allclose(eval_H(z, mu), eval_H_completed(z, mu), atol=1e-12)


def test_U_values_and_singularity():
    assert eval_U([0.5, 0, 0], 0.5) == pytest.approx(-2.0, abs=1e-15)
    z = np.array([1e-4, 1e-3, 1e-2])
    u = eval_U(np.stack([[0.5, 0, t] for t in z]), 0.5)
    assert np.all(np.diff(u) > 0) and np.all(u > -2.0)
    assert eval_U([1e-9, 0, 0], 0.5) < -1e8


def test_check_mu_rejects():
    for bad in (0.0, 1.0, -0.1, np.nan):
        with pytest.raises(ValueError):
            check_mu(bad)


def test_gradients_match_finite_differences(rng):
    z = _random_states(rng, 2000)
    h = 1e-6
    for mu in (0.1, 0.5):
        fd = np.empty_like(z)
        for i in range(6):
            e = np.zeros(6)
            e[i] = h
            fd[:, i] = (eval_H(z + e, mu) - eval_H(z - e, mu)) / (2 * h)
        an = grad_H(z, mu)
        rel = np.linalg.norm(fd - an, axis=1) / np.maximum(np.linalg.norm(an, axis=1), 1.0)
        assert rel.max() < 1e-6
        fdu = np.stack([(eval_U(z[:, :3] + e, mu) - eval_U(z[:, :3] - e, mu)) / (2 * h)
                        for e in np.eye(3) * h], axis=1)
        np.testing.assert_allclose(fdu, grad_U(z[:, :3], mu), rtol=1e-6, atol=1e-6)


def test_hessians(rng):
    z = _random_states(rng, 50)
    mu, h = 0.3, 1e-5
    H = hessian_H(z, mu)
    assert np.max(np.abs(H - np.swapaxes(H, -1, -2))) < 1e-14
    fd = np.stack([(grad_H(z + e, mu) - grad_H(z - e, mu)) / (2 * h) for e in np.eye(6) * h], axis=-1)
    np.testing.assert_allclose(H, fd, rtol=1e-5, atol=1e-5)
    HU = hessian_U(z[:, :3], mu)
    fdu = np.stack([(grad_U(z[:, :3] + e, mu) - grad_U(z[:, :3] - e, mu)) / (2 * h) for e in np.eye(3) * h], -1)
    np.testing.assert_allclose(HU, fdu, rtol=1e-5, atol=1e-5)


def test_vector_field_at_l1_and_planar_invariance(rng):
    for mu in (0.5, 0.1):
        z = lagrange_set(mu)[1].phase_point
        assert np.max(np.abs(grad_H(z, mu))) < 1e-10
        assert np.max(np.abs(hamiltonian_vector_field(z, mu))) < 1e-10
    z = _random_states(rng, 200)
    z[:, 2] = z[:, 5] = 0.0
    X = hamiltonian_vector_field(z, 0.4)
    assert np.all(X[:, 2] == 0) and np.all(X[:, 5] == 0)


def test_vector_field_convention(rng):
    # i_X omega = dH with omega = dp ^ dq: qdot = -dH/dp, pdot = dH/dq
    z = _random_states(rng, 10)
    X, g = hamiltonian_vector_field(z, 0.5), grad_H(z, 0.5)
    np.testing.assert_array_equal(X[:, :3], -g[:, 3:])
    np.testing.assert_array_equal(X[:, 3:], g[:, :3])


def test_spherical_examples():
    np.testing.assert_allclose(from_spherical((1.0, 0.0, np.pi / 2)), [1, 0, 0], atol=1e-16)
    s = to_spherical([0, 0, 1])
    assert (s.rho, s.theta, s.phi) == (1.0, 0.0, 0.0)
    with pytest.raises(CollisionError):
        to_spherical([0, 0, 0])


@given(st.tuples(finite, finite, finite).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_spherical_round_trip(q):
    back = from_spherical(to_spherical(q))
    assert np.max(np.abs(back - np.array(q))) < 1e-12 * max(1.0, np.linalg.norm(q))


@given(st.lists(finite, min_size=6, max_size=6), mus)
def test_swap_is_an_involution_and_maps_mu(z, mu):
    z = np.array(z)
    np.testing.assert_allclose(swap_primaries(swap_primaries(z)), z, atol=1e-15)
    q = z[:3]
    if min(np.linalg.norm(q), np.linalg.norm(q - [1, 0, 0])) > 1e-3:
        assert eval_H(swap_primaries(z), 1 - mu) == pytest.approx(eval_H(z, mu), rel=1e-12, abs=1e-12)


@given(st.lists(finite, min_size=6, max_size=6), mus)
@settings(max_examples=50)
def test_barycentric_round_trip(z, mu):
    np.testing.assert_allclose(from_barycentric(to_barycentric(z, mu), mu), z, atol=1e-15)


def test_symmetries_symbolically():
    q1, q2, q3, p1, p2, p3, m = sp.symbols("q1 q2 q3 p1 p2 p3 mu", real=True)

    def H(q1, q2, q3, p1, p2, p3, mu):
        rm = sp.sqrt(q1**2 + q2**2 + q3**2)
        re = sp.sqrt((q1 - 1) ** 2 + q2**2 + q3**2)
        return (p1**2 + p2**2 + p3**2) / 2 - mu / rm - (1 - mu) / re + p1 * q2 - p2 * (q1 - 1 + mu)

    base = H(q1, q2, q3, p1, p2, p3, m)
    # anti-symplectic planar reflection
    assert sp.simplify(H(q1, -q2, q3, -p1, p2, -p3, m) - base) == 0
    # half-turn exchanging the primaries
    assert sp.simplify(H(1 - q1, -q2, q3, -p1, -p2, p3, 1 - m) - base) == 0
    # and numerically the implemented maps agree with the symbolic ones
    z = np.array([0.3, -0.2, 0.1, 0.4, -0.5, 0.6])
    np.testing.assert_array_equal(planar_reflection(z), [0.3, 0.2, 0.1, -0.4, -0.5, -0.6])
    np.testing.assert_array_equal(swap_primaries(z), [0.7, 0.2, 0.1, -0.4, 0.5, 0.6])
