import numpy as np
import pytest

from crtbp_contact.connected_sum import (
    CutoffSpec,
    YFieldParams,
    Y_field,
    Y_of_H,
    Y_of_Q,
    Y_of_Q_matrix,
    Z_terms,
    certify_glued,
    cutoff,
    dH_of_Zf_bracket,
    find_Y_params,
    grad_G,
    min_eig_Y_of_Q,
    primitive_G,
    q_matrix,
    quadratic_form_at_L1,
    radial_field,
    sample_near_l1,
    separating_set_check,
)
from crtbp_contact.core import eval_H, symplectic_gradient
from crtbp_contact.lagrange import lagrange_set
from crtbp_contact.transversality import X_of_H, X_earth_of_H


@pytest.fixture(scope="module")
def half():
    Q = quadratic_form_at_L1(0.5)
    return Q, find_Y_params(Q)


def _near_l1(Q, n, scale, seed=0):
    rng = np.random.default_rng(seed)
    return Q.l1_phase_point + scale * rng.standard_normal((n, 6))


def test_quadratic_form_symmetric_case(half):
    Q, _ = half
    assert Q.rho_param == pytest.approx(8.0, abs=1e-10)
    assert Q.hessian_deviation < 1e-6
    np.testing.assert_array_equal(Q.matrix, Q.matrix.T)
    np.testing.assert_allclose(Q.matrix, q_matrix(8.0), atol=1e-9)


@pytest.mark.parametrize("mu", [0.01, 0.1, 0.9])
def test_quadratic_form_matches_hessian(mu):
    Q = quadratic_form_at_L1(mu)
    assert Q.hessian_deviation < 1e-6 and Q.rho_param > 1


def test_taylor_expansion_of_H(half):
    Q, _ = half
    z = _near_l1(Q, 200, 1e-3)
    dz = (z - Q.l1_phase_point)[:, [0, 1, 3, 4, 2, 5]]
    quad = np.einsum("ni,ij,nj->n", dz, Q.matrix, dz)
    err = eval_H(z, 0.5) - (-2.0) - quad
    assert np.max(np.abs(err)) < 1e-7


@pytest.mark.parametrize("mu", [0.5, 0.1, 0.01, 0.9])
def test_parameter_search_gives_positive_form(mu):
    Q = quadratic_form_at_L1(mu)
    p = find_Y_params(Q)
    assert min_eig_Y_of_Q(Q, p) > 0
    S = Y_of_Q_matrix(Q, p)
    np.testing.assert_allclose(S, S.T, atol=1e-14)


def test_Y_is_liouville(half):
    Q, p = half
    # linear field z -> D z: L_Y omega = omega iff D^T J + J D = J
    D = np.diag(p.diagonal)
    J = np.zeros((6, 6))
    for i, j in ((0, 2), (1, 3), (4, 5)):  # (q, p) pairs in the basis
        J[i, j], J[j, i] = -1.0, 1.0
    np.testing.assert_allclose(D.T @ J + J @ D, J, atol=1e-15)


def test_Y_scales_omega_along_flow(half):
    # the flow of a Liouville field scales omega by e^t
    Q, p = half
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal((2, 6))
    t = 1e-3
    phi = np.exp(t * p.diagonal)
    basis_u, basis_v = u * phi, v * phi
    w = lambda a, b: sum(a[j] * b[i] - a[i] * b[j] for i, j in ((0, 2), (1, 3), (4, 5)))
    assert w(basis_u, basis_v) / w(u, v) == pytest.approx(np.exp(t), rel=1e-12)


def test_Y_of_H_close_to_Y_of_Q_near_l1(half):
    Q, p = half
    z = _near_l1(Q, 2000, 1e-3, seed=2)
    yh, yq = Y_of_H(z, p, 0.5, Q), Y_of_Q(z, p, Q)
    assert np.all(yh >= yq - 0.5 * np.abs(yq))


@pytest.mark.parametrize("side", ["moon", "earth"])
def test_primitive_G(half, side):
    Q, p = half
    z = _near_l1(Q, 300, 0.05, seed=3)
    # dG = alpha_1 - alpha_0, equivalently Y = Z0 + X_G
    Z1 = radial_field(z, side) + symplectic_gradient(grad_G(z, p, Q, side))
    np.testing.assert_allclose(Z1, Y_field(z, Q, p), atol=1e-14)
    h = 1e-6
    fd = np.stack([(primitive_G(z + e, p, 0.5, Q, side) - primitive_G(z - e, p, 0.5, Q, side)) / (2 * h)
                   for e in np.eye(6) * h], axis=1)
    np.testing.assert_allclose(fd, grad_G(z, p, Q, side), rtol=1e-7, atol=1e-9)


def test_cutoff_profile():
    spec = CutoffSpec(0.02, 0.06)
    s = np.linspace(-0.1, 0.1, 2001)
    f, df = cutoff(s, spec)
    assert np.all(f[np.abs(s) <= 0.02] == 1) and np.all(f[np.abs(s) >= 0.06] == 0)
    assert np.all((f >= 0) & (f <= 1))
    h = 1e-7
    fd = (cutoff(s + h, spec)[0] - cutoff(s - h, spec)[0]) / (2 * h)
    np.testing.assert_allclose(df, fd, atol=1e-6)


def test_glued_field_reduces_to_radial_away_from_neck(half):
    Q, p = half
    z = sample_near_l1(-1.99, 0.5, 0.1, 2000, seed=4)
    terms = Z_terms(z, p, CutoffSpec(), 0.5, Q)
    far = terms.f == 0
    s_moon = (z[:, 0] - Q.x_l1 + (z[:, 4] - Q.l1_phase_point[4]) / Q.rho_param) < 0
    expect = np.where(s_moon, X_of_H(z, 0.5), X_earth_of_H(z, 0.5))
    assert far.any()
    np.testing.assert_allclose(terms.total[far], expect[far], rtol=1e-12, atol=1e-12)
    inner = terms.f == 1
    np.testing.assert_allclose(terms.total[inner], Y_of_H(z[inner], p, 0.5, Q), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(terms.total, terms.outer + terms.inner + terms.transition, atol=1e-12)


def test_bracket_vanishes_at_l1(half):
    Q, _ = half
    assert abs(dH_of_Zf_bracket(Q.l1_phase_point[:3], 0.5, Q)) < 1e-9


def test_validation_errors():
    with pytest.raises(ValueError):
        YFieldParams(1.0, 0.2, 0.1)
    with pytest.raises(ValueError):
        CutoffSpec(0.06, 0.02)


def test_glued_certificate(half):
    Q, p = half
    ls = lagrange_set(0.5)
    cert = certify_glued(ls.c1 + 0.01, 0.5, p, n_samples=20_000, lset=ls, Q=Q)
    assert cert.passed and cert.component == "moon_earth"
    assert set(cert.extra["parts"]) >= {"neck_min", "moon_min", "earth_min"}


def test_separating_set(half):
    Q, _ = half
    zero = separating_set_check(0.0, 0.5, 100, Q=Q)
    assert zero.unique_point and zero.restricted_min_eig > 0
    assert np.max(np.abs(zero.samples)) < 1e-10
    pos = separating_set_check(0.1, 0.5, 1000, Q=Q)
    assert pos.equation_residual < 1e-12 and pos.quadric_residual < 1e-12
    assert not pos.unique_point
