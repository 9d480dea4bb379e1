"""
Moser regularization of the Moon collision.

The switch map ``x = -p, y = q - M`` turns ``omega = dp ^ dq`` into
``dy ^ dx``; stereographic projection then sends ``(x, y)`` to the cotangent
bundle of the 3-sphere with ``(xi, eta)`` in R^4 x R^4, ``|xi| = 1`` and
``<xi, eta> = 0``. The north pole ``xi = (1, 0, 0, 0)`` is the collision
fibre.

With ``K = (H - c)|y| = |eta| f - mu`` the regularized Hamiltonian is
``Q = |eta|^2 f^2 / 2`` and the energy hypersurface ``H = c`` becomes
``Q = mu^2 / 2``. The Earth chart is obtained by :func:`swap_primaries`,
which exchanges the roles of the two primaries and ``mu <-> 1 - mu``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EARTH, check_mu, eval_H, eval_U, swap_primaries
from .lagrange import lagrange_set
from .transversality import (
    SamplingError,
    X_of_H,
    certificate_from_margins,
    momenta_on_shell,
    sample_component,
)

MOON_MINUS_EARTH = -EARTH
CHARTS = ("moon", "earth")


class CollisionChartPoint(ValueError):
    """Raised when a regularized state on the collision fibre is mapped back."""


class EarthSingularity(ValueError):
    """Raised when the Earth-distance term of ``f`` is evaluated at the Earth."""


@dataclass
class SwitchedState:
    x: np.ndarray
    y: np.ndarray


@dataclass
class RegularizedState:
    xi: np.ndarray
    eta: np.ndarray

    @property
    def residuals(self):
        return constraint_residuals(self.xi, self.eta)

    def as_array(self):
        return np.concatenate([self.xi, self.eta], axis=-1)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        return cls(a[..., :4], a[..., 4:])


@dataclass(frozen=True)
class RegularizedLevel:
    mu: float
    c: float

    @property
    def target_value(self):
        return 0.5 * self.mu**2


def switch_map(state):
    """``(q, p) -> (x, y) = (-p, q - M)`` in the Moon-centred frame."""
    state = np.asarray(state, dtype=float)
    return SwitchedState(-state[..., 3:], state[..., :3].copy())


def unswitch_map(s: SwitchedState):
    return np.concatenate([np.asarray(s.y, float), -np.asarray(s.x, float)], axis=-1)


def constraint_residuals(xi, eta):
    """``(| |xi|^2 - 1 |, |<xi, eta>|)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return np.abs(np.sum(xi * xi, axis=-1) - 1.0), np.abs(np.sum(xi * eta, axis=-1))


def to_regularized(x, y):
    """Inverse stereographic map ``(x, y) -> (xi, eta)``.

    Returns
    -------
    xi, eta : ndarray, shape (..., 4)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite; the north pole is reached only as a limit")
    n2 = np.sum(x * x, axis=-1)
    xy = np.sum(x * y, axis=-1)
    xi = np.concatenate([((n2 - 1.0) / (n2 + 1.0))[..., None], 2.0 * x / (n2 + 1.0)[..., None]], axis=-1)
    eta = np.concatenate([xy[..., None], 0.5 * (n2 + 1.0)[..., None] * y - xy[..., None] * x], axis=-1)
    return xi, eta


def from_regularized(xi, eta):
    """``(xi, eta) -> (x, y)``: ``x = xi_vec/(1-xi0)``, ``y = eta_vec (1-xi0) + xi_vec eta0``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    one_m = 1.0 - xi[..., 0]
    if np.any(one_m <= 0.0):
        raise CollisionChartPoint("xi0 = 1 is the collision fibre; no finite (x, y)")
    x = xi[..., 1:] / one_m[..., None]
    y = eta[..., 1:] * one_m[..., None] + xi[..., 1:] * eta[..., 0:1]
    return x, y


def project_to_constraints(xi, eta):
    """Normalise ``xi`` and remove the ``xi`` component of ``eta``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    xi = xi / np.linalg.norm(xi, axis=-1, keepdims=True)
    eta = eta - np.sum(xi * eta, axis=-1, keepdims=True) * xi
    return xi, eta


def state_to_regularized(state, mu, chart="moon"):
    """Rotating phase point(s) to ``(xi, eta)`` in the Moon or Earth chart."""
    if chart not in CHARTS:
        raise ValueError(f"chart must be one of {CHARTS}")
    state = np.asarray(state, dtype=float)
    if chart == "earth":
        state = swap_primaries(state)
    s = switch_map(state)
    return to_regularized(s.x, s.y)


def regularized_to_state(xi, eta, mu, chart="moon"):
    x, y = from_regularized(xi, eta)
    state = unswitch_map(SwitchedState(x, y))
    return swap_primaries(state) if chart == "earth" else state


def chart_mu(mu, chart):
    return mu if chart == "moon" else 1.0 - mu


def _parts(xi, eta, mu):
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    om = 1.0 - xi[..., 0]
    w = om[..., None] * eta[..., 1:] + eta[..., 0:1] * xi[..., 1:] + MOON_MINUS_EARTH
    rw = np.linalg.norm(w, axis=-1)
    if np.any(rw == 0.0):
        raise EarthSingularity("regularized state sits on the Earth")
    return xi, eta, om, w, rw


def eval_f(xi, eta, c, mu):
    """``f`` with ``K = |eta| f - mu``; Moon chart, mass ratio ``mu``."""
    mu = check_mu(mu)
    xi, eta, om, w, rw = _parts(xi, eta, mu)
    m1 = mu - 1.0
    return (
        1.0
        - (1.0 - mu) * om / rw
        + om * (xi[..., 2] * eta[..., 1] - xi[..., 1] * eta[..., 2])
        + xi[..., 2] * m1
        - (c + 0.5) * om
    )


def grad_f(xi, eta, c, mu):
    """Analytic ``(df/dxi, df/deta)``, each of shape (..., 4)."""
    mu = check_mu(mu)
    xi, eta, om, w, rw = _parts(xi, eta, mu)
    k = (1.0 - mu) / rw**3
    dxi = np.zeros(np.broadcast_shapes(xi.shape, eta.shape))
    deta = np.zeros_like(dxi)
    cross = xi[..., 2] * eta[..., 1] - xi[..., 1] * eta[..., 2]
    # Earth term -(1-mu)(1-xi0)/|w|
    dxi[..., 0] = (1.0 - mu) / rw - k * om * np.sum(w * eta[..., 1:], axis=-1)
    dxi[..., 1:] = (k * om * eta[..., 0])[..., None] * w
    deta[..., 0] = k * om * np.sum(w * xi[..., 1:], axis=-1)
    deta[..., 1:] = (k * om**2)[..., None] * w
    # rotation term (1-xi0)(xi2 eta1 - xi1 eta2)
    dxi[..., 0] += -cross
    dxi[..., 1] += -om * eta[..., 2]
    dxi[..., 2] += om * eta[..., 1]
    deta[..., 1] += om * xi[..., 2]
    deta[..., 2] += -om * xi[..., 1]
    # translation and energy terms
    dxi[..., 2] += mu - 1.0
    dxi[..., 0] += c + 0.5
    return dxi, deta


def eta_dot_grad_f(xi, eta, c, mu):
    """``eta . d_eta f`` in closed form.

    The Earth term contributes ``(1-mu)(1-xi0) w.y / |w|^3`` with ``y = w -
    (M - E)``; the rotation term is linear in ``eta`` and reproduces itself.
    """
    mu = check_mu(mu)
    xi, eta, om, w, rw = _parts(xi, eta, mu)
    y = w - MOON_MINUS_EARTH
    return (
        (1.0 - mu) * om * np.sum(w * y, axis=-1) / rw**3
        + om * (xi[..., 2] * eta[..., 1] - xi[..., 1] * eta[..., 2])
    )


def eval_Q_reg(xi, eta, c, mu):
    eta = np.asarray(eta, dtype=float)
    return 0.5 * np.sum(eta * eta, axis=-1) * eval_f(xi, eta, c, mu) ** 2


def grad_Q_reg(xi, eta, c, mu):
    """``(dQ/dxi, dQ/deta)`` for ``Q = |eta|^2 f^2 / 2``."""
    eta = np.asarray(eta, dtype=float)
    f = eval_f(xi, eta, c, mu)
    dfx, dfe = grad_f(xi, eta, c, mu)
    n2 = np.sum(eta * eta, axis=-1)
    return (n2 * f)[..., None] * dfx, (f * f)[..., None] * eta + (n2 * f)[..., None] * dfe


def X_of_Q(xi, eta, c, mu):
    """``eta . d_eta Q = |eta|^2 f^2 + |eta|^2 f (eta . d_eta f)``."""
    eta = np.asarray(eta, dtype=float)
    f = eval_f(xi, eta, c, mu)
    n2 = np.sum(eta * eta, axis=-1)
    return n2 * f * f + n2 * f * eta_dot_grad_f(xi, eta, c, mu)


def energy_from_regularized(xi, eta, mu):
    """Energy ``c`` of the level ``Q = mu^2 / 2`` through ``(xi, eta)``.

    ``f`` is affine in ``c``, so ``|eta| f = mu`` is solved in closed form.
    Every level contains the collision fibre, where ``c`` is undetermined.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    om = 1.0 - xi[..., 0]
    if np.any(om <= 0.0):
        raise CollisionChartPoint("energy is undetermined on the collision fibre")
    f0 = eval_f(xi, eta, -0.5, mu)
    return (f0 - mu / np.linalg.norm(eta, axis=-1)) / om - 0.5


def earth_term_constant(xi, eta, mu):
    """Pointwise ``|d_eta((1-xi0)/|w|)| / (1-xi0)``; its sup is the constant ``C``."""
    xi, eta, om, w, rw = _parts(xi, eta, mu)
    g = np.concatenate(
        [(np.sum(w * xi[..., 1:], axis=-1) / rw**3)[..., None], om[..., None] * w / rw[..., None] ** 3],
        axis=-1,
    )
    return np.linalg.norm(g, axis=-1)


def X_of_Q_lower_bound(mu, epsilon, C):
    """``mu^2 - 2 mu eps (1 + (1 - mu) C)``."""
    return mu**2 - 2.0 * mu * epsilon * (1.0 + (1.0 - mu) * C)


def epsilon_prime(mu, C):
    """Largest ``eps`` for which the lower bound on ``X(Q)`` stays positive."""
    return mu / (2.0 * (1.0 + (1.0 - mu) * C))


def collision_states(mu, n, rng):
    """Points of the collision fibre on ``Q = mu^2/2``: ``xi = N``, ``eta = (0, mu n)``."""
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    xi = np.zeros((n, 4))
    xi[:, 0] = 1.0
    eta = np.concatenate([np.zeros((n, 1)), mu * d], axis=1)
    return xi, eta


def sample_regularized_level(c, mu, epsilon, n_samples, seed=0, collision_fraction=0.01):
    """States on ``Q = mu^2/2`` with ``(1-xi0)|eta| = |q - M| < epsilon``; Moon chart.

    Half of the non-collision positions are uniform in the ball, half have
    log-uniform radius down to ``1e-10 epsilon`` to resolve the approach to
    the collision fibre; a ``collision_fraction`` of the samples lies on the
    fibre itself.
    """
    mu = check_mu(mu)
    rng = np.random.default_rng(seed)
    n_coll = int(round(collision_fraction * n_samples))
    n_phys = n_samples - n_coll
    raw = rng.standard_normal((n_phys, 6))
    u = rng.random(n_phys)
    dirs = raw[:, :3] / np.linalg.norm(raw[:, :3], axis=1, keepdims=True)
    half = n_phys // 2
    r = np.empty(n_phys)
    r[:half] = epsilon * np.cbrt(u[:half])
    r[half:] = epsilon * 10.0 ** (-10.0 * u[half:])
    r = np.maximum(r, 1e-300)
    q = dirs * r[:, None]
    keep = eval_U(q, mu) <= c
    if not np.all(keep):
        raise SamplingError("part of the epsilon-ball around the Moon is outside the Hill region")
    mdir = raw[:, 3:] / np.linalg.norm(raw[:, 3:], axis=1, keepdims=True)
    states = np.concatenate([q, momenta_on_shell(q, c, mu, mdir)], axis=1)
    xi, eta = state_to_regularized(states, mu)
    xc, ec = collision_states(mu, n_coll, rng)
    return np.concatenate([xi, xc]), np.concatenate([eta, ec])


def certify_regularized(c, mu, epsilon=0.05, n_samples=100_000, seed=0, component="moon",
                        collar=0.5, lset=None):
    """Joint contact-type certificate for one component below ``c1``.

    Near the primary (``|q - M| < epsilon``) the regularized margin
    ``X(Q)`` is sampled; outside the smaller radius ``collar * epsilon`` the
    unregularized margin ``X(H)`` is sampled. The annulus between the radii
    is covered by both. The Earth component uses the Moon chart of the
    problem with ``1 - mu``.

    Returns
    -------
    TransversalityCertificate
        ``extra`` records the measured constant ``C``, ``eps_prime``, the
        bound checks ``|f| >= mu/2`` and ``|eta| <= 2`` and both minima.
    """
    mu = check_mu(mu)
    if component not in CHARTS:
        raise ValueError(f"component must be one of {CHARTS}")
    if not 0.0 < collar < 1.0:
        raise ValueError(f"collar must lie in (0, 1) so the regions overlap; got {collar}")
    lset = lset or lagrange_set(mu)
    if not c < lset.c1:
        raise ValueError("the regularized certificate needs c < c1; use the glued certificate above c1")
    mu_c = chart_mu(mu, component)
    lset_c = lset if component == "moon" else lagrange_set(mu_c)
    if epsilon >= lset_c.d_moon:
        raise ValueError(f"epsilon={epsilon} reaches l1 (distance {lset_c.d_moon:.4g})")

    xi, eta = sample_regularized_level(c, mu_c, epsilon, n_samples, seed)
    xq = X_of_Q(xi, eta, c, mu_c)
    f = eval_f(xi, eta, c, mu_c)
    neta = np.linalg.norm(eta, axis=1)
    C = float(np.max(earth_term_constant(xi, eta, mu_c)))
    bound = X_of_Q_lower_bound(mu_c, epsilon, C)

    outer = sample_component(c, mu_c, "moon", n_samples, seed + 1, lset=lset_c)
    outer = outer[np.linalg.norm(outer[:, :3], axis=1) >= collar * epsilon]
    xh = X_of_H(outer, mu_c)

    # both margins on the double-covered annulus, at identical physical states
    in_collar = np.linalg.norm(outer[:, :3], axis=1) < epsilon
    cx, ce = state_to_regularized(outer[in_collar], mu_c)
    collar_xq = X_of_Q(cx, ce, c, mu_c)
    collar_agree = bool(np.all(np.sign(collar_xq) == np.sign(xh[in_collar])))

    reg_states = np.concatenate([xi, eta], axis=1)
    if component == "earth":
        outer = swap_primaries(outer)
    k_reg, k_out = int(np.argmin(xq)), int(np.argmin(xh))
    extra = {
        "chart": component,
        "epsilon": epsilon,
        "collar_radius": collar * epsilon,
        "C": C,
        "eps_prime": epsilon_prime(mu_c, C),
        "X_of_Q_bound": bound,
        "bound_holds": bool(np.all(xq >= bound - 1e-12)),
        "min_X_of_Q": float(xq[k_reg]),
        "min_X_of_H": float(xh[k_out]),
        "argmin_regularized": [float(v) for v in reg_states[k_reg]],
        "f_bound_violations": int(np.sum(np.abs(f) < 0.5 * mu_c)),
        "eta_bound_violations": int(np.sum(neta > 2.0)),
        "Q_residual": float(np.max(np.abs(0.5 * neta**2 * f**2 - 0.5 * mu_c**2))),
        "collar_samples": int(np.sum(in_collar)),
        "collar_sign_agreement": collar_agree,
    }
    margins = np.array([xq[k_reg], xh[k_out]])
    states = np.stack([regularized_to_state_safe(xi[k_reg], eta[k_reg], mu, component), outer[k_out]])
    spec = {"n_samples": n_samples, "seed": seed, "epsilon": epsilon, "collar": collar,
            "regime": "regularized"}
    cert = certificate_from_margins(mu, c, component, states, margins, spec, extra)
    cert.n_samples = int(len(xq) + len(xh))
    return cert


def regularized_to_state_safe(xi, eta, mu, chart="moon"):
    """Like :func:`regularized_to_state` but returns NaNs on the collision fibre."""
    try:
        return regularized_to_state(xi, eta, mu, chart)
    except CollisionChartPoint:
        return np.full(6, np.nan)
