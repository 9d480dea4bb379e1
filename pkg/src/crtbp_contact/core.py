"""
Jacobi Hamiltonian of the spatial circular restricted three-body problem.

All functions work in the synodical frame translated so that the Moon (mass
``mu``) sits at the origin and the Earth (mass ``1 - mu``) at ``e = (1, 0, 0)``.
Phase points are arrays whose last axis has length 6 and is ordered
``(q1, q2, q3, p1, p2, p3)``; any leading axes are treated as a batch.

Sign convention for Hamiltonian vector fields: with ``omega = dp ^ dq`` the
field ``X_F`` of a function ``F`` is defined by ``i_{X_F} omega = dF``, which
gives ``qdot = -dF/dp`` and ``pdot = dF/dq``. The same convention is used for
every Hamiltonian vector field in the package (``H``, the gluing primitive,
the regularized Hamiltonian). Under it the flow of ``H`` traces physical
motion with time reversed; orbits, periods and energies are unaffected.

The barycentric frame (Earth at ``(mu, 0, 0)``, Moon at ``(mu - 1, 0, 0)``) is
related by ``q_bary = q + (mu - 1, 0, 0)`` with momenta unchanged, see
:func:`to_barycentric` and :func:`from_barycentric`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EARTH = np.array([1.0, 0.0, 0.0])
MOON = np.zeros(3)


class CollisionError(ValueError):
    """Raised when a position coincides with one of the primaries."""


def check_mu(mu: float) -> float:
    mu = float(mu)
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mass ratio must lie in (0, 1), got {mu!r}")
    return mu


def _positions(state):
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != 6:
        raise ValueError(f"phase points need 6 components, got shape {state.shape}")
    return state[..., :3], state[..., 3:]


def _distances(q):
    r_moon = np.linalg.norm(q, axis=-1)
    r_earth = np.linalg.norm(q - EARTH, axis=-1)
    if np.any(r_moon == 0.0) or np.any(r_earth == 0.0):
        raise CollisionError("position coincides with a primary")
    return r_moon, r_earth


@dataclass(frozen=True)
class SphericalCoords:
    """Moon-centred spherical coordinates (rho, theta, phi)."""

    rho: float
    theta: float
    phi: float


def eval_U(q, mu):
    """Effective potential at position(s) ``q``."""
    mu = check_mu(mu)
    q = np.asarray(q, dtype=float)
    r_moon, r_earth = _distances(q)
    return (
        -mu / r_moon
        - (1.0 - mu) / r_earth
        - 0.5 * ((q[..., 0] - 1.0 + mu) ** 2 + q[..., 1] ** 2)
    )


def grad_U(q, mu):
    mu = check_mu(mu)
    q = np.asarray(q, dtype=float)
    r_moon, r_earth = _distances(q)
    d = q - EARTH
    g = mu * q / r_moon[..., None] ** 3 + (1.0 - mu) * d / r_earth[..., None] ** 3
    g[..., 0] -= q[..., 0] - 1.0 + mu
    g[..., 1] -= q[..., 1]
    return g


def hessian_U(q, mu):
    mu = check_mu(mu)
    q = np.asarray(q, dtype=float)
    r_moon, r_earth = _distances(q)
    eye = np.eye(3)
    d = q - EARTH
    out = mu * (
        eye / r_moon[..., None, None] ** 3
        - 3.0 * q[..., :, None] * q[..., None, :] / r_moon[..., None, None] ** 5
    )
    out = out + (1.0 - mu) * (
        eye / r_earth[..., None, None] ** 3
        - 3.0 * d[..., :, None] * d[..., None, :] / r_earth[..., None, None] ** 5
    )
    out[..., 0, 0] -= 1.0
    out[..., 1, 1] -= 1.0
    return out


def magnetic_shift(q, mu):
    """Vector ``A(q)`` with ``H = |p + A(q)|^2 / 2 + U(q)``."""
    q = np.asarray(q, dtype=float)
    a = np.zeros_like(q)
    a[..., 0] = q[..., 1]
    a[..., 1] = -(q[..., 0] - 1.0 + mu)
    return a


def eval_H(state, mu):
    """Jacobi Hamiltonian in the Moon-centred rotating frame.

    Parameters
    ----------
    state : array_like, shape (..., 6)
        Phase point(s) ``(q, p)``.
    mu : float
        Mass ratio in (0, 1).

    Returns
    -------
    float or ndarray
        ``|p|^2/2 - mu/|q| - (1-mu)/|q-e| + p1 q2 - p2 (q1 - 1 + mu)``.
    """
    mu = check_mu(mu)
    q, p = _positions(state)
    r_moon, r_earth = _distances(q)
    return (
        0.5 * np.sum(p * p, axis=-1)
        - mu / r_moon
        - (1.0 - mu) / r_earth
        + p[..., 0] * q[..., 1]
        - p[..., 1] * (q[..., 0] - 1.0 + mu)
    )


def eval_H_completed(state, mu):
    """Same Hamiltonian written with completed squares plus ``U``."""
    mu = check_mu(mu)
    q, p = _positions(state)
    w = p + magnetic_shift(q, mu)
    return 0.5 * np.sum(w * w, axis=-1) + eval_U(q, mu)


def grad_H(state, mu):
    """Gradient ``(dH/dq, dH/dp)`` as an array of shape (..., 6)."""
    mu = check_mu(mu)
    q, p = _positions(state)
    r_moon, r_earth = _distances(q)
    out = np.empty(np.broadcast_shapes(q.shape[:-1]) + (6,))
    out[..., :3] = mu * q / r_moon[..., None] ** 3 + (1.0 - mu) * (q - EARTH) / r_earth[..., None] ** 3
    out[..., 0] -= p[..., 1]
    out[..., 1] += p[..., 0]
    out[..., 3:] = p + magnetic_shift(q, mu)
    return out


def hessian_H(state, mu):
    mu = check_mu(mu)
    q, _ = _positions(state)
    hu = hessian_U(q, mu)
    out = np.zeros(q.shape[:-1] + (6, 6))
    # gravity part of d2H/dq2 equals hessian_U plus the centrifugal identity block
    out[..., :3, :3] = hu
    out[..., 0, 0] += 1.0
    out[..., 1, 1] += 1.0
    out[..., 3:, 3:] = np.eye(3)
    out[..., 1, 3] = out[..., 3, 1] = 1.0
    out[..., 0, 4] = out[..., 4, 0] = -1.0
    return out


def symplectic_gradient(grad):
    """Turn a gradient ``(dF/dq, dF/dp)`` into ``X_F`` with ``i_X omega = dF``."""
    grad = np.asarray(grad, dtype=float)
    out = np.empty_like(grad)
    out[..., :3] = -grad[..., 3:]
    out[..., 3:] = grad[..., :3]
    return out


def hamiltonian_vector_field(state, mu):
    return symplectic_gradient(grad_H(state, mu))


def to_spherical(q) -> SphericalCoords:
    """Moon-centred spherical coordinates; ``theta = 0`` at the poles."""
    q = np.asarray(q, dtype=float)
    rho = float(np.linalg.norm(q))
    if rho == 0.0:
        raise CollisionError("spherical coordinates undefined at the Moon")
    phi = float(np.arccos(np.clip(q[2] / rho, -1.0, 1.0)))
    if q[0] == 0.0 and q[1] == 0.0:
        theta = 0.0
    else:
        theta = float(np.arctan2(q[1], q[0]) % (2.0 * np.pi))
    return SphericalCoords(rho, theta, phi)


def from_spherical(s) -> np.ndarray:
    if isinstance(s, SphericalCoords):
        rho, theta, phi = s.rho, s.theta, s.phi
    else:
        rho, theta, phi = s
    return spherical_to_cartesian(rho, theta, phi)


def spherical_to_cartesian(rho, theta, phi):
    """Vectorised ``(rho, theta, phi) -> q``; broadcasts its arguments."""
    rho, theta, phi = np.broadcast_arrays(
        np.asarray(rho, float), np.asarray(theta, float), np.asarray(phi, float)
    )
    return np.stack(
        [
            rho * np.cos(theta) * np.sin(phi),
            rho * np.sin(theta) * np.sin(phi),
            rho * np.cos(phi),
        ],
        axis=-1,
    )


def to_barycentric(state, mu):
    state = np.array(state, dtype=float)
    state[..., 0] += mu - 1.0
    return state


def from_barycentric(state, mu):
    state = np.array(state, dtype=float)
    state[..., 0] -= mu - 1.0
    return state


def planar_reflection(state):
    """Anti-symplectic reflection ``(q1,-q2,q3,-p1,p2,-p3)``; leaves ``H`` invariant."""
    state = np.array(state, dtype=float)
    state[..., 1] *= -1.0
    state[..., 3] *= -1.0
    state[..., 5] *= -1.0
    return state


def swap_primaries(state):
    """Half-turn about the barycentre, mapping the ``mu`` problem to ``1 - mu``.

    ``H_mu(z) == H_{1-mu}(swap_primaries(z))``; the Earth of one problem
    becomes the Moon of the other.
    """
    state = np.array(state, dtype=float)
    q1 = state[..., 0].copy()
    state[..., 0] = 1.0 - q1
    state[..., 1] *= -1.0
    state[..., 3] *= -1.0
    state[..., 4] *= -1.0
    return state
