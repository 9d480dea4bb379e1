"""
Transversality of the radial Liouville field ``X = (q - M) . d/dq`` to the
Moon and Earth components of the energy hypersurface.

Certification is by sampling: positions are drawn uniformly from the
Hill-region component (which is star-shaped about its primary inside the
ball reaching out to ``l1``), momenta uniformly from the sphere of allowed
kinetic energy, and ``X(H)`` is evaluated at each sample. A certificate
passes iff the smallest value is strictly positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import (
    EARTH,
    check_mu,
    eval_U,
    grad_H,
    magnetic_shift,
    spherical_to_cartesian,
    swap_primaries,
)
from .hill import boundary_radius
from .lagrange import lagrange_set

COMPONENTS = ("moon", "earth")


class SamplingError(RuntimeError):
    pass


def dU_drho(rho, theta, phi, mu):
    """Radial derivative of ``U`` in Moon-centred spherical coordinates."""
    mu = check_mu(mu)
    rho, theta, phi = (np.asarray(v, dtype=float) for v in (rho, theta, phi))
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    ct = np.cos(theta) * np.sin(phi)
    st = np.sin(theta) * np.sin(phi)
    den = rho**2 - 2.0 * rho * ct + 1.0
    if np.any(den <= 0):
        raise ValueError("point coincides with the Earth")
    return (
        mu / rho**2
        + (1.0 - mu) * (rho - ct) / den**1.5
        - rho * ct**2
        + ct * (1.0 - mu)
        - rho * st**2
    )


def d2U_drho2(rho, theta, phi, mu):
    mu = check_mu(mu)
    rho, theta, phi = (np.asarray(v, dtype=float) for v in (rho, theta, phi))
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    ct = np.cos(theta) * np.sin(phi)
    den = rho**2 - 2.0 * rho * ct + 1.0
    if np.any(den <= 0):
        raise ValueError("point coincides with the Earth")
    return (
        -2.0 * mu / rho**3
        - (1.0 - mu) * (2.0 * rho**2 - 4.0 * rho * ct + 3.0 * ct**2 - 1.0) / den**2.5
        - np.sin(phi) ** 2
    )




def spherical_radial_data(q):
    """``(rho, theta, phi)`` arrays for Moon-centred positions ``q``."""
    q = np.asarray(q, dtype=float)
    rho = np.linalg.norm(q, axis=-1)
    phi = np.arccos(np.clip(q[..., 2] / rho, -1.0, 1.0))
    theta = np.arctan2(q[..., 1], q[..., 0]) % (2.0 * np.pi)
    return rho, theta, phi


def X_of_H(state, mu):
    """``dH(X)`` for the Moon-centred radial field ``X = q . d/dq``.

    Closed form ``mu/|q| + (1-mu) q.(q-e)/|q-e|^3 + p1 q2 - p2 q1``.
    """
    mu = check_mu(mu)
    state = np.asarray(state, dtype=float)
    q, p = state[..., :3], state[..., 3:]
    r_m = np.linalg.norm(q, axis=-1)
    d = q - EARTH
    r_e = np.linalg.norm(d, axis=-1)
    return (
        mu / r_m
        + (1.0 - mu) * np.sum(q * d, axis=-1) / r_e**3
        + p[..., 0] * q[..., 1]
        - p[..., 1] * q[..., 0]
    )


def X_earth_of_H(state, mu):
    """``dH`` applied to the Earth-centred radial field ``(q - e) . d/dq``."""
    state = np.asarray(state, dtype=float)
    return np.sum(grad_H(state, mu)[..., :3] * (state[..., :3] - EARTH), axis=-1)


def chain_margin(state, c, mu):
    """``(dU/drho)^2 - 2 sin^2(phi) (c - U)`` at the positions of ``state``.

    Positivity of this quantity is what forces ``X(H) > 0`` on the shell.
    """
    q = np.asarray(state, dtype=float)[..., :3]
    rho, theta, phi = spherical_radial_data(q)
    return dU_drho(rho, theta, phi, mu) ** 2 - 2.0 * np.sin(phi) ** 2 * (c - eval_U(q, mu))


def momenta_on_shell(q, c, mu, directions):
    """Momenta with ``H(q, p) = c`` pointing along ``directions`` after the shift."""
    q = np.asarray(q, dtype=float)
    speed = np.sqrt(np.maximum(2.0 * (c - eval_U(q, mu)), 0.0))
    return -magnetic_shift(q, mu) + speed[..., None] * directions


def _unit_vectors(g):
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _sample_moon_side(c, mu, n, rng, r_max, exclude=None):
    # one draw of 7 normals per sample keeps the stream prefix-stable in n
    raw = rng.standard_normal((n, 7))
    u = rng.random(n)
    dirs = _unit_vectors(raw[:, :3])
    mom_dirs = _unit_vectors(raw[:, 3:6])
    rho_hat, theta, phi = spherical_radial_data(dirs)
    r_b = boundary_radius(theta, phi, c, mu, r_max)
    q = dirs * (r_b * np.cbrt(u))[:, None]
    keep = np.linalg.norm(q, axis=1) > 0
    if exclude is not None:
        centre, radius = exclude
        keep &= np.linalg.norm(q - centre, axis=1) >= radius
    q, mom_dirs = q[keep], mom_dirs[keep]
    p = momenta_on_shell(q, c, mu, mom_dirs)
    return np.concatenate([q, p], axis=1)


def sample_component(c, mu, component="moon", n_samples=100_000, seed=0, delta=0.05, lset=None):
    """Sample the energy hypersurface over the Moon or Earth component.

    Below ``c1`` the component is sampled in full. Above ``c1`` the side of
    the merged component inside the ball around the chosen primary is
    sampled, with the position ball of radius ``delta`` around ``l1``
    removed.

    Returns
    -------
    ndarray, shape (m, 6)
        Phase points with ``H = c``; ``m <= n_samples``.
    """
    mu = check_mu(mu)
    if component not in COMPONENTS:
        raise ValueError(f"component must be one of {COMPONENTS}, got {component!r}")
    lset = lset or lagrange_set(mu)
    c1 = lset.c1
    if c == c1:
        raise ValueError("the critical level c = c1 is singular and excluded")
    rng = np.random.default_rng(seed)
    mu_s = mu if component == "moon" else 1.0 - mu
    lset_s = lset if component == "moon" else lagrange_set(mu_s)
    exclude = None
    if c > c1:
        exclude = (lset_s.l1, float(delta))
    pts = _sample_moon_side(c, mu_s, n_samples, rng, lset_s.d_moon, exclude)
    if component == "earth":
        pts = swap_primaries(pts)
    if len(pts) == 0:
        raise SamplingError(f"no samples drawn for the {component} component at c={c}")
    return pts


def liouville_margin(states, mu, component="moon"):
    if component == "moon":
        return X_of_H(states, mu)
    return X_earth_of_H(states, mu)


@dataclass
class TransversalityCertificate:
    mu: float
    c: float
    component: str
    n_samples: int
    min_margin: float
    argmin_state: list
    grid_spec: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.min_margin > 0.0)

    def to_dict(self):
        out = {
            "mu": self.mu,
            "c": self.c,
            "component": self.component,
            "n_samples": self.n_samples,
            "min_margin": self.min_margin,
            "argmin_state": [float(v) for v in self.argmin_state],
            "grid_spec": self.grid_spec,
            "pass": self.passed,
        }
        out.update(self.extra)
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def certificate_from_margins(mu, c, component, states, margins, grid_spec, extra=None):
    margins = np.asarray(margins, dtype=float)
    if margins.size == 0:
        raise SamplingError("no samples to certify")
    k = int(np.argmin(margins))
    return TransversalityCertificate(
        mu=float(mu),
        c=float(c),
        component=component,
        n_samples=int(margins.size),
        min_margin=float(margins[k]),
        argmin_state=[float(v) for v in np.asarray(states)[k]],
        grid_spec=dict(grid_spec),
        extra=dict(extra or {}),
    )


def certify_component(c, mu, component="moon", grid_spec=None, lset=None):
    """Sampled certificate that ``X(H) > 0`` on one component of ``H = c``.

    Parameters
    ----------
    grid_spec : dict, optional
        ``n_samples`` (default 100000), ``seed`` (0) and ``delta`` (0.05, the
        radius of the excluded ball around ``l1`` above ``c1``).
    """
    mu = check_mu(mu)
    spec = {"n_samples": 100_000, "seed": 0, "delta": 0.05}
    spec.update(grid_spec or {})
    lset = lset or lagrange_set(mu)
    if c == lset.c1:
        raise ValueError("the critical level c = c1 is singular and excluded")
    spec["regime"] = "below_c1" if c < lset.c1 else "above_c1"
    states = sample_component(
        c, mu, component, int(spec["n_samples"]), int(spec["seed"]), float(spec["delta"]), lset
    )
    margins = liouville_margin(states, mu, component)
    return certificate_from_margins(mu, c, component, states, margins, spec)
