"""
Hill regions: component labels, zero-velocity radii and the sphere minimum
of the effective potential.

Below ``c1`` the Moon and Earth components are star-shaped about their
primary inside the balls of radius ``|l1 - M|`` and ``|l1 - E|`` (the radial
derivative of ``U`` is positive there), so point classification only needs
ray marching along straight segments. :func:`component_grid` does the
same job globally with a flood fill on a regular grid.
"""

from __future__ import annotations

import enum

import numpy as np
from scipy import ndimage, optimize

from .core import EARTH, check_mu, eval_U, grad_U, spherical_to_cartesian
from .lagrange import lagrange_set


class HillComponentLabel(enum.Enum):
    MoonBounded = "MoonBounded"
    EarthBounded = "EarthBounded"
    Unbounded = "Unbounded"
    MoonEarthMerged = "MoonEarthMerged"
    Forbidden = "Forbidden"


class AmbiguousClassification(ValueError):
    """The point is within tolerance of the zero-velocity surface."""


def _segment_allowed(a, b, c, mu, n=512):
    t = np.linspace(0.0, 1.0, n + 1)[1:]
    pts = a + t[:, None] * (b - a)
    # the endpoint b may be a primary; drop it
    pts = pts[np.linalg.norm(pts, axis=1) > 0]
    pts = pts[np.linalg.norm(pts - EARTH, axis=1) > 0]
    return bool(np.all(eval_U(pts, mu) <= c))


def classify_point(q, c, mu, tol=1e-12, lset=None, n_march=512):
    """Label the Hill-region component containing ``q`` at energy ``c``.

    A point is reachable from a primary when the straight segment to it
    stays inside ``{U <= c}`` and inside the ball of radius ``|l1 - primary|``.
    Above ``c1`` the segment through ``l1`` is also tried, and Moon- or
    Earth-reachable points are reported as merged. Remaining allowed points
    are labelled unbounded.

    Raises
    ------
    AmbiguousClassification
        If ``|U(q) - c| < tol``.
    """
    mu = check_mu(mu)
    q = np.asarray(q, dtype=float)
    lset = lset or lagrange_set(mu)
    u = float(eval_U(q, mu))
    if abs(u - c) < tol:
        raise AmbiguousClassification(f"|U(q) - c| = {abs(u - c):.3e} below tolerance")
    if u > c:
        return HillComponentLabel.Forbidden
    moon = np.zeros(3)
    l1 = lset.l1
    below = c < lset.c1
    if below:
        if np.linalg.norm(q) < lset.d_moon and _segment_allowed(q, moon, c, mu, n_march):
            return HillComponentLabel.MoonBounded
        if np.linalg.norm(q - EARTH) < lset.d_earth and _segment_allowed(q, EARTH, c, mu, n_march):
            return HillComponentLabel.EarthBounded
        return HillComponentLabel.Unbounded
    for target in (moon, EARTH):
        if _segment_allowed(q, target, c, mu, n_march):
            return HillComponentLabel.MoonEarthMerged
    if _segment_allowed(q, l1, c, mu, n_march):
        return HillComponentLabel.MoonEarthMerged
    return HillComponentLabel.Unbounded


def ray_potential(rho, theta, phi, mu):
    return eval_U(spherical_to_cartesian(rho, theta, phi), mu)


def boundary_radius(theta, phi, c, mu, r_max, iters=80):
    """Vectorised bisection for the first crossing of ``U = c`` along rays.

    Rays that stay below ``c`` up to ``r_max`` return ``r_max``. Assumes
    ``U`` increases along each ray on ``(0, r_max)``.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    lo = np.zeros(theta.shape)
    hi = np.full(theta.shape, float(r_max))
    inside = ray_potential(hi, theta, phi, mu) <= c
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = ray_potential(mid, theta, phi, mu) <= c
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.where(inside, float(r_max), 0.5 * (lo + hi))


def zero_velocity_radius(theta, phi, c, mu, lset=None):
    """Smallest ``rho`` in ``(0, d)`` with ``U(rho, theta, phi) = c``.

    ``d`` is the Moon-``l1`` distance. Requires ``c < c1``.
    """
    mu = check_mu(mu)
    lset = lset or lagrange_set(mu)
    if not c < lset.c1:
        raise ValueError(f"energy {c} is not below c1 = {lset.c1}")
    d = lset.d_moon
    g = lambda r: float(ray_potential(r, theta, phi, mu)) - c
    if g(d) <= 0.0:
        raise RuntimeError(
            f"no zero-velocity crossing inside the Moon ball along ({theta}, {phi}); "
            "this contradicts c < c1"
        )
    # U ~ -mu/rho near the Moon, so this bracket is always valid
    lo = min(mu / (abs(c) + 10.0), 0.5 * d)
    while g(lo) >= 0.0:
        lo *= 0.5
    return optimize.brentq(g, lo, d, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _sphere_grad(angles, rho, mu):
    theta, phi = angles
    q = spherical_to_cartesian(rho, theta, phi)
    g = grad_U(q, mu)
    dq_dtheta = np.array([-rho * np.sin(theta) * np.sin(phi), rho * np.cos(theta) * np.sin(phi), 0.0])
    dq_dphi = np.array(
        [rho * np.cos(theta) * np.cos(phi), rho * np.sin(theta) * np.cos(phi), -rho * np.sin(phi)]
    )
    return np.array([g @ dq_dtheta, g @ dq_dphi])


def sphere_min_U(rho, mu, n_theta=181, n_phi=91):
    """Global minimiser of ``U`` on the Moon-centred sphere of radius ``rho``.

    Dense grid search followed by a BFGS polish using the analytic gradient.

    Returns
    -------
    tuple of float
        ``(theta, phi, U_min)`` with ``theta`` in ``[0, 2 pi)``.
    """
    mu = check_mu(mu)
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    # cell-centred grid, so the polish has to do the final approach
    th = (np.arange(n_theta) + 0.5) * 2.0 * np.pi / n_theta
    ph = (np.arange(n_phi) + 0.5) * np.pi / n_phi
    T, P = np.meshgrid(th, ph, indexing="ij")
    vals = ray_potential(rho, T, P, mu)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    x0 = np.array([T[i, j], P[i, j]])
    fun = lambda a: float(ray_potential(rho, a[0], a[1], mu))
    res = optimize.minimize(
        fun, x0, jac=lambda a: _sphere_grad(a, rho, mu), method="BFGS", options={"gtol": 1e-14}
    )
    theta, phi = res.x
    if phi < 0 or phi > np.pi:
        # reflect through the pole back into the coordinate range
        phi = -phi if phi < 0 else 2.0 * np.pi - phi
        theta = theta + np.pi
    return float(theta % (2.0 * np.pi)), float(phi), float(fun([theta, phi]))


def circle_min_theta(rho, phi, mu, n_theta=720):
    """Minimiser in ``theta`` of ``U`` on the circle of fixed ``rho`` and ``phi``."""
    th = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    vals = ray_potential(rho, th, phi, mu)
    t0 = th[np.argmin(vals)]
    dt = 2.0 * np.pi / n_theta

    def dU_dtheta(t):
        q = spherical_to_cartesian(rho, t, phi)
        tangent = rho * np.sin(phi) * np.array([-np.sin(t), np.cos(t), 0.0])
        return float(grad_U(q, mu) @ tangent)

    # a line search only locates the argmin to ~sqrt(eps); root-find dU/dtheta instead
    lo, hi = t0 - dt, t0 + dt
    if dU_dtheta(lo) < 0.0 < dU_dtheta(hi):
        t = optimize.brentq(dU_dtheta, lo, hi, xtol=1e-15)
    else:
        t = optimize.minimize_scalar(
            lambda s: float(ray_potential(rho, s, phi, mu)), bracket=(lo, t0, hi), tol=1e-12
        ).x
    return float(t % (2.0 * np.pi))


def great_circle_dU_dphi(rho, phi, mu):
    """``dU/dphi`` on the great circle ``(rho cos phi, 0, rho sin phi)``."""
    den = rho**2 - 2.0 * rho * np.cos(phi) + 1.0
    return rho * np.sin(phi) * ((1.0 - mu) / den**1.5 + rho * np.cos(phi) - 1.0 + mu)


def great_circle_critical_points(rho, mu, n=20000):
    """Critical angles of ``U`` on the great circle, found by sign changes.

    The zeros at ``phi = 0`` and ``phi = pi`` are included directly; the
    remaining ones come from sign changes of the non-trivial factor.
    """
    phi = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)[1:]
    phi = phi[np.abs(phi - np.pi) > 1e-9]
    den = rho**2 - 2.0 * rho * np.cos(phi) + 1.0
    factor = (1.0 - mu) / den**1.5 + rho * np.cos(phi) - 1.0 + mu
    found = [0.0, np.pi]
    g = lambda p: (1.0 - mu) / (rho**2 - 2.0 * rho * np.cos(p) + 1.0) ** 1.5 + rho * np.cos(p) - 1.0 + mu
    for k in np.nonzero(np.sign(factor[:-1]) != np.sign(factor[1:]))[0]:
        if phi[k] < np.pi < phi[k + 1]:
            continue
        found.append(optimize.brentq(g, phi[k], phi[k + 1], xtol=1e-14))
    return np.sort(np.array(found))


def component_grid(c, mu, resolution=128, bounds=None):
    """Flood-fill labelling of the Hill region on a regular grid.

    Parameters
    ----------
    resolution : int
        Cells per axis.
    bounds : sequence of (lo, hi), optional
        Box for ``q1``, ``q2``, ``q3``. Defaults to a box around both
        primaries and all Lagrange points.

    Returns
    -------
    axes : list of ndarray
        Cell-centre coordinates per axis.
    labels : ndarray of object
        ``HillComponentLabel`` per cell, shape ``(resolution,) * 3``.
    """
    mu = check_mu(mu)
    if bounds is None:
        bounds = [(-1.6, 2.6), (-1.6, 1.6), (-1.2, 1.2)]
    axes = []
    for lo, hi in bounds:
        edges = np.linspace(lo, hi, resolution + 1)
        axes.append(0.5 * (edges[1:] + edges[:-1]))
    Q = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    r_m = np.linalg.norm(Q, axis=-1)
    r_e = np.linalg.norm(Q - EARTH, axis=-1)
    Qs = np.where(((r_m == 0) | (r_e == 0))[..., None], Q + 1e-12, Q)
    allowed = eval_U(Qs, mu) <= c
    comp, n = ndimage.label(allowed)
    moon_idx = tuple(np.argmin(np.abs(ax - v)) for ax, v in zip(axes, (0.0, 0.0, 0.0)))
    earth_idx = tuple(np.argmin(np.abs(ax - v)) for ax, v in zip(axes, (1.0, 0.0, 0.0)))
    moon_lab, earth_lab = comp[moon_idx], comp[earth_idx]
    labels = np.full(comp.shape, HillComponentLabel.Forbidden, dtype=object)
    labels[allowed] = HillComponentLabel.Unbounded
    if moon_lab and moon_lab == earth_lab:
        labels[comp == moon_lab] = HillComponentLabel.MoonEarthMerged
    else:
        if moon_lab:
            labels[comp == moon_lab] = HillComponentLabel.MoonBounded
        if earth_lab:
            labels[comp == earth_lab] = HillComponentLabel.EarthBounded
    return axes, labels


def write_component_csv(path_or_file, axes, labels, include_forbidden=True):
    """Write ``q1,q2,q3,label`` rows for a labelled grid."""
    Q = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    flat = labels.reshape(-1)
    lines = ["q1,q2,q3,label"]
    for q, lab in zip(Q, flat):
        if not include_forbidden and lab is HillComponentLabel.Forbidden:
            continue
        lines.append(f"{float(q[0])!r},{float(q[1])!r},{float(q[2])!r},{lab.value}")
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
