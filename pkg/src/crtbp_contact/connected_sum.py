"""
Liouville vector fields near the first Lagrange point and their gluing to
the radial fields of the Moon and Earth components.

Coordinates centred at ``L1`` are written in the ordered basis
``(q1, q2, p1, p2, q3, p3)`` used for the quadratic form; phase points
elsewhere in the package use ``(q1, q2, q3, p1, p2, p3)``. ``TO_BASIS``
permutes the latter into the former.

Gluing uses a cut-off ``f(s)`` of ``s = q1 + p2 / rho`` (centred
coordinates) equal to 1 for ``|s| <= s0`` and 0 for ``|s| >= s1``. For
``s < 0`` the outer field is the Moon-centred radial field, for ``s > 0``
the Earth-centred one, so ``f'`` and the constant term of the primitive
have the same sign on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core import EARTH, check_mu, eval_H, eval_U, grad_H, symplectic_gradient
from .lagrange import LagrangeSet, lagrange_set
from .transversality import (
    SamplingError,
    X_earth_of_H,
    X_of_H,
    certificate_from_margins,
    momenta_on_shell,
    sample_component,
)

TO_BASIS = np.array([0, 1, 3, 4, 2, 5])
FROM_BASIS = np.argsort(TO_BASIS)


@dataclass
class QuadraticFormQ:
    mu: float
    rho_param: float
    matrix: np.ndarray
    l1_phase_point: np.ndarray
    hessian_deviation: float = float("nan")

    @property
    def x_l1(self):
        """Moon-to-``l1`` distance along the axis."""
        return float(self.l1_phase_point[0])


@dataclass(frozen=True)
class YFieldParams:
    a: float
    b: float
    gamma: float

    def __post_init__(self):
        if not (self.a < 0 and self.b > 0 and 0 < self.gamma < 1):
            raise ValueError(f"need a < 0, b > 0, 0 < gamma < 1; got {self}")

    @property
    def diagonal(self):
        a, b, g = self.a, self.b, self.gamma
        return np.array([a, b, 1.0 - a, 1.0 - b, g, 1.0 - g])


@dataclass(frozen=True)
class CutoffSpec:
    s0: float = 0.02
    s1: float = 0.06

    def __post_init__(self):
        if not 0 < self.s0 < self.s1:
            raise ValueError("need 0 < s0 < s1")


def q_matrix(rho):
    m = np.zeros((6, 6))
    m[:4, :4] = [[-2 * rho, 0, 0, -1], [0, rho, 1, 0], [0, 1, 1, 0], [-1, 0, 0, 1]]
    m[4, 4] = rho
    m[5, 5] = 1.0
    return 0.5 * m


def _fd_hessian_H(z0, mu, h=1e-4):
    n = len(z0)
    out = np.empty((n, n))
    f0 = eval_H(z0, mu)
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            if i == j:
                v = (-eval_H(z0 + 2 * ei, mu) + 16 * eval_H(z0 + ei, mu) - 30 * f0
                     + 16 * eval_H(z0 - ei, mu) - eval_H(z0 - 2 * ei, mu)) / (12 * h * h)
            else:
                v = (eval_H(z0 + ei + ej, mu) - eval_H(z0 + ei - ej, mu)
                     - eval_H(z0 - ei + ej, mu) + eval_H(z0 - ei - ej, mu)) / (4 * h * h)
            out[i, j] = out[j, i] = v
    return out


def quadratic_form_at_L1(mu, lset: LagrangeSet | None = None, validate=True):
    """Quadratic part of ``H`` at ``L1`` in the basis ``(q1,q2,p1,p2,q3,p3)``.

    The matrix is built in closed form from ``rho = mu/|l1-M|^3 +
    (1-mu)/|l1-E|^3``. With ``validate`` the maximum deviation from half a
    finite-difference Hessian of ``H`` is stored in ``hessian_deviation``.
    """
    mu = check_mu(mu)
    lset = lset or lagrange_set(mu)
    l1 = lset.l1
    rho = mu / np.linalg.norm(l1) ** 3 + (1.0 - mu) / np.linalg.norm(l1 - EARTH) ** 3
    Q = QuadraticFormQ(mu, float(rho), q_matrix(rho), lset[1].phase_point.copy())
    if validate:
        hess = _fd_hessian_H(Q.l1_phase_point, mu)[np.ix_(TO_BASIS, TO_BASIS)]
        Q.hessian_deviation = float(np.max(np.abs(Q.matrix - 0.5 * hess)))
    return Q


def Y_of_Q_matrix(Q: QuadraticFormQ, params: YFieldParams):
    """Symmetric matrix ``S`` with ``Y(Q)(z) = z^T S z``."""
    D = np.diag(params.diagonal)
    return Q.matrix @ D + D @ Q.matrix


def min_eig_Y_of_Q(Q, params):
    return float(np.linalg.eigvalsh(Y_of_Q_matrix(Q, params))[0])


class ParameterSearchError(RuntimeError):
    def __init__(self, message, best=None, spectrum=None):
        super().__init__(message)
        self.best = best
        self.spectrum = spectrum


def find_Y_params(Q: QuadraticFormQ, n_grid=21):
    """Pick ``(a, b, gamma)`` maximising the least eigenvalue of ``Y(Q)``.

    A deterministic grid over ``a in [-2, -0.01]``, ``b in (0, 2]``,
    ``gamma in (0, 1)`` is followed by a bounded Nelder-Mead polish.
    Ties on the grid go to the lexicographically smallest ``(a, b, gamma)``.
    """
    a_grid = np.linspace(-2.0, -0.01, n_grid)
    b_grid = np.linspace(2.0 / n_grid, 2.0, n_grid)
    g_grid = (np.arange(n_grid) + 0.5) / n_grid
    best, best_val = None, -np.inf
    for a in a_grid:
        for b in b_grid:
            for g in g_grid:
                v = min_eig_Y_of_Q(Q, YFieldParams(a, b, g))
                if v > best_val:
                    best, best_val = (a, b, g), v

    def objective(x):
        a, b, g = x
        if not (a < 0 and b > 0 and 0 < g < 1):
            return np.inf
        return -min_eig_Y_of_Q(Q, YFieldParams(a, b, g))

    res = optimize.minimize(objective, np.array(best), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    x = res.x if np.isfinite(res.fun) and -res.fun >= best_val else np.array(best)
    params = YFieldParams(*map(float, x))
    val = min_eig_Y_of_Q(Q, params)
    if not val > 0:
        raise ParameterSearchError(
            "no parameters make Y(Q) positive definite",
            best=params,
            spectrum=np.linalg.eigvalsh(Y_of_Q_matrix(Q, params)),
        )
    return params


def centred(state, Q: QuadraticFormQ):
    """Phase point(s) relative to ``L1`` in the ``(q1,q2,p1,p2,q3,p3)`` basis."""
    z = np.asarray(state, dtype=float) - Q.l1_phase_point
    return z[..., TO_BASIS]


def Y_field(state, Q, params):
    """``Y_{a,b,gamma}`` at ``state``, returned in the state ordering."""
    w = centred(state, Q) * params.diagonal
    return w[..., FROM_BASIS]


def Y_of_H(state, params, mu, Q=None):
    Q = Q or quadratic_form_at_L1(mu, validate=False)
    return np.sum(grad_H(state, mu) * Y_field(state, Q, params), axis=-1)


def Y_of_Q(state, params, Q):
    z = centred(state, Q)
    S = Y_of_Q_matrix(Q, params)
    return np.einsum("...i,ij,...j->...", z, S, z)


def _side_constant(Q, side):
    # distance from the side's primary to l1 along the axis, signed
    return Q.x_l1 if side == "moon" else Q.x_l1 - 1.0


def primitive_G(state, params, mu, Q=None, side="moon"):
    """Primitive of ``alpha_1 - alpha_0`` in coordinates centred at ``L1``.

    ``G = (1-a) q1 p1 + k p1 + (1-b) p2 q2 + (1-gamma) p3 q3`` with
    ``k = q1(l1) - M1`` on the Moon side and ``q1(l1) - E1`` on the Earth
    side.
    """
    Q = Q or quadratic_form_at_L1(mu, validate=False)
    z = centred(state, Q)
    q1, q2, p1, p2, q3, p3 = (z[..., i] for i in range(6))
    k = _side_constant(Q, side)
    return (1 - params.a) * q1 * p1 + k * p1 + (1 - params.b) * p2 * q2 + (1 - params.gamma) * p3 * q3


def grad_G(state, params, Q, side="moon"):
    """Gradient of ``G`` in the state ordering ``(dG/dq, dG/dp)``."""
    z = centred(state, Q)
    q1, q2, p1, p2, q3, p3 = (z[..., i] for i in range(6))
    k = _side_constant(Q, side)
    a, b, g = params.a, params.b, params.gamma
    out = np.stack(
        [(1 - a) * p1, (1 - b) * p2, (1 - g) * p3, (1 - a) * q1 + k, (1 - b) * q2, (1 - g) * q3],
        axis=-1,
    )
    return out


def radial_field(state, side="moon"):
    state = np.asarray(state, dtype=float)
    out = np.zeros_like(state)
    centre = np.zeros(3) if side == "moon" else EARTH
    out[..., :3] = state[..., :3] - centre
    return out


def cutoff(s, spec: CutoffSpec):
    """C2 quintic smoothstep ``f(s)`` and its derivative ``f'(s)``."""
    s = np.asarray(s, dtype=float)
    t = np.clip((np.abs(s) - spec.s0) / (spec.s1 - spec.s0), 0.0, 1.0)
    f = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)
    dfdt = -30.0 * t**2 * (1.0 - t) ** 2
    df = dfdt * np.sign(s) / (spec.s1 - spec.s0)
    return f, df


def cutoff_variable(state, Q):
    z = centred(state, Q)
    return z[..., 0] + z[..., 3] / Q.rho_param


def side_of(state, Q):
    """``'moon'`` where the cut-off variable is negative, else ``'earth'``."""
    return np.where(cutoff_variable(state, Q) < 0, "moon", "earth")


@dataclass
class GluedTerms:
    total: np.ndarray
    outer: np.ndarray
    inner: np.ndarray
    transition: np.ndarray
    f: np.ndarray


def Z_terms(state, params, cutoff_spec, mu, Q=None):
    """``Z(H)`` and its three-term split ``(1-f) dH(Z0) + f dH(Z1) + G dH(Z_f)``.

    ``total`` is evaluated from the assembled field ``Z0 + f Z_G + G Z_f``,
    independently of the split.
    """
    mu = check_mu(mu)
    Q = Q or quadratic_form_at_L1(mu, validate=False)
    state = np.atleast_2d(np.asarray(state, dtype=float))
    dH = grad_H(state, mu)
    s = cutoff_variable(state, Q)
    f, df = cutoff(s, cutoff_spec)
    moon = s < 0
    Z0 = np.where(moon[:, None], radial_field(state, "moon"), radial_field(state, "earth"))
    gradG = np.where(moon[:, None], grad_G(state, params, Q, "moon"), grad_G(state, params, Q, "earth"))
    G = np.where(moon, primitive_G(state, params, mu, Q, "moon"), primitive_G(state, params, mu, Q, "earth"))
    ZG = symplectic_gradient(gradG)
    Zf = np.zeros_like(state)
    Zf[:, 3] = df
    Zf[:, 1] = -df / Q.rho_param
    Z = Z0 + f[:, None] * ZG + G[:, None] * Zf
    total = np.sum(dH * Z, axis=1)
    outer = (1.0 - f) * np.sum(dH * Z0, axis=1)
    inner = f * np.sum(dH * Y_field(state, Q, params), axis=1)
    transition = G * np.sum(dH * Zf, axis=1)
    return GluedTerms(total, outer, inner, transition, f)


def Z_of_H(state, params, cutoff_spec, mu, Q=None):
    return Z_terms(state, params, cutoff_spec, mu, Q).total


def dH_of_Zf_bracket(q, mu, Q):
    """``mu/|q-M|^3 + (1-mu)/|q-E|^3 - rho``; vanishes at ``l1``."""
    q = np.asarray(q, dtype=float)
    return (mu / np.linalg.norm(q, axis=-1) ** 3
            + (1 - mu) / np.linalg.norm(q - EARTH, axis=-1) ** 3 - Q.rho_param)


def sample_near_l1(c, mu, radius, n_samples, seed=0, lset=None, max_rounds=50):
    """``n_samples`` phase points with ``H = c`` and position within ``radius`` of ``l1``.

    Positions are uniform in the ball restricted to the Hill region; draws
    are made in chunks from one generator until enough are accepted.
    """
    mu = check_mu(mu)
    lset = lset or lagrange_set(mu)
    rng = np.random.default_rng(seed)
    chunks, total = [], 0
    for _ in range(max_rounds):
        if total >= n_samples:
            break
        raw = rng.standard_normal((n_samples, 6))
        u = rng.random(n_samples)
        dirs = raw[:, :3] / np.linalg.norm(raw[:, :3], axis=1, keepdims=True)
        q = lset.l1 + dirs * (radius * np.cbrt(u))[:, None]
        keep = eval_U(q, mu) <= c
        q = q[keep]
        mdir = raw[keep, 3:] / np.linalg.norm(raw[keep, 3:], axis=1, keepdims=True)
        chunks.append(np.concatenate([q, momenta_on_shell(q, c, mu, mdir)], axis=1))
        total += len(q)
    if total < n_samples:
        raise SamplingError(f"only {total} of {n_samples} neck samples accepted")
    return np.concatenate(chunks)[:n_samples]


def default_radii(lset):
    """``(glue_radius, delta)`` scaled to the distances from ``l1`` to the primaries."""
    glue = min(0.1, 0.5 * min(lset.d_moon, lset.d_earth))
    return glue, 0.5 * glue


def certify_glued(c, mu, params=None, cutoff_spec=CutoffSpec(), glue_radius=None,
                  delta=None, n_samples=100_000, seed=0, lset=None, Q=None):
    """Certificate for the glued field on ``H = c`` with ``c`` slightly above ``c1``.

    The glued field ``Z`` is used inside the position ball of radius
    ``glue_radius`` around ``l1``; outside the smaller ball of radius
    ``delta`` the Moon and Earth sides are checked against their radial
    fields. The collar between the two radii is covered twice. Defaults
    come from :func:`default_radii`.

    Returns
    -------
    TransversalityCertificate
        ``component == "moon_earth"``; ``extra`` carries ``a, b, gamma,
        s0, s1`` and per-region minima, including the three terms of the
        ``Z(H)`` split on the neck samples.
    """
    mu = check_mu(mu)
    lset = lset or lagrange_set(mu)
    if not c > lset.c1:
        raise ValueError("glued certificate needs c > c1")
    g0, d0 = default_radii(lset)
    glue_radius = g0 if glue_radius is None else glue_radius
    delta = d0 if delta is None else delta
    if glue_radius <= delta:
        raise ValueError("glue_radius must exceed delta so the regions overlap")
    Q = Q or quadratic_form_at_L1(mu, lset, validate=False)
    params = params or find_Y_params(Q)
    neck = sample_near_l1(c, mu, glue_radius, n_samples, seed, lset)
    moon = sample_component(c, mu, "moon", n_samples, seed + 1, delta, lset)
    earth = sample_component(c, mu, "earth", n_samples, seed + 2, delta, lset)
    terms = Z_terms(neck, params, cutoff_spec, mu, Q)
    m_moon = X_of_H(moon, mu)
    m_earth = X_earth_of_H(earth, mu)
    in_slab = terms.f > 0
    parts = {
        "neck_min": float(terms.total.min()),
        "moon_min": float(m_moon.min()),
        "earth_min": float(m_earth.min()),
        "neck_samples": int(len(neck)),
        "term_minima": {
            "outer": float(terms.outer.min()),
            "inner": float(terms.inner[in_slab].min()) if in_slab.any() else None,
            "transition": float(terms.transition.min()),
        },
    }
    states = np.concatenate([neck, moon, earth])
    margins = np.concatenate([terms.total, m_moon, m_earth])
    spec = {"n_samples": n_samples, "seed": seed, "delta": delta, "glue_radius": glue_radius,
            "regime": "glued"}
    extra = {
        "a": params.a, "b": params.b, "gamma": params.gamma,
        "s0": cutoff_spec.s0, "s1": cutoff_spec.s1, "parts": parts,
    }
    return certificate_from_margins(mu, c, "moon_earth", states, margins, spec, extra)


def find_energy_window(mu, params=None, cutoff_spec=CutoffSpec(), eps_max=0.1, n_bisect=10,
                       n_samples=20_000, seed=0, **kw):
    """Largest tested ``eps`` such that the glued certificate passes at ``c1 + eps``.

    Bisection between a failing and a passing value; returns ``eps_max``
    directly when it already passes.

    Returns
    -------
    eps : float
    history : list of (eps, passed, min_margin)
    """
    lset = lagrange_set(mu)
    Q = quadratic_form_at_L1(mu, lset, validate=False)
    params = params or find_Y_params(Q)
    history = []

    def ok(eps):
        cert = certify_glued(lset.c1 + eps, mu, params, cutoff_spec, n_samples=n_samples,
                             seed=seed, lset=lset, Q=Q, **kw)
        history.append((eps, cert.passed, cert.min_margin))
        return cert.passed

    if ok(eps_max):
        return eps_max, history
    lo, hi = 0.0, eps_max
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise RuntimeError(f"no passing energy window found above c1; history={history}")
    return lo, history


def certify_connected_sum(mu, cutoff_spec=CutoffSpec(), eps_max=0.1, n_bisect=8,
                          n_samples=100_000, seed=0, fraction=0.5, n_bisect_samples=None):
    """Find ``eps_E`` by bisection, then certify at ``c1 + fraction * eps_E``.

    The returned certificate records ``eps_E`` and the bisection history
    in ``extra``. Bisection uses ``n_samples`` unless ``n_bisect_samples``
    is given; fewer samples can overestimate the window.
    """
    lset = lagrange_set(mu)
    Q = quadratic_form_at_L1(mu, lset, validate=False)
    params = find_Y_params(Q)
    eps_E, history = find_energy_window(mu, params, cutoff_spec, eps_max, n_bisect,
                                        n_bisect_samples or n_samples, seed)
    c = lset.c1 + fraction * eps_E
    cert = certify_glued(c, mu, params, cutoff_spec, n_samples=n_samples, seed=seed,
                         lset=lset, Q=Q)
    cert.extra["eps_E"] = eps_E
    cert.extra["bisection"] = [[float(e), bool(p), float(m)] for e, p, m in history]
    return cert


@dataclass
class SeparatingSetReport:
    delta: float
    rho_param: float
    restricted_min_eig: float
    samples: np.ndarray = field(repr=False)
    equation_residual: float = 0.0
    quadric_residual: float = 0.0
    unique_point: bool = False


def separating_set_check(delta, mu, n_samples=1000, seed=0, Q=None):
    """Intersect ``{q1 + p2/rho = delta}`` with ``Q^{-1}(0)``.

    Solutions are generated from the ellipsoid form
    ``(p1+q2)^2 + (rho q1 - (rho+1) delta)^2 + (rho-1) q2^2 + rho q3^2 + p3^2
    = (2 rho + 1) delta^2`` and checked against the quadratic form
    directly. For ``delta = 0`` the restricted form is positive definite, so
    the origin is the only solution.
    """
    mu = check_mu(mu)
    Q = Q or quadratic_form_at_L1(mu, validate=False)
    rho = Q.rho_param
    if not rho > 1:
        raise ValueError(f"rho = {rho} <= 1: the separating quadric is not an ellipsoid")
    # hyperplane basis: free variables (q1, q2, p1, q3, p3), p2 = rho (delta - q1)
    B = np.zeros((6, 5))
    B[0, 0] = 1.0
    B[1, 1] = 1.0
    B[2, 2] = 1.0
    B[3, 0] = -rho
    B[4, 3] = 1.0
    B[5, 4] = 1.0
    restricted = B.T @ Q.matrix @ B
    min_eig = float(np.linalg.eigvalsh(restricted)[0])
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n_samples, 5))
    w *= np.sqrt(2 * rho + 1) * abs(delta) / np.linalg.norm(w, axis=1, keepdims=True)
    q2 = w[:, 2] / np.sqrt(rho - 1)
    q3 = w[:, 3] / np.sqrt(rho)
    p3 = w[:, 4]
    p1 = w[:, 0] - q2
    q1 = (w[:, 1] + (rho + 1) * delta) / rho
    p2 = rho * (delta - q1)
    z = np.stack([q1, q2, p1, p2, q3, p3], axis=1)
    lhs = (p1 + q2) ** 2 + (rho * q1 - (rho + 1) * delta) ** 2 + (rho - 1) * q2**2 + rho * q3**2 + p3**2
    eq_res = float(np.max(np.abs(lhs - (2 * rho + 1) * delta**2))) if n_samples else 0.0
    quad = np.einsum("ni,ij,nj->n", z, Q.matrix, z)
    report = SeparatingSetReport(
        delta=float(delta),
        rho_param=rho,
        restricted_min_eig=min_eig,
        samples=z,
        equation_residual=eq_res,
        quadric_residual=float(np.max(np.abs(quad))) if n_samples else 0.0,
        unique_point=bool(delta == 0 and min_eig > 0),
    )
    return report
