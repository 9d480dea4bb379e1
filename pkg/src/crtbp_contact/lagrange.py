"""
Lagrange points of the effective potential and their phase-space lifts.

Collinear points come from bracketing sign changes of ``dU/dq1`` on the
axis, followed by a safeguarded Newton refinement. Triangular points come
from a 2-D Newton iteration started at the equilateral configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import check_mu, eval_H, grad_H, grad_U, hessian_U

AXIS_TOL = 1e-12


class LagrangeSolverError(RuntimeError):
    pass


def axis_gradient(x, mu):
    """``dU/dq1`` restricted to the ``q1`` axis."""
    x = np.asarray(x, dtype=float)
    return mu * x / np.abs(x) ** 3 + (1.0 - mu) * (x - 1.0) / np.abs(x - 1.0) ** 3 - (x - 1.0 + mu)


def _axis_gradient_dx(x, mu):
    return -2.0 * mu / np.abs(x) ** 3 - 2.0 * (1.0 - mu) / np.abs(x - 1.0) ** 3 - 1.0


def _scan_points(interval):
    lo, hi = interval
    # log-spaced towards the singular end(s) so brackets resolve near a primary
    t = np.logspace(-12, 2, 1500)
    if np.isinf(lo):
        return hi - t[::-1]
    if np.isinf(hi):
        return lo + t
    half = 0.5 * (hi - lo)
    t = t[t < half]
    return np.unique(np.concatenate([lo + t, [lo + half], hi - t[::-1]]))


def _refine(g, dg, a, b, tol=AXIS_TOL, maxiter=200):
    """Newton with bisection fallback inside the bracket ``[a, b]``."""
    ga = g(a)
    x = 0.5 * (a + b)
    for _ in range(maxiter):
        gx = g(x)
        if abs(gx) < tol:
            return x
        if np.sign(gx) == np.sign(ga):
            a, ga = x, gx
        else:
            b = x
        step = gx / dg(x)
        xn = x - step
        if not (min(a, b) < xn < max(a, b)):
            xn = 0.5 * (a + b)
        if xn == x:
            break
        x = xn
    if abs(g(x)) < 1e3 * tol:
        return x
    raise LagrangeSolverError(f"axis root did not converge in [{a}, {b}], |g|={abs(g(x)):.3e}")


def collinear_points(mu):
    """All roots of ``dU/dq1`` on the ``q1`` axis, sorted by ``q1``.

    Returns
    -------
    ndarray, shape (k, 3)
        Positions ``(q1, 0, 0)``; ``k`` is three for every ``mu`` in (0, 1).
    """
    mu = check_mu(mu)
    g = lambda x: float(axis_gradient(x, mu))
    dg = lambda x: float(_axis_gradient_dx(x, mu))
    roots = []
    scanned = []
    for interval in [(-np.inf, 0.0), (0.0, 1.0), (1.0, np.inf)]:
        xs = _scan_points(interval)
        xs = xs[(xs != 0.0) & (xs != 1.0)]
        vals = axis_gradient(xs, mu)
        scanned.append((float(xs[0]), float(xs[-1])))
        exact = xs[vals == 0.0]
        roots.extend(exact)
        xs, vals = xs[vals != 0.0], vals[vals != 0.0]
        for i in np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]:
            if np.any((exact > xs[i]) & (exact < xs[i + 1])):
                continue
            roots.append(_refine(g, dg, xs[i], xs[i + 1]))
    if len(roots) != 3:
        raise LagrangeSolverError(f"expected 3 axis roots, found {len(roots)}; scanned {scanned}")
    roots = np.sort(np.array(roots))
    out = np.zeros((3, 3))
    out[:, 0] = roots
    return out


def triangular_points(mu, tol=1e-13, maxiter=50):
    """The two off-axis critical points of ``U``, upper one first."""
    mu = check_mu(mu)
    out = []
    for sign in (1.0, -1.0):
        q = np.array([0.5, sign * np.sqrt(3.0) / 2.0, 0.0])
        for _ in range(maxiter):
            g = grad_U(q, mu)[:2]
            if np.linalg.norm(g) < tol:
                break
            q[:2] -= np.linalg.solve(hessian_U(q, mu)[:2, :2], g)
        else:
            raise LagrangeSolverError(f"triangular point did not converge (mu={mu})")
        out.append(q)
    return np.array(out)


def lift(q, mu):
    """Critical point of ``H`` above a critical point ``q`` of ``U``.

    In the barycentric frame this is ``(q1, q2, 0, -q2, q1, 0)``; in the
    Moon-centred frame the second momentum picks up the translation,
    ``p2 = q1 - 1 + mu``.
    """
    q = np.asarray(q, dtype=float)
    return np.array([q[0], q[1], 0.0, -q[1], q[0] - 1.0 + mu, 0.0])


@dataclass
class LagrangePoint:
    index: int
    q: np.ndarray
    phase_point: np.ndarray
    critical_value: float

    def to_dict(self):
        return {
            "index": self.index,
            "q": [float(v) for v in self.q],
            "phase_point": [float(v) for v in self.phase_point],
            "critical_value": float(self.critical_value),
        }


@dataclass
class LagrangeSet:
    mu: float
    points: list = field(default_factory=list)

    def __getitem__(self, i):
        """1-based access, ``ls[1]`` is L1."""
        return self.points[i - 1]

    @property
    def critical_values(self):
        return np.array([p.critical_value for p in self.points])

    @property
    def c1(self):
        return self.points[0].critical_value

    @property
    def l1(self):
        return self.points[0].q

    @property
    def d_moon(self):
        """Distance from the Moon to ``l1``."""
        return float(np.linalg.norm(self.points[0].q))

    @property
    def d_earth(self):
        return float(np.linalg.norm(self.points[0].q - np.array([1.0, 0.0, 0.0])))

    def to_dict(self):
        return {"mu": self.mu, "points": [p.to_dict() for p in self.points]}


def lagrange_set(mu):
    """Five Lagrange points ordered by critical value.

    The collinear point between the primaries is labelled 1; the others
    follow by increasing ``H``, ties broken by ``q1`` then by decreasing
    ``q2``.
    """
    mu = check_mu(mu)
    col = collinear_points(mu)
    tri = triangular_points(mu)
    between = [q for q in col if 0.0 < q[0] < 1.0]
    if len(between) != 1:
        raise LagrangeSolverError("no unique collinear point between the primaries")
    others = [q for q in col if not 0.0 < q[0] < 1.0] + list(tri)
    lifted = [(q, lift(q, mu)) for q in others]
    lifted.sort(key=lambda t: (float(eval_H(t[1], mu)), t[0][0], -t[0][1]))
    l1 = between[0]
    pts = [LagrangePoint(1, l1, lift(l1, mu), float(eval_H(lift(l1, mu), mu)))]
    for i, (q, z) in enumerate(lifted, start=2):
        pts.append(LagrangePoint(i, q, z, float(eval_H(z, mu))))
    for p in pts:
        if np.linalg.norm(grad_H(p.phase_point, mu)) > 1e-9:
            raise LagrangeSolverError(f"L{p.index} lift is not critical")
    return LagrangeSet(mu, pts)
