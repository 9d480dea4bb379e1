"""
Fixed-step Gauss-Legendre integration of the rotating-frame flow and of the
regularized flow on the cotangent bundle of the 3-sphere.

Gauss collocation is symmetric and symplectic and preserves quadratic first
integrals, so the constraints ``|xi|^2 = 1`` and ``<xi, eta> = 0`` of the
regularized chart are kept up to the stage-equation tolerance; states are
projected back after every step anyway and the projection size is recorded.

Stage equations are solved by fixed-point iteration; if that fails to
contract (stiff close approaches) a simplified Newton iteration takes over.

Vector fields follow the package convention ``i_X omega = dF`` (see
:mod:`crtbp_contact.core`).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import EARTH, check_mu, eval_H, grad_H, hessian_H, swap_primaries
from .moser import (
    CollisionChartPoint,
    chart_mu,
    constraint_residuals,
    energy_from_regularized,
    eval_f,
    eval_Q_reg,
    grad_Q_reg,
    project_to_constraints,
    regularized_to_state,
    state_to_regularized,
)

ROTATING = "rotating"
REG_CHARTS = {"moon": "regularized_moon", "earth": "regularized_earth"}


class ConvergenceError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def gauss_tableau(stages):
    """Butcher tableau ``(A, b, c)`` of the ``stages``-stage Gauss method (order ``2 stages``)."""
    x, w = np.polynomial.legendre.leggauss(stages)
    c = 0.5 * (x + 1.0)
    b = 0.5 * w
    k = np.arange(1, stages + 1)
    V = c[None, :] ** (k[:, None] - 1)  # V[k, j] = c_j^(k-1)
    R = c[:, None] ** k[None, :] / k[None, :]  # R[i, k] = c_i^k / k
    A = np.linalg.solve(V, R.T).T
    return A, b, c


@dataclass(frozen=True)
class StepSpec:
    h: float = 0.01
    order: int = 6
    tol: float = 1e-14
    max_iter: int = 100

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size must be positive")
        if self.order % 2 or self.order < 2:
            raise ValueError("Gauss order must be an even number >= 2")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")

    @property
    def stages(self):
        return self.order // 2


def _fd_jacobian(fun, y, eps=1e-7):
    n = len(y)
    J = np.empty((n, n))
    for i in range(n):
        d = np.zeros(n)
        d[i] = eps * max(1.0, abs(y[i]))
        J[:, i] = (fun(y + d) - fun(y - d)) / (2 * d[i])
    return J


def gauss_step(fun, y, h, spec: StepSpec, jac=None):
    """One Gauss-Legendre step of size ``h`` for ``y' = fun(y)``.

    ``fun`` must accept a batch of shape (s, n). Returns ``(y_new, iterations)``.
    """
    A, b, _ = gauss_tableau(spec.stages)
    s = len(b)
    F0 = fun(y[None, :])[0]
    Z = h * A.sum(axis=1)[:, None] * F0[None, :]
    scale = max(1.0, float(np.max(np.abs(y))))
    prev = np.inf
    stalls = 0
    for it in range(1, spec.max_iter + 1):
        Zn = h * (A @ fun(y[None, :] + Z))
        delta = float(np.max(np.abs(Zn - Z)))
        Z = Zn
        if delta <= spec.tol * scale:
            return y + h * (b @ fun(y[None, :] + Z)), it
        if delta >= prev:
            stalls += 1
            if delta < 1e-11 * scale and stalls >= 3:
                # rounding floor reached
                return y + h * (b @ fun(y[None, :] + Z)), it
            if stalls >= 3 or not np.isfinite(delta):
                break
        prev = delta
    return _gauss_step_newton(fun, y, h, spec, jac)


def _gauss_step_newton(fun, y, h, spec, jac=None):
    A, b, _ = gauss_tableau(spec.stages)
    s, n = len(b), len(y)
    J = jac(y) if jac is not None else _fd_jacobian(lambda v: fun(v[None, :])[0], y)
    M = np.eye(s * n) - h * np.kron(A, J)
    Z = np.zeros((s, n))
    scale = max(1.0, float(np.max(np.abs(y))))
    prev = np.inf
    for it in range(1, 4 * spec.max_iter + 1):
        G = Z - h * (A @ fun(y[None, :] + Z))
        dZ = np.linalg.solve(M, -G.ravel()).reshape(s, n)
        Z = Z + dZ
        delta = float(np.max(np.abs(dZ)))
        if delta <= spec.tol * scale or (delta >= prev and delta < 1e-11 * scale):
            return y + h * (b @ fun(y[None, :] + Z)), it
        if not np.isfinite(delta):
            break
        prev = delta
    raise ConvergenceError(f"Gauss stage equations did not converge (h={h})")


@dataclass
class Trajectory:
    """Time-ordered samples in one chart.

    ``t`` is physical time; for regularized charts ``s`` holds the
    regularized time. ``invariant`` is ``H`` (rotating) or ``Q``
    (regularized); ``residual`` is the larger constraint residual for
    regularized samples and zero otherwise.
    """

    t: np.ndarray
    states: np.ndarray
    chart: str
    mu: float
    invariant: np.ndarray
    residual: np.ndarray
    stop_reason: str = "t_final"
    s: np.ndarray | None = None
    projection: np.ndarray | None = None
    energy: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def drift(self):
        return float(np.max(np.abs(self.invariant - self.invariant[0])))

    @property
    def final_state(self):
        return self.states[-1]

    def __len__(self):
        return len(self.t)


def _run(fun, y0, h, n_steps, spec, events=(), post=None, jac=None):
    """Integrate ``n_steps`` steps; stop early at the first event crossing.

    Each event ``g`` is active while ``g(y) > 0`` and fires when it becomes
    ``<= 0``; the crossing is located by bisection on the step fraction.
    """
    ys = [np.array(y0, dtype=float)]
    taus = [0.0]
    proj = [0.0]
    stop = None
    y = ys[0]
    for k in range(n_steps):
        yn, _ = gauss_step(fun, y, h, spec, jac)
        pmag = 0.0
        if post is not None:
            yn, pmag = post(yn)
        fired = [(i, g) for i, (_, g) in enumerate(events) if g(yn) <= 0.0]
        if fired:
            best = None
            for i, g in fired:
                theta, yc, pm = _bisect_event(fun, y, h, spec, g, post, jac)
                if best is None or theta < best[0]:
                    best = (theta, yc, pm, events[i][0])
            theta, yn, pmag, stop = best
            ys.append(yn)
            taus.append((k + theta) * h)
            proj.append(pmag)
            break
        ys.append(yn)
        taus.append((k + 1) * h)
        proj.append(pmag)
        y = yn
    return np.array(ys), np.array(taus), np.array(proj), stop


def _bisect_event(fun, y, h, spec, g, post, jac, tol=1e-10):
    lo, hi = 0.0, 1.0
    best = None
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        ym, _ = gauss_step(fun, y, mid * h, spec, jac)
        pm = 0.0
        if post is not None:
            ym, pm = post(ym)
        gm = g(ym)
        if gm <= 0.0:
            hi, best = mid, (mid, ym, pm)
        else:
            lo = mid
        if abs(gm) < tol or (hi - lo) * abs(h) < 1e-15:
            break
    if best is None or best[0] != hi:
        ym, _ = gauss_step(fun, y, hi * h, spec, jac)
        pm = 0.0
        if post is not None:
            ym, pm = post(ym)
        best = (hi, ym, pm)
    return best


def _n_steps(span, h):
    n = int(np.ceil(span / h - 1e-12))
    return max(n, 1), span / max(n, 1)


def rotating_field(mu, reverse=False):
    sgn = -1.0 if reverse else 1.0

    def fun(Y):
        g = grad_H(Y, mu)
        out = np.empty_like(g)
        out[..., :3] = -sgn * g[..., 3:]
        out[..., 3:] = sgn * g[..., :3]
        return out

    def jac(y):
        Hs = hessian_H(y, mu)
        return sgn * np.concatenate([-Hs[3:], Hs[:3]], axis=0)

    return fun, jac


def integrate_unregularized(state0, mu, t_final, step_spec=StepSpec(), switch_radius=0.1,
                            reverse=False):
    """Integrate ``X_H`` (or ``-X_H`` with ``reverse``) from ``state0`` for time ``t_final``.

    The step is shrunk uniformly so that an integer number of steps lands
    on ``t_final``. Integration stops early when the distance to either
    primary drops to ``switch_radius`` (``None`` disables this), with
    ``stop_reason`` set to ``close_approach_moon`` or ``close_approach_earth``.
    """
    mu = check_mu(mu)
    if not t_final > 0:
        raise ValueError("t_final must be positive; use reverse=True to integrate backwards")
    y0 = np.asarray(state0, dtype=float)
    r0 = min(np.linalg.norm(y0[:3]), np.linalg.norm(y0[:3] - EARTH))
    if r0 == 0.0:
        raise ValueError("initial state sits on a primary")
    fun, jac = rotating_field(mu, reverse)
    n, h = _n_steps(t_final, step_spec.h)
    events = []
    if switch_radius is not None:
        if r0 <= switch_radius:
            raise ValueError("initial state is inside the switch radius; start in a regularized chart")
        events = [
            ("close_approach_moon", lambda y: np.linalg.norm(y[:3]) - switch_radius),
            ("close_approach_earth", lambda y: np.linalg.norm(y[:3] - EARTH) - switch_radius),
        ]
    ys, ts, _, stop = _run(fun, y0, h, n, step_spec, events, jac=jac)
    H = eval_H(ys, mu)
    return Trajectory(ts, ys, ROTATING, mu, H, np.zeros(len(ts)), stop or "t_final",
                      energy=float(H[0]))


def regularized_field(c, mu, reverse=False, with_time=True):
    """Dirac-constrained flow of ``Q`` on ``T*S^3`` plus physical time.

    ``V = X_Q + l1 (0, xi) + l2 (-xi, eta)`` with multipliers chosen so
    that ``V`` is tangent to ``|xi|^2 = const`` and ``<xi, eta> = 0``. The
    ninth component is ``dt/ds = |eta| f (1 - xi0) |eta|``, which on the
    level ``Q = mu^2/2`` equals ``mu |q - M|``.
    """
    sgn = -1.0 if reverse else 1.0

    def fun(Y):
        xi, eta = Y[..., :4], Y[..., 4:8]
        gx, ge = grad_Q_reg(xi, eta, c, mu)
        n2 = np.sum(xi * xi, axis=-1, keepdims=True)
        l2 = -np.sum(xi * ge, axis=-1, keepdims=True) / n2
        l1 = (np.sum(eta * ge, axis=-1, keepdims=True) - np.sum(xi * gx, axis=-1, keepdims=True)) / n2
        out = np.empty(Y.shape)
        out[..., :4] = sgn * (-ge - l2 * xi)
        out[..., 4:8] = sgn * (gx + l1 * xi + l2 * eta)
        if with_time:
            ne2 = np.sum(eta * eta, axis=-1)
            out[..., 8] = sgn * ne2 * eval_f(xi, eta, c, mu) * (1.0 - xi[..., 0])
        return out

    return fun


def _project_aug(y):
    xi, eta = project_to_constraints(y[:4], y[4:8])
    out = y.copy()
    out[:4], out[4:8] = xi, eta
    return out, float(np.max(np.abs(out - y)))


def integrate_regularized(xi0, eta0, c, mu, s_final, step_spec=StepSpec(h=0.005), chart="moon",
                          earth_radius=0.05, t_target=None, exit_radius=None, reverse=False):
    """Integrate the regularized flow for regularized time ``s_final``.

    Parameters
    ----------
    xi0, eta0 : array_like, shape (4,)
        Initial state in the chart of ``chart`` (Moon chart of the problem
        with ``mu``, or of ``1 - mu`` for the Earth chart).
    c : float
        Energy of the level.
    earth_radius : float or None
        Abort (``stop_reason = "earth_approach"``) when the other primary
        comes within this distance.
    t_target, exit_radius : float, optional
        Extra stop events: physical time reaching ``t_target``, or ``|q - M|``
        rising to ``exit_radius``.
    """
    mu = check_mu(mu)
    mu_c = chart_mu(mu, chart)
    if not s_final > 0:
        raise ValueError("s_final must be positive")
    xi0, eta0 = np.asarray(xi0, float), np.asarray(eta0, float)
    r1, r2 = constraint_residuals(xi0, eta0)
    if max(r1, r2) > 1e-10:
        raise ValueError(f"initial state violates the constraints (residuals {r1:.2e}, {r2:.2e})")
    fun = regularized_field(c, mu_c, reverse)
    y0 = np.concatenate([xi0, eta0, [0.0]])
    events = []
    if earth_radius is not None:
        def g_earth(y):
            om = 1.0 - y[0]
            w = om * y[5:8] + y[4] * y[1:4] - EARTH
            return np.linalg.norm(w) - earth_radius
        events.append(("earth_approach", g_earth))
    if t_target is not None:
        events.append(("t_target", lambda y: t_target - y[8]))
    if exit_radius is not None:
        events.append(("exit_radius", lambda y: exit_radius - (1.0 - y[0]) * np.linalg.norm(y[4:8])))
    n, h = _n_steps(s_final, step_spec.h)
    ys, ss, proj, stop = _run(fun, y0, h, n, step_spec, events, post=_project_aug)
    xi, eta = ys[:, :4], ys[:, 4:8]
    Q = eval_Q_reg(xi, eta, c, mu_c)
    res = np.maximum(*constraint_residuals(xi, eta))
    return Trajectory(ys[:, 8], ys[:, :8], REG_CHARTS[chart], mu, Q, res, stop or "s_final",
                      s=ss, projection=proj, energy=float(c))


def switch_chart(state, direction, mu, chart="moon", c=None):
    """Exact coordinate change between the rotating and a regularized chart.

    ``direction`` is ``"to_regularized"`` (6-vector in, 8-vector out) or
    ``"to_rotating"`` (8-vector in). Returns ``(new_state, energy)`` where
    the energy is ``H`` of the rotating state, reconstructed from the
    ``Q``-level when leaving a regularized chart.
    """
    mu = check_mu(mu)
    state = np.asarray(state, dtype=float)
    if direction == "to_regularized":
        if state.shape[-1] != 6:
            raise ValueError("rotating states have 6 components")
        xi, eta = state_to_regularized(state, mu, chart)
        return np.concatenate([xi, eta], axis=-1), float(eval_H(state, mu))
    if direction == "to_rotating":
        if state.shape[-1] != 8:
            raise ValueError("regularized states have 8 components")
        xi, eta = state[..., :4], state[..., 4:]
        if np.any(xi[..., 0] >= 1.0):
            raise CollisionChartPoint("cannot switch charts on the collision fibre")
        out = regularized_to_state(xi, eta, mu, chart)
        energy = float(energy_from_regularized(xi, eta, chart_mu(mu, chart)))
        return out, energy
    raise ValueError("direction must be 'to_regularized' or 'to_rotating'")


def integrate_with_switching(state0, mu, t_final, step_spec=StepSpec(), reg_step_spec=StepSpec(h=0.005),
                             switch_radius=0.1, exit_factor=1.5, max_segments=1000):
    """Rotating-frame integration that hands close approaches to a regularized chart.

    Returns
    -------
    list of Trajectory
        Segments in time order; physical time is continuous across them.
    """
    mu = check_mu(mu)
    segs = []
    t0 = 0.0
    state = np.asarray(state0, dtype=float)
    c = float(eval_H(state, mu))
    for _ in range(max_segments):
        seg = integrate_unregularized(state, mu, t_final - t0, step_spec, switch_radius)
        seg.t = seg.t + t0
        segs.append(seg)
        t0 = float(seg.t[-1])
        if seg.stop_reason == "t_final":
            return segs
        chart = "moon" if seg.stop_reason == "close_approach_moon" else "earth"
        reg, _ = switch_chart(seg.final_state, "to_regularized", mu, chart)
        mu_c = chart_mu(mu, chart)
        # generous regularized-time budget; the exit or time event ends the segment first
        s_budget = 100.0 * switch_radius / max(mu_c, 1e-3) + 100.0
        rseg = integrate_regularized(reg[:4], reg[4:], c, mu, s_budget, reg_step_spec, chart,
                                     earth_radius=None, t_target=t_final - t0,
                                     exit_radius=exit_factor * switch_radius)
        rseg.t = rseg.t + t0
        segs.append(rseg)
        t0 = float(rseg.t[-1])
        if rseg.stop_reason != "exit_radius":
            return segs
        state, _ = switch_chart(rseg.final_state, "to_rotating", mu, chart)
    raise RuntimeError("too many chart switches")


ROT_COLUMNS = ["q1", "q2", "q3", "p1", "p2", "p3"]
REG_COLUMNS = ["xi0", "xi1", "xi2", "xi3", "eta0", "eta1", "eta2", "eta3"]


def write_trajectory_csv(path_or_file, segments, precision=17):
    """Trajectory table ``t, chart, <state columns>, invariant, residual``.

    Single-chart trajectories get that chart's columns; mixed segment lists
    get both column sets with the unused ones left empty.
    """
    if isinstance(segments, Trajectory):
        segments = [segments]
    kinds = {ROTATING if s.chart == ROTATING else "reg" for s in segments}
    cols = (ROT_COLUMNS if ROTATING in kinds else []) + (REG_COLUMNS if "reg" in kinds else [])
    fmt = lambda v: format(float(v), f".{precision}g")
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "chart"] + cols + ["invariant", "residual"])
        for seg in segments:
            names = ROT_COLUMNS if seg.chart == ROTATING else REG_COLUMNS
            for i in range(len(seg)):
                vals = dict(zip(names, seg.states[i]))
                w.writerow([fmt(seg.t[i]), seg.chart] + [fmt(vals[k]) if k in vals else "" for k in cols]
                           + [fmt(seg.invariant[i]), fmt(seg.residual[i])])
    finally:
        if own:
            fh.close()


def trajectory_csv_string(segments):
    buf = io.StringIO()
    write_trajectory_csv(buf, segments)
    return buf.getvalue()
