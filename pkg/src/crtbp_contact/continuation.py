"""
Periodic orbits of the rotating-frame flow: differential correction,
pseudo-arclength continuation in energy, Rabinowitz action and a monitor for
unbounded period growth along a family.

The corrector uses multiple shooting with the period as an unknown, a
phase condition orthogonal to the flow at an anchor point, and the energy
constraint ``H(z0) = c``. Since energy is conserved the system has one
redundant equation and Newton steps are taken in the least-squares sense.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core import EARTH, check_mu, eval_H, grad_H, hamiltonian_vector_field, hessian_H
from .integrate import StepSpec, gauss_step, rotating_field
from .transversality import X_earth_of_H, X_of_H


class CorrectionError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass
class PeriodicOrbit:
    state: np.ndarray
    period: float
    residual: float
    c: float
    mu: float

    @property
    def planar(self):
        return bool(self.state[2] == 0.0 and self.state[5] == 0.0)

    def to_dict(self):
        return {
            "state": [float(v) for v in self.state],
            "period": float(self.period),
            "residual": float(self.residual),
            "c": float(self.c),
            "mu": float(self.mu),
        }


def kepler_seed(mu, r, retrograde=True):
    """Near-circular planar orbit of radius ``r`` about the Moon.

    Uses the two-body angular rate ``w = sqrt(mu / r^3)``; in the rotating
    frame the orbit turns at ``w + 1`` (retrograde) or ``w - 1`` and the
    period guess is ``2 pi / (w +- 1)``.
    """
    mu = check_mu(mu)
    w = np.sqrt(mu / r**3)
    rate = w + 1.0 if retrograde else w - 1.0
    q = np.array([r, 0.0, 0.0])
    v = -r * rate if retrograde else r * rate
    # physical velocity p + A(q); A_2 = -(q1 - 1 + mu)
    p = np.array([0.0, (r - 1.0 + mu) + v, 0.0])
    state = np.concatenate([q, p])
    return PeriodicOrbit(state, 2.0 * np.pi / abs(rate), np.inf, float(eval_H(state, mu)), mu)


def _variational_field(mu):
    fun, _ = rotating_field(mu)

    def aug(Y):
        z = Y[:, :6]
        Phi = Y[:, 6:].reshape(-1, 6, 6)
        Hs = hessian_H(z, mu)
        DF = np.concatenate([-Hs[:, 3:], Hs[:, :3]], axis=1)
        out = np.empty_like(Y)
        out[:, :6] = fun(z)
        out[:, 6:] = (DF @ Phi).reshape(len(Y), 36)
        return out

    return aug


def flow(z0, mu, t, n_steps, spec=StepSpec(), stm=False):
    """Gauss flow map over time ``t`` in ``n_steps`` equal steps; optionally with the STM."""
    h = t / n_steps
    if stm:
        fun = _variational_field(mu)
        y = np.concatenate([z0, np.eye(6).ravel()])
    else:
        fun, _ = rotating_field(mu)
        y = np.asarray(z0, dtype=float).copy()
    for _ in range(n_steps):
        y, _ = gauss_step(fun, y, h, spec)
    if stm:
        return y[:6], y[6:].reshape(6, 6)
    return y


def sample_orbit(z0, mu, t, n_steps, spec=StepSpec()):
    """States at ``n_steps + 1`` equally spaced times over ``[0, t]``."""
    fun, _ = rotating_field(mu)
    h = t / n_steps
    out = np.empty((n_steps + 1, 6))
    out[0] = z0
    for i in range(n_steps):
        out[i + 1], _ = gauss_step(fun, out[i], h, spec)
    return out


@dataclass
class ShootingConfig:
    n_segments: int = 4
    steps_per_segment: int = 128
    tol: float = 1e-11
    max_iter: int = 30
    spec: StepSpec = field(default_factory=StepSpec)


def _shooting_system(nodes, T, c, mu, cfg, anchor, free_c, arc=None, active=None):
    """Residual vector and Jacobian for the multiple-shooting problem.

    Unknowns are ``nodes.ravel(), T`` and (if ``free_c``) ``c``.
    """
    m = cfg.n_segments
    n_unk = 6 * m + 1 + (1 if free_c else 0)
    J = np.zeros((6 * m + 2 + (1 if arc is not None else 0), n_unk))
    R = np.zeros(J.shape[0])
    dt = T / m
    for i in range(m):
        zi, Phi = flow(nodes[i], mu, dt, cfg.steps_per_segment, cfg.spec, stm=True)
        j = (i + 1) % m
        R[6 * i:6 * i + 6] = zi - nodes[j]
        J[6 * i:6 * i + 6, 6 * i:6 * i + 6] = Phi
        J[6 * i:6 * i + 6, 6 * j:6 * j + 6] -= np.eye(6)
        J[6 * i:6 * i + 6, 6 * m] = hamiltonian_vector_field(zi, mu) / m
    za, Fa = anchor
    R[6 * m] = np.dot(nodes[0] - za, Fa)
    J[6 * m, :6] = Fa
    R[6 * m + 1] = eval_H(nodes[0], mu) - c
    J[6 * m + 1, :6] = grad_H(nodes[0], mu)
    if free_c:
        J[6 * m + 1, 6 * m + 1] = -1.0
    if arc is not None:
        u_prev, tangent, ds = arc
        u = np.concatenate([nodes[0], [T, c]])
        R[-1] = np.dot(u - u_prev, tangent) - ds
        J[-1, :6] = tangent[:6]
        J[-1, 6 * m] = tangent[6]
        J[-1, 6 * m + 1] = tangent[7]
    if active is not None:
        J = J * active[None, :]
    return R, J


def _active_mask(planar, m, free_c):
    mask = np.ones(6 * m + 1 + (1 if free_c else 0))
    if planar:
        for i in range(m):
            mask[6 * i + 2] = 0.0
            mask[6 * i + 5] = 0.0
    return mask


def _initial_nodes(z0, T, mu, cfg):
    nodes = [np.asarray(z0, dtype=float)]
    for _ in range(cfg.n_segments - 1):
        nodes.append(flow(nodes[-1], mu, T / cfg.n_segments, cfg.steps_per_segment, cfg.spec))
    return np.array(nodes)


def _newton(nodes, T, c, mu, cfg, anchor, free_c, arc=None):
    planar = bool(np.all(nodes[:, 2] == 0.0) and np.all(nodes[:, 5] == 0.0))
    mask = _active_mask(planar, cfg.n_segments, free_c)
    history = []
    m = cfg.n_segments
    for it in range(cfg.max_iter):
        R, J = _shooting_system(nodes, T, c, mu, cfg, anchor, free_c, arc, mask)
        res = float(np.max(np.abs(R)))
        history.append(res)
        if res < cfg.tol:
            return nodes, T, c, history
        dx = np.linalg.lstsq(J, -R, rcond=None)[0] * mask
        nodes = nodes + dx[:6 * m].reshape(m, 6)
        T = T + dx[6 * m]
        if free_c:
            c = c + dx[6 * m + 1]
        if not np.isfinite(res) or T <= 0:
            break
    raise CorrectionError(f"periodic-orbit Newton did not converge; residuals {history}", history)


def closure_residual(z0, T, mu, cfg):
    zT = flow(z0, mu, T, cfg.n_segments * cfg.steps_per_segment, cfg.spec)
    return float(np.linalg.norm(zT - z0))


def correct_periodic(guess, mu, c=None, cfg=None, anchor=None):
    """Differential correction of a periodic-orbit guess.

    Parameters
    ----------
    guess : PeriodicOrbit or (state, period)
    c : float, optional
        Target energy; defaults to ``H(guess.state)``.
    anchor : (state, field), optional
        Phase-condition anchor; defaults to the guess state and the flow
        direction there.

    Returns
    -------
    PeriodicOrbit
        ``residual`` is ``|phi_T(z0) - z0|`` over one full period.
    """
    mu = check_mu(mu)
    cfg = cfg or ShootingConfig()
    z0, T = (guess.state, guess.period) if isinstance(guess, PeriodicOrbit) else guess
    z0 = np.asarray(z0, dtype=float)
    c = float(eval_H(z0, mu)) if c is None else float(c)
    anchor = anchor or (z0.copy(), hamiltonian_vector_field(z0, mu))
    nodes = _initial_nodes(z0, T, mu, cfg)
    nodes, T, c, _ = _newton(nodes, float(T), c, mu, cfg, anchor, free_c=False)
    return PeriodicOrbit(nodes[0], float(T), closure_residual(nodes[0], T, mu, cfg), c, mu)


def _tangent(nodes, T, c, mu, cfg, prev=None, direction=1.0):
    anchor = (nodes[0].copy(), hamiltonian_vector_field(nodes[0], mu))
    planar = bool(np.all(nodes[:, 2] == 0.0) and np.all(nodes[:, 5] == 0.0))
    mask = _active_mask(planar, cfg.n_segments, True)
    _, J = _shooting_system(nodes, T, c, mu, cfg, anchor, True, None, mask)
    # drop the null directions that the planar mask introduces
    cols = np.nonzero(mask)[0]
    _, _, Vt = np.linalg.svd(J[:, cols])
    v = np.zeros(J.shape[1])
    v[cols] = Vt[-1]
    m = cfg.n_segments
    t = np.concatenate([v[:6], [v[6 * m], v[6 * m + 1]]])
    t /= np.linalg.norm(t)
    if prev is not None:
        if np.dot(t, prev) < 0:
            t = -t
    elif np.sign(t[7]) != np.sign(direction):
        t = -t
    return t


@dataclass
class OrbitFamily:
    mu: float
    c_start: float
    c_end: float
    members: list
    tangents: list
    k_local: np.ndarray
    k: float
    actions: np.ndarray
    lengths: np.ndarray
    folds: list = field(default_factory=list)

    @property
    def r(self):
        return np.array([(m.c - self.c_start) / (self.c_end - self.c_start) for m in self.members])

    @property
    def periods(self):
        return np.array([m.period for m in self.members])

    @property
    def energies(self):
        return np.array([m.c for m in self.members])

    @property
    def residuals(self):
        return np.array([m.residual for m in self.members])


def period_bound_check(r, periods, k):
    """Two-sided estimate ``e^{-k dr} tau < tau' < e^{k dr} tau`` for adjacent members.

    Returns
    -------
    ok : bool
    worst : float
        Largest ``|d log tau| / (k |dr|)``; the estimate holds iff ``< 1``.
    """
    r = np.asarray(r, dtype=float)
    lt = np.log(np.asarray(periods, dtype=float))
    dr = np.abs(np.diff(r))
    dl = np.abs(np.diff(lt))
    ratio = dl / (k * dr)
    lower = np.exp(-k * dr) * np.exp(lt[:-1]) < np.exp(lt[1:])
    upper = np.exp(lt[1:]) < np.exp(k * dr) * np.exp(lt[:-1])
    return bool(np.all(lower & upper)), float(np.max(ratio)) if len(ratio) else 0.0


def continue_family(seed, energy_target, mu, steps=20, cfg=None, component="moon",
                    action_steps=None):
    """Pseudo-arclength continuation of a periodic orbit in energy.

    Parameters
    ----------
    seed : PeriodicOrbit
        Corrected starting orbit; its energy is ``c_start``.
    energy_target : float
        The family is continued until its energy reaches this value; the
        last member is corrected at exactly ``energy_target``.
    steps : int
        Nominal number of continuation steps; the arclength step is chosen
        so that each step moves the energy by about
        ``(energy_target - c_start) / steps``.

    Returns
    -------
    OrbitFamily
        ``k_local`` is ``|d log tau / dr|`` from each member's tangent and
        ``k`` its maximum; ``folds`` lists member indices where the energy
        direction reverses.
    """
    mu = check_mu(mu)
    cfg = cfg or ShootingConfig()
    c0 = seed.c
    span = energy_target - c0
    if span == 0:
        raise ValueError("energy_target equals the seed energy")
    dc = span / steps
    nodes = _initial_nodes(seed.state, seed.period, mu, cfg)
    T, c = seed.period, c0
    members = [seed]
    tangents = [_tangent(nodes, T, c, mu, cfg, direction=np.sign(span))]
    folds = []
    for _ in range(50 * steps):
        t = tangents[-1]
        remaining = energy_target - c
        last = abs(remaining) <= 1.5 * abs(dc)
        u_prev = np.concatenate([nodes[0], [T, c]])
        ds = abs(dc) / max(abs(t[7]), 1e-3)
        pred_nodes = _initial_nodes(nodes[0] + ds * t[:6], T + ds * t[6], mu, cfg)
        pred_T = T + ds * t[6]
        pred_c = c + ds * t[7]
        anchor = (pred_nodes[0].copy(), hamiltonian_vector_field(pred_nodes[0], mu))
        if last:
            n2, T2, c2, _ = _newton(pred_nodes, pred_T, energy_target, mu, cfg, anchor, free_c=False)
        else:
            n2, T2, c2, _ = _newton(pred_nodes, pred_T, pred_c, mu, cfg, anchor, free_c=True,
                                    arc=(u_prev, t, ds))
        nodes, T, c = n2, T2, c2
        members.append(PeriodicOrbit(nodes[0], float(T), closure_residual(nodes[0], T, mu, cfg),
                                     float(c), mu))
        tangents.append(_tangent(nodes, T, c, mu, cfg, prev=t))
        if np.sign(tangents[-1][7]) != np.sign(t[7]):
            folds.append(len(members) - 1)
        if last:
            break
    else:
        raise CorrectionError("continuation did not reach the energy target")
    k_local = np.array([abs(span * tg[6] / (m.period * tg[7])) for m, tg in zip(members, tangents)])
    actions, lengths = [], []
    for m in members:
        a = rabinowitz_action(m, mu, component=component, n_steps=action_steps)
        actions.append(a.action)
        lengths.append(a.length)
    return OrbitFamily(mu, c0, float(energy_target), members, tangents, k_local,
                       float(np.max(k_local)), np.array(actions), np.array(lengths), folds)


@dataclass
class ActionResult:
    action: float
    integrand: np.ndarray
    integrand_direct: np.ndarray
    times: np.ndarray
    length: float


def _liouville_margin(states, mu, component):
    return X_of_H(states, mu) if component == "moon" else X_earth_of_H(states, mu)


def rabinowitz_action(orbit: PeriodicOrbit, mu, component="moon", n_steps=None, spec=StepSpec()):
    """Action ``A = int_0^tau lambda(gamma') dt`` on the shell ``H = c``.

    ``lambda = -(q - P) . dp`` with ``P`` the primary of ``component``. The
    integrand is evaluated both directly from the velocity and as
    ``-dH(X)`` for the radial field ``X``; the periodic trapezoidal rule is
    used for the integral and for the orbit length ``int |q'| dt``.
    """
    mu = check_mu(mu)
    if n_steps is None:
        n_steps = max(512, int(np.ceil(orbit.period / 0.002)))
    z = sample_orbit(orbit.state, mu, orbit.period, n_steps, spec)[:-1]
    centre = np.zeros(3) if component == "moon" else EARTH
    v = hamiltonian_vector_field(z, mu)
    direct = -np.sum((z[:, :3] - centre) * v[:, 3:], axis=1)
    via_X = -_liouville_margin(z, mu, component)
    h = orbit.period / n_steps
    times = h * np.arange(n_steps)
    length = h * float(np.sum(np.linalg.norm(v[:, :3], axis=1)))
    return ActionResult(h * float(np.sum(direct)), direct, via_X, times, length)


def reeb_period(orbit: PeriodicOrbit, mu, component="moon", rtol=1e-12, atol=1e-12):
    """Return time of ``X_H / |lambda(X_H)|`` to the section through ``orbit.state``.

    Integrated with an explicit Runge-Kutta method (DOP853), independent of
    the Gauss integrator used to find the orbit. The section is the
    hyperplane through the start point orthogonal to ``X_H`` there.
    """
    mu = check_mu(mu)
    z0 = np.asarray(orbit.state, dtype=float)
    F0 = hamiltonian_vector_field(z0, mu)

    def rhs(_, z):
        F = hamiltonian_vector_field(z, mu)
        return F / abs(float(_liouville_margin(z, mu, component)))

    # the section is ignored early on so the start point does not trigger it
    samples = sample_orbit(z0, mu, orbit.period, 64)
    margins = np.abs(_liouville_margin(samples, mu, component))
    guard = 0.5 * orbit.period * float(np.min(margins))

    def section(s, z):
        return float(np.dot(z - z0, F0)) if s > guard else 1.0

    section.direction = 1.0
    section.terminal = True
    est = orbit.period * float(np.max(margins))
    sol = solve_ivp(rhs, (0.0, 3.0 * est + 1.0), z0, method="DOP853", rtol=rtol, atol=atol,
                    events=section)
    if not len(sol.t_events[0]):
        raise RuntimeError("Reeb flow did not return to the section")
    return float(sol.t_events[0][0])


@dataclass
class BlueSkyReport:
    flagged: bool
    max_period_ratio: float
    max_length_ratio: float | None
    max_speed_ratio: float | None
    first_flag_index: int | None
    period_factor: float
    length_factor: float

    def to_dict(self):
        return dict(self.__dict__)


def blue_sky_monitor(family, period_factor=10.0, length_factor=10.0):
    """Flag a family whose period or length grows beyond the given factors.

    ``family`` is an :class:`OrbitFamily` or any object with ``periods`` and
    optionally ``lengths`` arrays ordered along the family. Ratios are taken
    against the first member.
    """
    periods = np.asarray(family.periods, dtype=float)
    if len(periods) == 0:
        raise ValueError("empty family")
    lengths = getattr(family, "lengths", None)
    pr = periods / periods[0]
    flags = pr > period_factor
    lr = sr = None
    if lengths is not None:
        lengths = np.asarray(lengths, dtype=float)
        lr_arr = lengths / lengths[0]
        flags |= lr_arr > length_factor
        lr = float(np.max(lr_arr))
        # mean speed length / period stays bounded on a compact level set
        sp = (lengths / periods) / (lengths[0] / periods[0])
        sr = float(np.max(sp))
    idx = np.nonzero(flags)[0]
    return BlueSkyReport(bool(len(idx)), float(np.max(pr)), lr, sr,
                         int(idx[0]) if len(idx) else None, period_factor, length_factor)


FAMILY_COLUMNS = ["r", "c", "tau", "action", "residual", "k_local"]


def write_family_csv(path_or_file, family: OrbitFamily, precision=17):
    fmt = lambda v: format(float(v), f".{precision}g")
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FAMILY_COLUMNS)
        for row in zip(family.r, family.energies, family.periods, family.actions,
                       family.residuals, family.k_local):
            w.writerow([fmt(v) for v in row])
    finally:
        if own:
            fh.close()


def family_summary(family: OrbitFamily, monitor: BlueSkyReport | None = None):
    ok, worst = period_bound_check(family.r, family.periods, family.k)
    monitor = monitor or blue_sky_monitor(family)
    return {
        "mu": family.mu,
        "c_start": family.c_start,
        "c_end": family.c_end,
        "n_members": len(family.members),
        "k": family.k,
        "bound_check": ok,
        "bound_worst_ratio": worst,
        "folds": list(family.folds),
        "max_residual": float(np.max(family.residuals)),
        "blue_sky": monitor.to_dict(),
    }
