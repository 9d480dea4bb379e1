"""
Acceptance suite: one check per criterion, each with a runtime budget.

Run under pytest (a PASS/FAIL line per criterion is printed in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from crtbp_contact.connected_sum import (
    certify_connected_sum,
    find_Y_params,
    min_eig_Y_of_Q,
    quadratic_form_at_L1,
    separating_set_check,
)
from crtbp_contact.continuation import (
    continue_family,
    correct_periodic,
    kepler_seed,
    period_bound_check,
    rabinowitz_action,
    reeb_period,
)
from crtbp_contact.core import eval_H, eval_U, grad_H
from crtbp_contact.hill import circle_min_theta, sphere_min_U
from crtbp_contact.integrate import StepSpec, integrate_regularized, integrate_unregularized
from crtbp_contact.lagrange import lagrange_set
from crtbp_contact.moser import (
    certify_regularized,
    collision_states,
    eta_dot_grad_f,
    eval_f,
    eval_Q_reg,
    from_regularized,
    grad_Q_reg,
    regularized_to_state,
    state_to_regularized,
    to_regularized,
)
from crtbp_contact.transversality import (
    certify_component,
    d2U_drho2,
    dU_drho,
    momenta_on_shell,
)

# name, runtime budget in seconds
CRITERIA = {
    1: ("symmetric Lagrange point and c1 <= -3/2 sweep", 1.0),
    2: ("sphere minimum of U toward the Earth; circle minima at theta in {0, pi}", 30.0),
    3: ("dU/drho > 0 and d2U/drho2 + sin^2 phi <= 1e-10 on 1e6 points", 60.0),
    4: ("X(H) > 0 on Moon and Earth components at c1 - 0.1", 120.0),
    5: ("regularization chart round trips, f/eta bounds, X(Q) > 0", 120.0),
    6: ("regularized vs unregularized flow; collision transit", 60.0),
    7: ("connected-sum certificate and separating set", 300.0),
    8: ("no-blue-sky period bound and action = Reeb period", 300.0),
    9: ("gradients vs finite differences, energy drift, reversibility", 120.0),
}

RESULTS: dict[int, tuple[bool, float, str]] = {}


def _unit(rng, n):
    d = rng.standard_normal((n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _planar_orbit(r, sign, mu=0.5, c=-2.2):
    # start on the q1 axis with velocity along +-q2 at energy c
    q = np.array([r, 0.0, 0.0])
    v = np.sqrt(2.0 * (c - eval_U(q, mu)))
    return np.array([r, 0.0, 0.0, 0.0, (r - 1.0 + mu) + sign * v, 0.0])


def criterion_1():
    ls = lagrange_set(0.5)
    err_q = float(np.max(np.abs(ls.l1 - [0.5, 0.0, 0.0])))
    err_c = abs(ls.c1 + 2.0)
    mus = np.round(np.arange(0.01, 0.995, 0.01), 2)
    c1 = np.array([lagrange_set(m).c1 for m in mus])
    ok = err_q < 1e-10 and err_c < 1e-10 and bool(np.all(c1 <= -1.5))
    return ok, f"|l1-(1/2,0,0)|={err_q:.1e} |c1+2|={err_c:.1e} max c1 over {len(mus)} mu = {c1.max():.6f}"


def criterion_2():
    rng = np.random.default_rng(2)
    worst_sphere, worst_circle = 0.0, 0.0
    for _ in range(20):
        mu = rng.uniform(0.02, 0.98)
        rho = rng.uniform(0.05, 0.95) * lagrange_set(mu).d_moon
        theta, phi, _ = sphere_min_U(rho, mu)
        dth = min(theta, 2 * np.pi - theta)
        worst_sphere = max(worst_sphere, dth, abs(phi - np.pi / 2))
        for ph in np.linspace(0.1, np.pi - 0.1, 5):
            t = circle_min_theta(rho, ph, mu)
            worst_circle = max(worst_circle, min(t, abs(t - np.pi), 2 * np.pi - t))
    ok = worst_sphere < 1e-6 and worst_circle < 1e-6
    return ok, f"max angle error sphere={worst_sphere:.1e} circle={worst_circle:.1e} (20 pairs)"


def criterion_3():
    mus = [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99]
    n = -(-10**6 // len(mus))
    total, v1, v2, min1, max2 = 0, 0, 0, np.inf, -np.inf
    for k, mu in enumerate(mus):
        ls = lagrange_set(mu)
        rng = np.random.default_rng(30 + k)
        rho = ls.d_moon * np.cbrt(rng.random(n))
        d = _unit(rng, n)
        q = rho[:, None] * d
        keep = (rho > 0) & (np.linalg.norm(q - ls.l1, axis=1) > 0)
        rho, d = rho[keep], d[keep]
        phi = np.arccos(np.clip(d[:, 2], -1, 1))
        th = np.arctan2(d[:, 1], d[:, 0])
        a = dU_drho(rho, th, phi, mu)
        b = d2U_drho2(rho, th, phi, mu) + np.sin(phi) ** 2
        total += len(rho)
        v1 += int(np.sum(a <= 0))
        v2 += int(np.sum(b > 1e-10))
        min1, max2 = min(min1, a.min()), max(max2, b.max())
    ok = total >= 10**6 and v1 == 0 and v2 == 0
    return ok, f"{total} points: violations {v1}/{v2}, min dU/drho={min1:.2e}, max second={max2:.2f}"


def criterion_4():
    parts, ok = [], True
    for mu in (0.1, 0.5, 0.9):
        c = lagrange_set(mu).c1 - 0.1
        for comp in ("moon", "earth"):
            cert = certify_component(c, mu, comp, {"n_samples": 100_000, "seed": 4})
            ok &= cert.passed and cert.n_samples >= 90_000
            parts.append(f"{mu}/{comp}:{cert.min_margin:.3g}")
    return ok, "min X(H) " + " ".join(parts)


def criterion_5():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((100_000, 3)) * 3.0
    y = rng.standard_normal((100_000, 3))
    xi, eta = to_regularized(x, y)
    x2, y2 = from_regularized(xi, eta)
    rt = float(max(np.max(np.abs(x2 - x)), np.max(np.abs(y2 - y))))
    mu = 0.5
    c = lagrange_set(mu).c1 - 0.1
    cert = certify_regularized(c, mu, epsilon=0.05, n_samples=100_000, seed=5)
    e = cert.extra
    ok = (rt < 1e-12 and e["f_bound_violations"] == 0 and e["eta_bound_violations"] == 0
          and e["min_X_of_Q"] > 0 and cert.passed)
    return ok, (f"round trip {rt:.1e}; |f|<mu/2: {e['f_bound_violations']}, |eta|>2: "
                f"{e['eta_bound_violations']}; min X(Q)={e['min_X_of_Q']:.3g}")


def criterion_6():
    mu = 0.5
    y1 = _planar_orbit(0.2, -1)
    c = float(eval_H(y1, mu))
    xi, eta = state_to_regularized(y1, mu)
    reg = integrate_regularized(xi, eta, c, mu, 2.0, StepSpec(h=0.002))
    T = float(reg.t[-1])
    ref = integrate_unregularized(y1, mu, T, StepSpec(h=0.001), switch_radius=None)
    z = regularized_to_state(reg.final_state[:4], reg.final_state[4:], mu)
    arc = float(np.max(np.abs(z - ref.final_state)))

    xc, ec = collision_states(mu, 1, np.random.default_rng(6))
    back = integrate_regularized(xc[0], ec[0], -2.2, mu, 3.0, StepSpec(h=0.002), reverse=True)
    s0 = back.final_state
    tr = integrate_regularized(s0[:4], s0[4:], -2.2, mu, 6.0, StepSpec(h=0.002))
    xi0 = float(tr.states[:, 0].max())
    bound = float(np.abs(tr.states).max())
    ok = arc < 1e-6 and xi0 > 1 - 1e-6 and np.isfinite(bound) and bound < 1e3 and tr.drift < 1e-9
    return ok, (f"arc mismatch {arc:.1e} at t={T:.3f}; transit max xi0={xi0:.12f}, "
                f"max |state|={bound:.3g}, Q drift={tr.drift:.1e}")


def criterion_7():
    parts, ok = [], True
    for mu in (0.5, 0.1):
        Q = quadratic_form_at_L1(mu)
        params = find_Y_params(Q)
        eig = min_eig_Y_of_Q(Q, params)
        cert = certify_connected_sum(mu, n_samples=100_000, seed=7)
        eps = cert.extra["eps_E"]
        inside = lagrange_set(mu).c1 < cert.c < lagrange_set(mu).c1 + eps
        ok &= eig > 0 and cert.passed and inside and cert.n_samples >= 100_000
        parts.append(f"mu={mu}: eig={eig:.3f} eps_E={eps:.4f} Z(H) min={cert.min_margin:.2e}")
    sep = separating_set_check(0.0, 0.5, n_samples=1000)
    origin = float(np.max(np.abs(sep.samples)))
    ok &= sep.unique_point and sep.restricted_min_eig > 0 and origin < 1e-10
    parts.append(f"delta=0: restricted eig={sep.restricted_min_eig:.3f}, solutions |z|<={origin:.0e}")
    return ok, "; ".join(parts)


def criterion_8():
    mu = 0.5
    seed = correct_periodic(kepler_seed(mu, 0.1), mu)
    fam = continue_family(seed, -2.2, mu, steps=10)
    ok_bound, worst = period_bound_check(fam.r, fam.periods, fam.k)
    inside = bool(np.all(fam.energies < lagrange_set(mu).c1))
    errs = []
    for m in (fam.members[0], fam.members[len(fam.members) // 2], fam.members[-1]):
        errs.append(abs(abs(rabinowitz_action(m, mu).action) - reeb_period(m, mu)))
    err = max(errs)
    ok = ok_bound and inside and err < 1e-6
    return ok, (f"{len(fam.members)} members c {fam.c_start:.3f}->{fam.c_end:.3f}, k={fam.k:.4f}, "
                f"worst |dlog tau|/(k dr)={worst:.3f}; | |A| - Reeb period | <= {err:.1e}")


def _rel(fd, an):
    return np.linalg.norm(fd - an, axis=-1) / np.maximum(np.linalg.norm(an, axis=-1), 1.0)


def criterion_9():
    mu, n, h = 0.5, 10_000, 1e-6
    rng = np.random.default_rng(9)
    q = rng.uniform(-1.5, 2.5, (2 * n, 3)) * [1, 1, 0.5]
    far = (np.linalg.norm(q, axis=1) > 0.05) & (np.linalg.norm(q - [1, 0, 0], axis=1) > 0.05)
    q = q[far][:n]
    z = np.concatenate([q, rng.standard_normal((len(q), 3))], axis=1)
    fd = np.empty_like(z)
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        fd[:, i] = (eval_H(z + e, mu) - eval_H(z - e, mu)) / (2 * h)
    err_H = float(_rel(fd, grad_H(z, mu)).max())

    c = -2.2
    qm = rng.standard_normal((2 * n, 3)) * 0.15
    qm = qm[eval_U(qm, mu) < c][:n]
    st = np.concatenate([qm, momenta_on_shell(qm, c, mu, _unit(rng, len(qm)))], axis=1)
    xi, eta = state_to_regularized(st, mu)
    gx, ge = grad_Q_reg(xi, eta, c, mu)
    fdx, fde = np.empty_like(gx), np.empty_like(ge)
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fdx[:, i] = (eval_Q_reg(xi + e, eta, c, mu) - eval_Q_reg(xi - e, eta, c, mu)) / (2 * h)
        fde[:, i] = (eval_Q_reg(xi, eta + e, c, mu) - eval_Q_reg(xi, eta - e, c, mu)) / (2 * h)
    err_Q = float(_rel(np.hstack([fdx, fde]), np.hstack([gx, ge])).max())
    # directional derivative of f along eta
    fd_f = (eval_f(xi, eta * (1 + h), c, mu) - eval_f(xi, eta * (1 - h), c, mu)) / (2 * h)
    an_f = eta_dot_grad_f(xi, eta, c, mu)
    err_f = float((np.abs(fd_f - an_f) / np.maximum(np.abs(an_f), 1.0)).max())

    y0 = _planar_orbit(0.2, 1)
    drift = integrate_unregularized(y0, mu, 100.0, StepSpec(h=0.01)).drift
    y1 = y0 + np.array([0, 0, 0.01, 0, 0, 0.02])
    fwd = integrate_unregularized(y1, mu, 10.0)
    bwd = integrate_unregularized(fwd.final_state, mu, 10.0, reverse=True)
    rev = float(np.max(np.abs(bwd.final_state - y1)))
    npts = min(len(z), len(xi))
    ok = npts == n and max(err_H, err_Q, err_f) < 1e-6 and drift < 1e-9 and rev < 1e-9
    return ok, (f"rel FD error dH={err_H:.1e} dQ={err_Q:.1e} eta.df={err_f:.1e} "
                f"({len(z)}/{len(xi)} pts); drift(t=100)={drift:.1e}; reversibility={rev:.1e}")


def run_criterion(k):
    name, budget = CRITERIA[k]
    t0 = time.perf_counter()
    try:
        ok, detail = globals()[f"criterion_{k}"]()
    except Exception as exc:  # reported as a failure line, re-raised by the test
        ok, detail = False, f"error: {exc!r}"
    dt = time.perf_counter() - t0
    ok = bool(ok) and dt < budget
    RESULTS[k] = (ok, dt, detail)
    line = f"[{'PASS' if ok else 'FAIL'}] C{k} {name}: {detail} ({dt:.2f} s / budget {budget:g} s)"
    print(line)
    return ok, line


@pytest.mark.parametrize("k", sorted(CRITERIA), ids=[f"C{k}" for k in sorted(CRITERIA)])
def test_criterion(k):
    ok, line = run_criterion(k)
    assert ok, line


if __name__ == "__main__":
    import sys

    results = [run_criterion(k)[0] for k in sorted(CRITERIA)]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
