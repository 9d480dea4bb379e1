"""
Command-line front end.

Every command accepts ``--config FILE`` with flat ``key=value`` lines
(``#`` starts a comment, keys are flag names with ``-`` or ``_``). Values
from the file are applied first and explicit flags override them. Outputs
begin with a provenance header: a ``header`` object in JSON documents, or
``# key=value`` comment lines ahead of the CSV header row.

Exit status is 0 on success or PASS, 1 on FAIL or solver error and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import jsonschema
import numpy as np

from . import __version__
from .connected_sum import CutoffSpec, certify_connected_sum, certify_glued
from .continuation import (
    ShootingConfig,
    blue_sky_monitor,
    continue_family,
    correct_periodic,
    family_summary,
    kepler_seed,
    write_family_csv,
)
from .core import check_mu
from .hill import component_grid, write_component_csv
from .integrate import StepSpec, integrate_with_switching, write_trajectory_csv
from .lagrange import lagrange_set
from .moser import certify_regularized
from .schemas import SCHEMAS


class UsageError(Exception):
    pass


def _add_common(p, energy=True, samples=False, seed=False):
    p.add_argument("--mu", type=float, required=False, help="mass ratio in (0, 1)")
    if energy:
        p.add_argument("--energy", type=float, help="energy level c")
    if samples:
        p.add_argument("--samples", type=int, default=100_000)
    if seed:
        p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--config", help="key=value file; flags override it")


def build_parser():
    parser = argparse.ArgumentParser(prog="crtbp-contact", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lagrange", help="Lagrange points and critical values (JSON)")
    _add_common(p, energy=False)

    p = sub.add_parser("hill", help="Hill-region component grid (CSV)")
    _add_common(p)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--include-forbidden", action="store_true")

    p = sub.add_parser("certify", help="contact-type certificate (JSON)")
    _add_common(p, samples=True, seed=True)
    p.add_argument("--epsilon", type=float, default=0.05, help="regularized-chart radius below c1")
    p.add_argument("--component", choices=["moon", "earth", "both"], default="both")
    p.add_argument("--s0", type=float, default=0.02)
    p.add_argument("--s1", type=float, default=0.06)
    p.add_argument("--find-window", action="store_true",
                   help="above c1: bisect for the energy window and certify inside it")

    p = sub.add_parser("integrate", help="trajectory with chart switching (CSV)")
    _add_common(p, energy=False)
    p.add_argument("--state", required=False, help="six comma-separated values q1,q2,q3,p1,p2,p3")
    p.add_argument("--t-final", type=float, default=10.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--reg-step", type=float, default=0.005)
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--switch-radius", type=float, default=0.1,
                   help="distance to a primary at which the regularized chart takes over")

    p = sub.add_parser("continue", help="periodic-orbit family (CSV) and summary (JSON)")
    _add_common(p)
    p.add_argument("--radius", type=float, default=0.1, help="Kepler seed radius about the Moon")
    p.add_argument("--prograde", action="store_true")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--summary", default="-", help="summary JSON path, '-' for stdout")
    p.add_argument("--period-factor", type=float, default=10.0)
    p.add_argument("--length-factor", type=float, default=10.0)
    return parser


def _read_config(path, subparser):
    """Translate a key=value file into argv tokens for ``subparser``."""
    known = {}
    for action in subparser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                known[opt[2:].replace("-", "_")] = action
    tokens = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path!r}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            norm = key.replace("-", "_")
            if norm not in known or norm == "config":
                raise UsageError(f"config line {lineno}: unknown key {key!r}")
            action = known[norm]
            flag = action.option_strings[-1]
            if action.nargs == 0:
                if value.lower() in ("1", "true", "yes", "on"):
                    tokens.append(flag)
                elif value.lower() not in ("0", "false", "no", "off"):
                    raise UsageError(f"config line {lineno}: {key!r} expects a boolean")
            else:
                tokens.extend([flag, value])
    return tokens


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        try:
            tokens = _read_config(args.config, sub)
        except UsageError as exc:
            parser.error(str(exc))
        idx = argv.index(args.command)
        args = parser.parse_args(argv[: idx + 1] + tokens + argv[idx + 1:])
    if args.mu is None:
        parser.error("--mu is required (flag or config key)")
    try:
        check_mu(args.mu)
    except ValueError as exc:
        parser.error(str(exc))
    for name in ("samples", "resolution", "steps"):
        if getattr(args, name, 1) is not None and getattr(args, name, 1) <= 0:
            parser.error(f"--{name} must be positive")
    for name in ("epsilon", "t_final", "step", "reg_step", "switch_radius", "radius"):
        v = getattr(args, name, None)
        if v is not None and not v > 0:
            parser.error(f"--{name.replace('_', '-')} must be positive")
    return parser, args


def _header(args, c=None, tolerances=None):
    return {
        "tool": "crtbp_contact",
        "version": __version__,
        "command": args.command,
        "mu": float(args.mu),
        "c": None if c is None else float(c),
        "seed": getattr(args, "seed", None),
        "tolerances": dict(tolerances or {}),
    }


def _emit_json(doc, schema, out):
    doc = _plain(doc)
    jsonschema.validate(doc, SCHEMAS[schema])
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    _write(text, out)


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float) and not np.isfinite(o):
        return None
    return o


def _write(text, out):
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _csv_header(header):
    lines = []
    for k, v in header.items():
        lines.append(f"# {k}={json.dumps(v, sort_keys=True)}")
    return "\n".join(lines) + "\n"


def _emit_csv(header, writer, out):
    import io

    buf = io.StringIO()
    writer(buf)
    _write(_csv_header(header) + buf.getvalue(), out)


def cmd_lagrange(args):
    ls = lagrange_set(args.mu)
    doc = {"header": _header(args, tolerances={"axis_root": 1e-12, "critical_gradient": 1e-9}),
           "c1": ls.c1, "points": ls.to_dict()["points"]}
    _emit_json(doc, "lagrange", args.out)
    return 0


def _require_energy(parser, args):
    if args.energy is None:
        parser.error("--energy is required for this command")


def cmd_hill(parser, args):
    _require_energy(parser, args)
    axes, labels = component_grid(args.energy, args.mu, resolution=args.resolution)
    header = _header(args, args.energy, {"flood_fill_cell": float(axes[0][1] - axes[0][0])})
    _emit_csv(header, lambda fh: write_component_csv(fh, axes, labels, args.include_forbidden), args.out)
    return 0


def cmd_certify(parser, args):
    _require_energy(parser, args)
    ls = lagrange_set(args.mu)
    c = args.energy
    if c == ls.c1:
        parser.error(f"energy equals c1 = {ls.c1!r}; the critical level is excluded")
    certs = []
    if c < ls.c1:
        regime = "regularized"
        comps = ["moon", "earth"] if args.component == "both" else [args.component]
        for comp in comps:
            certs.append(certify_regularized(c, args.mu, args.epsilon, args.samples, args.seed,
                                             component=comp, lset=ls))
        tol = {"epsilon": args.epsilon}
    else:
        regime = "glued"
        spec = CutoffSpec(args.s0, args.s1)
        if args.find_window:
            cert = certify_connected_sum(args.mu, spec, n_samples=args.samples, seed=args.seed)
        else:
            cert = certify_glued(c, args.mu, cutoff_spec=spec, n_samples=args.samples,
                                 seed=args.seed, lset=ls)
        certs.append(cert)
        tol = {"s0": args.s0, "s1": args.s1}
    ok = all(cert.passed for cert in certs)
    doc = {"header": _header(args, c, tol), "regime": regime,
           "certificates": [_plain(cert.to_dict()) for cert in certs], "pass": ok}
    _emit_json(doc, "certify", args.out)
    return 0 if ok else 1


def cmd_integrate(parser, args):
    if args.state is None:
        parser.error("--state is required for integrate")
    try:
        state = np.array([float(v) for v in args.state.split(",")])
    except ValueError:
        parser.error("--state must be six comma-separated numbers")
    if state.shape != (6,):
        parser.error("--state must have six components")
    segs = integrate_with_switching(state, args.mu, args.t_final, StepSpec(h=args.step, order=args.order),
                                    StepSpec(h=args.reg_step, order=args.order), args.switch_radius)
    drift = max(s.drift for s in segs)
    header = _header(args, float(segs[0].invariant[0]),
                     {"stage_tol": 1e-14, "step": args.step, "reg_step": args.reg_step})
    header["stop_reason"] = segs[-1].stop_reason
    header["max_invariant_drift"] = drift
    _emit_csv(header, lambda fh: write_trajectory_csv(fh, segs), args.out)
    return 0


def cmd_continue(parser, args):
    _require_energy(parser, args)
    ls = lagrange_set(args.mu)
    seed = correct_periodic(kepler_seed(args.mu, args.radius, retrograde=not args.prograde), args.mu)
    if (seed.c - ls.c1) * (args.energy - ls.c1) < 0:
        parser.error("the energy window between the seed and --energy contains c1")
    fam = continue_family(seed, args.energy, args.mu, steps=args.steps, cfg=ShootingConfig())
    monitor = blue_sky_monitor(fam, args.period_factor, args.length_factor)
    summary = family_summary(fam, monitor)
    header = _header(args, args.energy, {"newton": ShootingConfig().tol, "stage_tol": 1e-14})
    _emit_csv(header, lambda fh: write_family_csv(fh, fam), args.out)
    _emit_json({"header": header, "summary": summary}, "continue", args.summary)
    return 0 if summary["bound_check"] and not monitor.flagged else 1


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, args = parse_args(argv)
    try:
        if args.command == "lagrange":
            return cmd_lagrange(args)
        if args.command == "hill":
            return cmd_hill(parser, args)
        if args.command == "certify":
            return cmd_certify(parser, args)
        if args.command == "integrate":
            return cmd_integrate(parser, args)
        if args.command == "continue":
            return cmd_continue(parser, args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        sys.stderr.close()
        return 0
    except (RuntimeError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    parser.error(f"unknown command {args.command!r}")
