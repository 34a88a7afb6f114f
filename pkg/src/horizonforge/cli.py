"""Command line front end.

Every subcommand prints one JSON object on stdout.  ``--check`` switches a
subcommand to its invariant suite (one pass/fail entry per invariant).
Exit status: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys

import numpy as np

from . import config as _config
from .io import DocumentError, ProfileDocument, dumps, format_number, parse_config, read_document, write_document

COMMANDS = ("lambda1", "geometry", "path", "collar", "glue", "bend", "bartnik-sequence", "smooth", "flow", "check")


class UsageError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NumericalFailure(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        key = None
        if "unrecognized arguments:" in message:
            key = message.split("unrecognized arguments:")[1].split()[0]
        elif "arguments are required:" in message:
            key = message.split("required:")[1].split(",")[0].split()[0]
        elif "argument " in message:
            key = message.split("argument ")[1].split(":")[0].split("/")[0]
        raise UsageError(message, key)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_number(v) for v in row])


def _check_entry(name, ok, value=None):
    entry = {"name": name, "pass": bool(ok)}
    if value is not None:
        entry["value"] = value
    return entry


def _check_report(command, entries):
    return {"command": command, "mode": "check", "checks": entries, "passed": all(e["pass"] for e in entries)}


def _metric(path, kind=None):
    doc = read_document(path)
    m = doc.to_metric()
    if kind and m.kind != kind:
        raise DocumentError(f"{path}: expected a {kind} metric", "kind")
    return m


# --- subcommands -----------------------------------------------------------

def cmd_lambda1(args):
    from .spectral import lambda1, rayleigh_quotient, scalar_curvature, verdict

    m = _metric(args.metric)
    R = scalar_curvature(m)
    res = lambda1(m, args.k, scheme=args.scheme, R=R)
    v = verdict(res.lambda1)
    out = {"lambda1": res.lambda1, "k": res.k, "scheme": args.scheme, "residual": res.residual,
           "in_strict": v.in_strict, "in_weak": v.in_weak}
    if not args.check:
        return out
    dens = m.volume_density()
    w = np.gradient(m.x)
    avg = float(np.sum(R * dens * w) / np.sum(dens * w))
    fv = lambda1(m, args.k, scheme="fv", R=R)
    entries = [
        _check_entry("eigenfunction_positive", bool(np.all(res.eigenfunction > 0))),
        _check_entry("residual_below_tolerance", res.residual <= 1e3 * _config.tolerances().eig_residual,
                     res.residual),
        _check_entry("sandwich_min_R", float(np.min(R)) <= res.lambda1 / args.k + 1e-8),
        _check_entry("sandwich_avg_R", res.lambda1 / args.k <= avg + 1e-6 * max(1.0, abs(avg)), avg),
        _check_entry("rayleigh_matches_fv", abs(rayleigh_quotient(m, args.k, fv.eigenfunction, R) - fv.lambda1)
                     <= 1e-8 * max(1.0, abs(fv.lambda1))),
    ]
    return _check_report("lambda1", entries)


def cmd_geometry(args):
    from scipy.integrate import simpson

    from .geomcore import tube_geometry, warped_closed_scalar

    m = _metric(args.metric)
    if m.kind == "tube":
        geo = tube_geometry(m)
        R = geo.R
        header, cols = ["t", "f", "R", "H", "psc"], [m.x, m.profile, geo.R, geo.H, geo.psc.astype(float)]
    else:
        R = warped_closed_scalar(m)
        header, cols = ["x", "phi", "a", "R"], [m.x, m.profile, m.a, R]
    if args.out:
        _write_csv(args.out, header, zip(*cols))
    out = {"kind": m.kind, "n": m.n, "points": m.grid.points, "volume": m.volume(),
           "min_R": float(np.min(R)), "max_R": float(np.max(R))}
    if not args.check:
        return out
    entries = [_check_entry("finite_curvature", bool(np.all(np.isfinite(R))))]
    if m.kind == "closed_sphere" and m.n == 2:
        total = float(2 * np.pi * simpson(R * m.volume_density(), x=m.x))
        entries.append(_check_entry("gauss_bonnet", abs(total - 8 * np.pi) <= 1e-6 * 8 * np.pi, total))
    if m.kind == "tube":
        entries.append(_check_entry("psc_predicate_matches_sign_of_R",
                                    bool(np.all(geo.psc[2:-2] == (R[2:-2] > 0)))))
    return _check_report("geometry", entries)


def cmd_path(args):
    from .bartnik import horizon_path
    from .collar import _volume_drift

    m = _metric(args.metric, "closed_sphere")
    p = horizon_path(m, args.t_points)
    lam = p.lambda1_series(args.k)
    vols = np.array([g.volume() for g in p.metrics])
    if args.out:
        _write_csv(args.out, ["t", "lambda1", "volume"], zip(p.t_grid.samples, lam, vols))
    out = {"t_points": p.t_grid.points, "min_lambda1": float(np.min(lam)),
           "volume_form_drift": _volume_drift(p), "end_lambda1": float(lam[-1])}
    if not args.check:
        return out
    from .geomcore import warped_closed_scalar

    Rend = warped_closed_scalar(p.metrics[-1])
    entries = [
        _check_entry("lambda1_sign_preserved", bool(np.all(lam > 0) or lam[0] <= 0), float(np.min(lam))),
        _check_entry("volume_form_constant", out["volume_form_drift"] <= _config.tolerances().volume_drift,
                     out["volume_form_drift"]),
        _check_entry("endpoint_round", float(np.ptp(Rend)) <= 1e-3 * max(1.0, float(np.max(np.abs(Rend)))),
                     float(np.ptp(Rend))),
        _check_entry("starts_at_input", bool(np.array_equal(p.metrics[0].profile, m.profile))),
    ]
    return _check_report("path", entries)


def cmd_collar(args):
    from .bartnik import horizon_path
    from .collar import build_mean_convex_collar, build_minimal_collar
    from .geomcore import slice_curvature

    m = _metric(args.metric, "closed_sphere")
    p = horizon_path(m, args.t_points)
    if args.minimal:
        c, rep = build_minimal_collar(p, k=args.k)
    else:
        c, rep = build_mean_convex_collar(p, k=args.k, epsilon=args.epsilon)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dumps(c.to_json()) + "\n")
    out = dict(rep.to_json(), amplitude=c.amplitude, epsilon=c.epsilon, minimal=bool(args.minimal))
    if not args.check:
        return out
    geo = slice_curvature(c.metric)
    entries = [_check_entry("positive_scalar_curvature", rep.min_R > 0, rep.min_R)]
    if args.minimal:
        entries.append(_check_entry("slices_minimal", float(np.max(np.abs(geo.H))) <= 1e-6,
                                    float(np.max(np.abs(geo.H)))))
    else:
        entries += [
            _check_entry("horizon_minimal", float(np.max(np.abs(geo.H[0]))) <= 1e-6, float(np.max(np.abs(geo.H[0])))),
            _check_entry("slices_mean_convex", float(np.min(geo.H[1:])) > 0, float(np.min(geo.H[1:]))),
        ]
    entries += [_check_entry(f"boundary_{k}", bool(v)) for k, v in sorted(rep.boundary_flags.items())
                if isinstance(v, (bool, np.bool_))]
    return _check_report("collar", entries)


def cmd_glue(args):
    from .schwarzschild import GluingError, glue_profiles, gluing_feasible

    p1 = read_document(args.p1).to_planar()
    p2 = read_document(args.p2).to_planar()
    feasible = gluing_feasible(p1, p2)
    try:
        g = glue_profiles(p1, p2, window=args.window, points=args.points)
        built = True
    except GluingError as exc:
        if not args.check:
            raise NumericalFailure(str(exc)) from exc
        g, built = None, False
    if g is not None and args.out:
        write_document(ProfileDocument.from_planar(g), args.out)
    inside = None if g is None else (g.x > p1.x[-1]) & (g.x < p2.x[0])
    out = {"feasible": feasible, "constructed": built,
           "min_bridge_margin": None if g is None else float(np.min(g.psc_margin[inside]))}
    if not args.check:
        return out
    entries = [_check_entry("feasibility_matches_construction", feasible == built)]
    if g is not None:
        entries.append(_check_entry("bridge_strictly_psc", out["min_bridge_margin"] > 0, out["min_bridge_margin"]))
    return _check_report("glue", entries)


def cmd_bend(args):
    from .schwarzschild import adm_mass, bend_and_glue

    g = bend_and_glue(args.m1, args.m2, args.rho1, args.rho2, n=args.n, points=args.points)
    if args.out:
        write_document(ProfileDocument.from_planar(g), args.out)
    inside = (g.x > args.rho1) & (g.x < args.rho2)
    mass = adm_mass(g)
    out = {"adm_mass": mass, "min_bridge_margin": float(np.min(g.psc_margin[inside])), "samples": int(g.x.size)}
    if not args.check:
        return out
    entries = [
        _check_entry("terminal_mass", abs(mass - args.m2) <= 1e-12 * max(1.0, args.m2), mass),
        _check_entry("bridge_strictly_psc", out["min_bridge_margin"] > 0, out["min_bridge_margin"]),
        _check_entry("C_nondecreasing", bool(np.all(np.diff(g.C) >= -1e-12))),
    ]
    return _check_report("bend", entries)


def cmd_bartnik(args):
    from .bartnik import minimizing_sequence

    m = _metric(args.horizon, "closed_sphere")
    eps = [2.0 ** -i for i in range(1, args.eps_count + 1)]
    exts = minimizing_sequence(m, eps, k=args.k, t_points=args.t_points)
    rows = [e.to_row(i) for i, e in enumerate(exts, start=1)]
    if args.out:
        cols = ["i", "epsilon", "mass", "min_R", "min_psc_margin"]
        _write_csv(args.out, cols, ([r[c] for c in cols] for r in rows))
    masses = np.array([e.mass for e in exts])
    bound = exts[0].checks["penrose_bound"]
    out = {"count": len(exts), "final_mass": float(masses[-1]), "penrose_bound": bound,
           "final_gap": float(masses[-1] - bound)}
    if not args.check:
        return out
    entries = [
        _check_entry("masses_decreasing", bool(np.all(np.diff(masses) < 0))),
        _check_entry("above_penrose_bound", bool(np.all(masses >= bound - 1e-9)), float(np.min(masses - bound))),
        _check_entry("min_R_nonnegative", all(e.checks["min_R"] >= -1e-9 for e in exts),
                     min(e.checks["min_R"] for e in exts)),
        _check_entry("horizon_minimal", all(e.checks["horizon_H"] <= 1e-6 for e in exts)),
        _check_entry("slices_mean_convex", all(e.checks["min_slice_H"] > 0 for e in exts)),
        _check_entry("boundary_is_input", all(e.checks["boundary_is_input"] for e in exts)),
    ]
    return _check_report("bartnik-sequence", entries)


def cmd_smooth(args):
    from .smoothing import build_cutoff, make_c_normal, prescribe_sff

    if args.tube is None:
        if args.cutoff == "chi":
            params = {"eps1": args.eps1}
        else:
            params = {"epsilon": args.epsilon}
            if args.log_inv_delta:
                params["log_inv_delta"] = args.log_inv_delta
            else:
                params["delta"] = 0.1 if args.delta is None else args.delta
        cut = build_cutoff(args.cutoff, params)
        if args.out:
            cut.to_csv(args.out)
        inv = cut.check_invariants()
        if not args.check:
            return {"cutoff": args.cutoff, "points": cut.grid.points,
                    "max": float(np.max(cut.values)), "min": float(np.min(cut.values))}
        entries = [_check_entry(k, bool(v)) for k, v in sorted(inv.items()) if isinstance(v, (bool, np.bool_))]
        return _check_report("smooth", entries)
    m = _metric(args.tube, "tube")
    cn, deformed = make_c_normal(m, args.C, args.eta, args.window, delta=args.delta,
                                 log_inv_delta=args.log_inv_delta)
    out = {"c_normal": deformed.conclusions}
    if args.k_target is not None:
        # the exact quadratic model is evaluated on [0, sff_range], not only where the deformed
        # collar itself is C-normal (that window is window * delta wide)
        from .geomcore import RadialGrid

        model = RadialGrid(0.0, args.sff_range, 4097)
        out["prescribed"] = prescribe_sff(cn, args.k_target, args.eta, args.eps1, grid=model).conclusions
    if args.out:
        d = deformed
        _write_csv(args.out, ["t", "F", "R", "H"], zip(d.grid.samples, d.F, d.R, d.H))
    if not args.check:
        return out
    c = deformed.conclusions
    entries = [
        _check_entry("unchanged_outside", bool(c["unchanged_outside"])),
        _check_entry("c1_deviation", c["c1_deviation"] <= args.eta, c["c1_deviation"]),
        _check_entry("boundary_metric", bool(c["boundary_metric"])),
        _check_entry("boundary_sff_preserved", c["boundary_sff"] <= 1e-9 * max(1.0, abs(cn.sigma0)),
                     c["boundary_sff"]),
        _check_entry("scalar_curvature_drop", c["min_R_change"] >= -args.eta, c["min_R_change"]),
    ]
    if "prescribed" in out:
        p = out["prescribed"]
        entries += [
            _check_entry("sff_c0_deviation", p["c0_deviation"] <= args.eta, p["c0_deviation"]),
            _check_entry("sff_boundary_value", abs(p["boundary_sff"] - args.k_target) <= 1e-9, p["boundary_sff"]),
            _check_entry("sff_scalar_curvature_drop", p["min_R_change"] >= -args.eta, p["min_R_change"]),
            _check_entry("sff_mean_curvature", p["min_H_minus_trk"] >= -args.eta, p["min_H_minus_trk"]),
            _check_entry("sff_foliation", p["foliation_margin"] >= -1e-12, p["foliation_margin"]),
        ]
    return _check_report("smooth", entries)


def cmd_flow(args):
    from .flow import monotonicity_report, volume_identity_residual
    from .flow import evolve

    m = _metric(args.metric, "closed_sphere")
    traj = evolve(m, args.dt, args.T, k=args.k, monitor_every=args.monitor_every)
    if args.out:
        traj.to_csv(args.out)
    out = {"blow_up": traj.blow_up, "steps": traj.steps, "final_time": float(traj.times[-1]),
           "samples": int(traj.times.size), "final_lambda1": float(traj.lambda1_series[-1])}
    if traj.times.size >= 3:
        out["volume_identity_max"] = float(np.max(volume_identity_residual(traj)))
        out["min_dlambda_dt"] = monotonicity_report(traj, args.k, allow_below_quarter=True).min_rate
    if not args.check:
        return out
    entries = [_check_entry("no_blow_up", not traj.blow_up)]
    if traj.times.size >= 3:
        entries += [
            _check_entry("volume_identity", out["volume_identity_max"] <= 1e-5, out["volume_identity_max"]),
            _check_entry("lambda1_increasing", out["min_dlambda_dt"] > 0, out["min_dlambda_dt"]),
            _check_entry("volume_decreasing_when_lambda1_nonnegative",
                         bool(np.all((np.diff(traj.volume_series) < 0) | (traj.lambda1_series[:-1] < 0)))),
        ]
    return _check_report("flow", entries)


def cmd_check(args):
    from .checks import run_suite

    entries = run_suite(points=args.points)
    return _check_report("check", entries)


_HANDLERS = {
    "lambda1": cmd_lambda1, "geometry": cmd_geometry, "path": cmd_path, "collar": cmd_collar,
    "glue": cmd_glue, "bend": cmd_bend, "bartnik-sequence": cmd_bartnik, "smooth": cmd_smooth,
    "flow": cmd_flow, "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="horizonforge", allow_abbrev=False, description="Rotationally symmetric PSC toolkit")
    p.add_argument("--config", help="RunConfig JSON; replaces the subcommand and its flags")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, **kw):
        s = sub.add_parser(name, allow_abbrev=False, **kw)
        s.add_argument("--check", action="store_true", help="run the invariant suite instead")
        return s

    s = add("lambda1")
    s.add_argument("--metric", required=True)
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--scheme", choices=("fv", "fd4"), default="fd4")

    s = add("geometry")
    s.add_argument("--metric", required=True)
    s.add_argument("--out")

    s = add("path")
    s.add_argument("--metric", required=True)
    s.add_argument("--t-points", type=int, default=65)
    s.add_argument("--k", type=float, default=0.5)
    s.add_argument("--out")

    s = add("collar")
    s.add_argument("--metric", required=True)
    s.add_argument("--epsilon", type=float, default=1e-3)
    s.add_argument("--minimal", action="store_true")
    s.add_argument("--t-points", type=int, default=65)
    s.add_argument("--k", type=float, default=0.5)
    s.add_argument("--out")

    s = add("glue")
    s.add_argument("--p1", required=True)
    s.add_argument("--p2", required=True)
    s.add_argument("--window", type=float, default=0.05)
    s.add_argument("--points", type=int, default=512)
    s.add_argument("--out")

    s = add("bend")
    for name in ("--m1", "--m2", "--rho1", "--rho2"):
        s.add_argument(name, type=float, required=True)
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--points", type=int, default=512)
    s.add_argument("--out")

    s = add("bartnik-sequence")
    s.add_argument("--horizon", required=True)
    s.add_argument("--eps-count", type=int, default=12)
    s.add_argument("--t-points", type=int, default=65)
    s.add_argument("--k", type=float, default=0.5)
    s.add_argument("--out")

    s = add("smooth")
    s.add_argument("--cutoff", choices=("log_cutoff", "chi"), default="log_cutoff")
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--log-inv-delta", type=float, default=None)
    s.add_argument("--eps1", type=float, default=0.01)
    s.add_argument("--tube", help="tube_profile document: run the C-normal deformation on it")
    s.add_argument("--C", type=float, default=1.0)
    s.add_argument("--eta", type=float, default=1e-2)
    s.add_argument("--window", type=float, default=0.5)
    s.add_argument("--k-target", type=float, default=None)
    s.add_argument("--sff-range", type=float, default=0.5)
    s.add_argument("--out")

    s = add("flow")
    s.add_argument("--metric", required=True)
    s.add_argument("--dt", type=float, required=True)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--k", type=float, default=0.5)
    s.add_argument("--monitor-every", type=int, default=10)
    s.add_argument("--out")

    s = add("check")
    s.add_argument("--points", type=int, default=256)
    return p


def _argv_from_config(cfg) -> list:
    argv = [cfg.command]
    items = dict(cfg.params)
    if "out" in cfg.outputs:
        items["out"] = cfg.outputs["out"]
    for key in cfg.outputs:
        if key != "out":
            raise UsageError(f"unknown output {key!r}", f"outputs.{key}")
    if "points" in cfg.grid:
        items.setdefault("points", cfg.grid["points"])
    for key, val in items.items():
        flag = "--" + key.replace("_", "-")
        if val is True:
            argv.append(flag)
        elif val is False or val is None:
            continue
        else:
            argv += [flag, str(val)]
    return argv


@contextlib.contextmanager
def _tolerance_env(overrides):
    if not overrides:
        yield
        return
    old = os.environ.get(_config.ENV_VAR)
    merged = dict(json.loads(old) if old else {})
    merged.update(overrides)
    os.environ[_config.ENV_VAR] = json.dumps(merged)
    try:
        yield
    finally:
        if old is None:
            os.environ.pop(_config.ENV_VAR, None)
        else:
            os.environ[_config.ENV_VAR] = old


def _emit(obj, stream):
    stream.write(dumps(obj, indent=1) + "\n")


def _error(kind, message, key=None, code=2):
    err = {"error": kind, "message": str(message), "exit_code": code}
    if key is not None:
        err["key"] = key
    return err


def run(argv=None, stdout=None) -> int:
    """Parse ``argv``, run, print the JSON result; returns the exit status."""
    stdout = stdout or sys.stdout
    parser = build_parser()
    from .bartnik import BartnikError
    from .collar import CollarError
    from .flow import FlowError
    from .schwarzschild import GluingError
    from .smoothing import SmoothingError
    from .spectral import EigenSolverError

    try:
        args = parser.parse_args(argv)
        overrides = {}
        if args.config:
            with open(args.config) as fh:
                try:
                    raw = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise DocumentError(f"config is not valid JSON: {exc}") from exc
            cfg = parse_config(raw, COMMANDS)
            overrides = cfg.tolerances
            args = parser.parse_args(_argv_from_config(cfg))
        if args.command is None:
            raise UsageError("a subcommand is required", "command")
        with _tolerance_env(overrides):
            _config.tolerances()  # validates HORIZONFORGE_TOL early
            result = _HANDLERS[args.command](args)
    except (EigenSolverError, ArithmeticError, NumericalFailure, CollarError, GluingError, BartnikError,
            SmoothingError, FlowError) as exc:
        _emit(_error(type(exc).__name__, exc, code=3), stdout)
        return 3
    except UsageError as exc:
        _emit(_error("UsageError", exc, exc.key), stdout)
        return 2
    except DocumentError as exc:
        _emit(_error("DocumentError", exc, exc.key), stdout)
        return 2
    except KeyError as exc:
        _emit(_error("UnknownKey", f"unknown key {exc.args[0]!r}", str(exc.args[0])), stdout)
        return 2
    except (ValueError, OSError) as exc:
        _emit(_error(type(exc).__name__, exc), stdout)
        return 2
    _emit(result, stdout)
    if result.get("mode") == "check" and not result["passed"]:
        return 3
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
