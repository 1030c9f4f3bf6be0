"""Command-line front end: trajectories, audits, experiments and iteration constants.

Exit codes: 0 when every asserted bound holds, 1 when one fails, 2 for usage or
configuration errors. Every command accepts ``--config file.json``; explicit
flags win over values from the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import audit, iteration, pde
from .geometry import PhasePoint
from .trajectory import (
    ACTION,
    CRITICAL,
    ConnectionImpossible,
    ForcingPair,
    connect,
    criticality_profile,
    endpoint_residual,
    kinetic_residual,
    trajectory_csv,
)

FAMILIES = {CRITICAL: ForcingPair.critical, ACTION: ForcingPair.action_minimizer}
EXPERIMENTS = ("harnack", "log", "sobolev", "gain", "weak-harnack-sharpness", "inverse-sup")

DEFAULTS = {
    "connect": {"samples": 200, "family": CRITICAL, "csv": None, "profile": None},
    "audit": {"family": None, "expansion": None, "b0": 0.0, "delta": 1.0},
    "harnack": {"lam": 0.2, "Lam": 5.0, "delta": 0.5, "tau": 0.5, "solver": True},
    "log": {"mu": None, "C": 1.0, "nodes": 24},
    "sobolev": {"n": 1, "q": [2.5, 3.0, 3.5], "r": [0.5, 1.0, 2.0], "nodes": 40},
    "gain": {"rough": False, "C": 1.0, "grid": 48},
    "weak-harnack-sharpness": {"p_below": 1.4, "p_at": 1.5, "tolerance": 0.05, "n": 1},
    "inverse-sup": {"grid": 40, "lam": 0.5, "Lam": 2.0},
    "moser-e1": {"C": 1.0, "g1": 1.0, "g2": 1.0, "kappa": 2.0, "p": 1.0, "mu": 1.0},
    "moser-e2": {"C": 1.0, "g1": 1.0, "g2": 1.0, "kappa": 2.0, "p": 0.5, "mu": 1.0},
    "moser-e3": {"C": 1.0, "g1": 1.0, "g2": 1.0, "kappa": 2.0, "p": 1.0, "mu": 1.0, "p0": 1.0, "reading": "exponent", "delta": None},
}
COMMON = {"seed": 0, "out": None}


class UsageError(ValueError):
    pass


def _opt(p: argparse.ArgumentParser, *names, **kw):
    kw.setdefault("default", argparse.SUPPRESS)
    p.add_argument(*names, **kw)


def _common(p: argparse.ArgumentParser):
    _opt(p, "--config", help="JSON file with option values; flags override it")
    _opt(p, "--seed", type=int, help="random seed (default 0)")
    _opt(p, "--out", help="write the JSON report here instead of stdout")


def _iteration_flags(p):
    _opt(p, "--C", type=float)
    _opt(p, "--g1", type=float, help="exponent gamma1 on the (1 + mu p) factor")
    _opt(p, "--g2", type=float, help="exponent gamma2 on the set-gap factor")
    _opt(p, "--kappa", type=float)
    _opt(p, "--p", type=float)
    _opt(p, "--mu", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinetraj", description=__doc__.splitlines()[0])
    top = parser.add_subparsers(dest="group", required=True)

    traj = top.add_parser("trajectory", help="connect points or audit forcing families")
    tsub = traj.add_subparsers(dest="command", required=True)
    c = tsub.add_parser("connect", help="sample a trajectory between two phase points")
    _common(c)
    _opt(c, "--from", dest="start", help="t,x1..xn,v1..vn")
    _opt(c, "--to", dest="end", help="t,x1..xn,v1..vn")
    _opt(c, "--samples", type=int)
    _opt(c, "--family", choices=sorted(FAMILIES))
    _opt(c, "--csv", help="write samples here (otherwise to stdout)")
    _opt(c, "--profile", help="write the scaling profile JSON here")
    a = tsub.add_parser("audit", help="criticality audit of a forcing family")
    _common(a)
    _opt(a, "--family", choices=sorted(FAMILIES))
    _opt(a, "--expansion", help='g2 terms beyond r^{3/2} as "b:e,b:e"')
    _opt(a, "--b0", type=float, help="coefficient of r^{3/2} in g2")
    _opt(a, "--delta", type=float)

    exp = top.add_parser("experiment", help="run a numerical experiment and check its bounds")
    esub = exp.add_subparsers(dest="command", required=True)
    h = esub.add_parser("harnack")
    _common(h)
    _opt(h, "--lambda", dest="lam", type=float)
    _opt(h, "--Lambda", dest="Lam", type=float)
    _opt(h, "--delta", type=float)
    _opt(h, "--tau", type=float)
    _opt(h, "--no-solver", dest="solver", action="store_false")
    lg = esub.add_parser("log")
    _common(lg)
    _opt(lg, "--mu", type=float, action="append")
    _opt(lg, "--C", type=float)
    _opt(lg, "--nodes", type=int)
    s = esub.add_parser("sobolev")
    _common(s)
    _opt(s, "--n", type=int)
    _opt(s, "--q", type=float, nargs="+")
    _opt(s, "--r", type=float, nargs="+")
    _opt(s, "--nodes", type=int)
    g = esub.add_parser("gain")
    _common(g)
    _opt(g, "--rough", action="store_true")
    _opt(g, "--C", type=float)
    _opt(g, "--grid", type=int)
    w = esub.add_parser("weak-harnack-sharpness")
    _common(w)
    _opt(w, "--p-below", dest="p_below", type=float)
    _opt(w, "--p-at", dest="p_at", type=float)
    _opt(w, "--tolerance", type=float)
    _opt(w, "--n", type=int)
    i = esub.add_parser("inverse-sup")
    _common(i)
    _opt(i, "--grid", type=int)
    _opt(i, "--lambda", dest="lam", type=float)
    _opt(i, "--Lambda", dest="Lam", type=float)

    const = top.add_parser("constants", help="iteration constants")
    csub = const.add_subparsers(dest="command", required=True)
    for name in ("moser-e1", "moser-e2", "moser-e3"):
        cp = csub.add_parser(name)
        _common(cp)
        _iteration_flags(cp)
        if name == "moser-e3":
            _opt(cp, "--p0", type=float)
            _opt(cp, "--reading", choices=[iteration.EXPONENT_READING, iteration.DISPLAYED_READING])
            _opt(cp, "--delta", type=float)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    opts = dict(COMMON)
    opts.update(DEFAULTS.get(args.command, {}))
    given = vars(args)
    if "config" in given:
        try:
            data = json.loads(Path(given["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(data) - set(opts) - {"start", "end"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update(data)
    opts.update({k: v for k, v in given.items() if k not in ("config", "group", "command")})
    return opts


def _point(text, name: str) -> PhasePoint:
    if text is None:
        raise UsageError(f"missing --{name}")
    vals = [float(s) for s in str(text).split(",")] if isinstance(text, str) else [float(s) for s in text]
    if len(vals) < 3 or len(vals) % 2 == 0:
        raise UsageError(f"--{name} needs t followed by n positions and n velocities")
    return PhasePoint.from_flat(vals)


def _emit(payload: str, out) -> None:
    if out:
        Path(out).write_text(payload + "\n")
    else:
        sys.stdout.write(payload + "\n")


def _dump(obj) -> str:
    return json.dumps(pde._jsonable(obj), indent=2, sort_keys=True)


def cmd_trajectory(command: str, o: dict) -> int:
    if command == "connect":
        p0, p1 = _point(o.get("start"), "from"), _point(o.get("end"), "to")
        if p0.t == p1.t:
            raise UsageError("t0 == t1: no kinetic trajectory joins points at equal times")
        traj = connect(p0, p1, FAMILIES[o["family"]]())
        csv_text = trajectory_csv(traj, int(o["samples"]))
        summary = {
            "endpoint_residual": endpoint_residual(traj),
            "kinetic_residual": kinetic_residual(traj, np.linspace(0.05, 1.0, 64)),
            "samples": int(o["samples"]),
        }
        if o["csv"]:
            Path(o["csv"]).write_text(csv_text)
        else:
            sys.stdout.write(csv_text)
        if o["profile"]:
            Path(o["profile"]).write_text(_dump(criticality_profile(traj.delta, traj.n, traj.forcing).as_dict()) + "\n")
        print(f"endpoint residual {summary['endpoint_residual']:.3e}", file=sys.stderr)
        if o["out"]:
            _emit(_dump(summary), o["out"])
        return 0
    if o["expansion"] is not None:
        terms = [(float(o["b0"]), audit.BASE_EXPONENT)]
        for part in str(o["expansion"]).split(","):
            b, e = part.split(":")
            terms.append((float(b), float(e)))
        report = audit.audit_forcing_pair(audit.PowerExpansion(tuple(terms)))
    elif o["family"] is not None:
        report = audit.audit_numeric(FAMILIES[o["family"]](), float(o["delta"]))
    else:
        raise UsageError("give --family or --expansion")
    result = report.as_dict()
    result["verdict"] = "critical" if report.critical else "non-critical"
    _emit(_dump(result), o["out"])
    return 0


def _run_experiment(command: str, o: dict) -> pde.ExperimentReport:
    if command == "harnack":
        cfg = pde.HarnackConfig(delta=o["delta"], tau=o["tau"], moser_pair=(o["lam"], o["Lam"]), include_solver=o["solver"])
        return pde.harnack_experiment(cfg)
    if command == "log":
        mus = o["mu"] if o["mu"] is not None else pde.LogEstimateConfig.mus
        mus = tuple(float(m) for m in (mus if isinstance(mus, (list, tuple)) else [mus]))
        cfg = pde.LogEstimateConfig(mus=mus, C=o["C"], nodes=o["nodes"], seed=o["seed"])
        return pde.log_estimate_experiment(cfg)
    if command == "sobolev":
        if o["n"] != 1:
            raise UsageError("the Sobolev experiment is implemented for n = 1")
        rs = tuple(float(r) for r in o["r"])
        if 1.0 not in rs:
            raise UsageError("the radius list must contain 1")
        return pde.sobolev_scaling_experiment(rs=rs, qs=tuple(float(q) for q in o["q"]), nodes=o["nodes"])
    if command == "gain":
        return pde.gain_of_integrability_experiment(pde.GainConfig(C=o["C"], grid=o["grid"], rough=o["rough"]))
    if command == "weak-harnack-sharpness":
        return pde.weak_harnack_sharpness_experiment(below=o["p_below"], at=o["p_at"], variation_tolerance=o["tolerance"], n=o["n"])
    return pde.inverse_sup_bound_experiment(pde.SupBoundConfig(pair=(o["lam"], o["Lam"]), grid=o["grid"]))


def _scalars(d: dict) -> dict:
    return {k: v for k, v in d.items() if isinstance(v, (int, float, bool, np.floating))}


def cmd_experiment(command: str, o: dict) -> int:
    report = _run_experiment(command, o)
    _emit(report.to_json(), o["out"])
    if not report.passed:
        print(
            f"{command}: asserted bound failed; measured {_scalars(report.measured)} against {_scalars(report.bounds)}",
            file=sys.stderr,
        )
        return 1
    return 0


def cmd_constants(command: str, o: dict) -> int:
    params = iteration.IterationParams(
        C=o["C"], gamma1=o["g1"], gamma2=o["g2"], kappa=o["kappa"], p=o["p"], mu=o["mu"], p0=o.get("p0")
    )
    if command == "moser-e1":
        M, gt = iteration.moser_constant_unbounded(params)
        out = {"M": M, "gamma_tilde": gt, "recursion": iteration.moser_recursion_unbounded(params)}
    elif command == "moser-e3":
        M, g0 = iteration.moser_constant_stopped(params, o["reading"], o["delta"])
        out = {"M": M, "gamma0": g0, "reading": o["reading"]}
    else:
        out = iteration.moser_smallp(params).as_dict()
    _emit(_dump(out), o["out"])
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        o = resolve(args)
        if args.group == "trajectory":
            return cmd_trajectory(args.command, o)
        if args.group == "experiment":
            return cmd_experiment(args.command, o)
        return cmd_constants(args.command, o)
    except (UsageError, ConnectionImpossible, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
