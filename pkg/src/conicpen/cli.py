"""Command-line front end.

Commands: solve, replay, check, cone-test, grad-test. Results go to stdout as
JSON; without ``--json`` a short human summary is also written to stderr.

Exit codes: 0 ok, 1 error, 2 no convergence, 3 regularity suspected.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import expr as ex
from .batteries import cone_battery, fd_gradient, grad_battery
from .cones import ConeError, parse_cone
from .kkt import KKT_TOL, conic_regularity_check, is_zero_cone, kkt_residuals, licq_check
from .penalty import PenaltyError, SolverConfig, multiplier_diverges, replay, solve
from .problem import ProblemError, load_problem

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_CONVERGE = 2
EXIT_REGULARITY = 3

STATUS_EXIT = {
    "ok": EXIT_OK,
    "error": EXIT_ERROR,
    "no-converge": EXIT_NO_CONVERGE,
    "regularity-suspect": EXIT_REGULARITY,
}

TRACE_COLUMNS = ["k", "stationarity", "feasibility", "complementarity", "dual_feasibility",
                 "phi", "inner_iters"]

# options whose value is a comma-separated vector that may start with '-'
VECTOR_OPTIONS = ("--x", "--lambda", "--xbar", "--x0")

REPLAY_MAX_OUTER = 7


class CliError(Exception):
    pass


def parse_vector(text, what):
    try:
        return np.array([float(t) for t in text.split(",")], dtype=float)
    except ValueError:
        raise CliError(f"{what}: expected comma-separated decimals, got {text!r}") from None


def _join_vector_args(argv):
    # argparse would read "-1,-1" as an option; glue it to its flag instead
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in VECTOR_OPTIONS and i + 1 < len(argv):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def _dumps(obj):
    return json.dumps(obj, indent=2, allow_nan=True)


def _floats(v):
    return [float(t) for t in np.asarray(v).ravel()]


def write_trace(path, trace):
    """CSV of per-iteration residuals plus a sidecar JSON with x and lambda."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in trace:
            row = rec.to_row()
            w.writerow([repr(float(row[c])) if c != "inner_iters" else int(row[c])
                        for c in TRACE_COLUMNS])
    side = path.with_suffix(".json") if path.suffix != ".json" else path.with_name(path.name + ".json")
    rows = [{"k": float(r.k), "x": _floats(r.x), "lambda": _floats(r.lam),
             "inner_status": r.inner_status, "interior": r.interior} for r in trace]
    side.write_text(_dumps({"iterations": rows}) + "\n")
    return str(path)


def _run_result(status, x, lam, kkt, trace_path, message, **extra):
    d = {
        "status": status,
        "x": None if x is None else _floats(x),
        "lambda": None if lam is None else _floats(lam),
        "kkt": None if kkt is None else kkt.to_json(),
        "trace": trace_path,
        "message": message,
    }
    d.update(extra)
    return d


def _config(args, **overrides):
    kw = {}
    for name in ("k0", "rho", "max_outer", "inner_tol", "prox_weight", "seed", "tol", "delta"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    kw.update(overrides)
    return SolverConfig(**kw)


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args):
    p = load_problem(args.file)
    x0 = parse_vector(args.x0, "--x0") if args.x0 else None
    cfg = _config(args)
    res = solve(p, x0, cfg)
    trace_path = write_trace(args.trace, res.trace) if args.trace else None
    if res.converged:
        status = "ok"
    elif res.regularity_suspect:
        status = "regularity-suspect"
    else:
        status = "no-converge"
    out = _run_result(status, res.x, res.lam, res.kkt, trace_path, res.message,
                      outer_iterations=len(res.trace), final_k=float(res.trace[-1].k))
    human = (f"{p.name or args.file}: {status} after {len(res.trace)} outer iterations; "
             f"x = {_floats(res.x)}, lambda = {_floats(res.lam)}")
    return status, out, human


def cmd_replay(args):
    p = load_problem(args.file)
    xbar = parse_vector(args.xbar, "--xbar") if args.xbar else p.known_solution
    if xbar is None:
        raise CliError("replay needs --xbar or a problem file with known_solution")
    xbar = p.point(xbar, "xbar")
    delta = args.delta if args.delta is not None else (p.delta or 1.0)
    cfg = _config(args, delta=delta,
                  max_outer=args.max_outer if args.max_outer is not None else REPLAY_MAX_OUTER)
    trace = replay(p, xbar, cfg)
    trace_path = write_trace(args.trace, trace) if args.trace else None

    last = trace[-1]
    kkt = kkt_residuals(p, xbar, last.lam, cfg.tol)
    diverges = multiplier_diverges(trace)
    if diverges:
        status = "regularity-suspect"
        message = "multiplier estimates grow without bound along the penalty sequence"
    elif kkt.passed:
        status = "ok"
        message = "multiplier estimates converge to a KKT multiplier at xbar"
    else:
        status = "no-converge"
        message = "final multiplier estimate does not satisfy KKT at xbar"
    fbar = p.f(xbar)
    summary = {
        "xbar": _floats(xbar),
        "delta": float(delta),
        "final_k": float(last.k),
        "final_lambda": _floats(last.lam),
        "distance_to_xbar": [float(np.linalg.norm(r.x - xbar)) for r in trace],
        "lambda_norms": [float(np.linalg.norm(r.lam)) for r in trace],
        "max_phi_minus_fbar": max(float(r.phi - fbar) for r in trace),
        "all_interior": all(bool(r.interior) for r in trace),
        "multiplier_diverges": diverges,
    }
    if p.known_multiplier is not None:
        summary["multiplier_error"] = float(np.linalg.norm(last.lam - p.known_multiplier))
    out = _run_result(status, last.x, last.lam, kkt, trace_path, message, summary=summary)
    human = (f"{p.name or args.file}: replay {status}; final k = {last.k:g}, "
             f"lambda = {_floats(last.lam)}, |x - xbar| = {summary['distance_to_xbar'][-1]:.3e}")
    return status, out, human


def cmd_check(args):
    p = load_problem(args.file)
    x = parse_vector(args.x, "--x") if args.x else p.known_solution
    lam = parse_vector(args.lam, "--lambda") if args.lam else p.known_multiplier
    if x is None:
        raise CliError("check needs --x or a problem file with known_solution")
    if lam is None:
        raise CliError("check needs --lambda or a problem file with known_multiplier")
    x = p.point(x, "--x")
    if lam.size != p.m:
        raise CliError(f"--lambda has dimension {lam.size}, expected {p.m}")
    tol = args.tol if args.tol is not None else KKT_TOL
    kkt = kkt_residuals(p, x, lam, tol)
    if is_zero_cone(p.cone):
        licq = licq_check(p, x).to_json()
    else:
        licq = {"mode": "licq", "applicable": False,
                "notes": ["cone is not {0}; see the conic report"]}
    seed = args.seed if args.seed is not None else 0
    conic = conic_regularity_check(p, x, multistarts=args.multistarts, seed=seed).to_json()
    out = {"kkt": kkt.to_json(), "licq": licq, "conic": conic}
    status = "ok" if kkt.passed else "no-converge"
    human = (f"{p.name or args.file}: KKT {'pass' if kkt.passed else 'fail'} "
             f"(max residual {kkt.max_residual():.3e}, bound {tol * kkt.scale:.3e})")
    return status, out, human


def cmd_cone_test(args):
    K = parse_cone(args.cone)
    seed = args.seed if args.seed is not None else 0
    res = cone_battery(K, samples=args.samples, seed=seed)
    status = "ok" if res["pass"] else "no-converge"
    worst = ", ".join(f"{k} {v:.2e}" for k, v in res["max_residuals"].items())
    human = f"{res['cone']}: {'pass' if res['pass'] else 'FAIL'} ({worst})"
    return status, res, human


def cmd_grad_test(args):
    seed = args.seed if args.seed is not None else 0
    if args.expr is not None:
        if args.n is None:
            raise CliError("--expr needs --n")
        e = ex.parse(args.expr, args.n)
        x = parse_vector(args.x, "--x") if args.x else np.zeros(args.n)
        if x.size != args.n:
            raise CliError(f"--x has dimension {x.size}, expected {args.n}")
        g = ex.grad(e, x)
        fd = fd_gradient(lambda z: ex.evaluate(e, z), x)
        err = float(np.linalg.norm(fd - g)) / max(float(np.linalg.norm(g)), 1.0)
        res = {"expr": ex.to_text(e), "x": _floats(x), "value": ex.evaluate(e, x),
               "gradient": _floats(g), "fd_gradient": _floats(fd), "rel_error": err,
               "tolerance": 1e-5, "pass": err <= 1e-5}
    else:
        res = grad_battery(samples=args.samples, seed=seed)
    status = "ok" if res["pass"] else "no-converge"
    err = res.get("max_rel_error", res.get("rel_error"))
    human = f"grad-test: {'pass' if res['pass'] else 'FAIL'} (max relative error {err:.3e})"
    return status, res, human


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, help="KKT tolerance (default 1e-6)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--trace", metavar="PATH", help="write the outer-iteration trace CSV here")
    common.add_argument("--json", action="store_true", help="machine output only")

    parser = argparse.ArgumentParser(prog="conicpen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="run the penalty method")
    s.add_argument("file")
    s.add_argument("--k0", type=float)
    s.add_argument("--rho", type=float)
    s.add_argument("--max-outer", dest="max_outer", type=int)
    s.add_argument("--inner-tol", dest="inner_tol", type=float)
    s.add_argument("--prox-weight", dest="prox_weight", type=float)
    s.add_argument("--x0", help="starting point, comma-separated")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("replay", parents=[common],
                       help="penalty sequence anchored at a known local solution")
    r.add_argument("file")
    r.add_argument("--xbar", help="anchor point (default: known_solution)")
    r.add_argument("--delta", type=float, help="ball radius (default: problem delta or 1)")
    r.add_argument("--k0", type=float)
    r.add_argument("--rho", type=float)
    r.add_argument("--max-outer", dest="max_outer", type=int,
                   help=f"number of penalty weights (default {REPLAY_MAX_OUTER})")
    r.add_argument("--inner-tol", dest="inner_tol", type=float)
    r.set_defaults(func=cmd_replay)

    c = sub.add_parser("check", parents=[common], help="KKT residuals and regularity reports")
    c.add_argument("file")
    c.add_argument("--x", help="point (default: known_solution)")
    c.add_argument("--lambda", dest="lam", help="multiplier in cone coordinates, svec for PSD")
    c.add_argument("--multistarts", type=int, default=50)
    c.set_defaults(func=cmd_check)

    t = sub.add_parser("cone-test", parents=[common], help="projection property battery")
    t.add_argument("--cone", required=True,
                   help="descriptor: JSON, type:n, or a comma list for a product")
    t.add_argument("--samples", type=int, default=1000)
    t.set_defaults(func=cmd_cone_test)

    g = sub.add_parser("grad-test", parents=[common], help="dual-number gradients vs finite differences")
    g.add_argument("--samples", type=int, default=1000)
    g.add_argument("--expr", help="check a single expression instead of the random battery")
    g.add_argument("--n", type=int, help="dimension for --expr")
    g.add_argument("--x", help="point for --expr (default: origin)")
    g.set_defaults(func=cmd_grad_test)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(_join_vector_args(argv))
    logging.basicConfig(level=logging.ERROR if args.json else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        status, out, human = args.func(args)
    except (FileNotFoundError, ProblemError, ex.ExprError, ConeError, CliError, PenaltyError,
            ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.command in ("solve", "replay"):
            print(_dumps(_run_result("error", None, None, None, None, str(exc))))
        return EXIT_ERROR
    print(_dumps(out))
    if not args.json:
        print(human, file=sys.stderr)
    return STATUS_EXIT[status]


if __name__ == "__main__":
    sys.exit(main())
