"""Command-line front end: ``slowfast-escape <subcommand> [flags]``.

Every flag can also be set in a JSON file passed with ``--config``; keys are the flag names
with dashes replaced by underscores, and flags given on the command line win.
Exit codes: 0 success, 1 computation error, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import analysis, path, sde
from .manifold import (BUILTIN_MODELS, ManifoldError, ModelError, SlowFastModel,
                       compare_duffing_reference, reduced_field, solve_center_manifold)
from .series import render

DEFAULT_GRID = (0.02, 0.05, 0.1, 0.15, 0.2)
COMPUTATION_ERRORS = (path.NoConnection, path.QuadratureNotConverged, ManifoldError,
                      sde.NewtonDiverged, sde.StiffnessBlowup, sde.EnsembleFailed)


class UsageError(Exception):
    pass


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating, Fraction)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(out, header, rows) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])


# -- argument handling --------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with flag values (flags win)")
    p.add_argument("--model", default="duffing", help="built-in model: " + ", ".join(BUILTIN_MODELS))
    p.add_argument("--f", dest="f_coeffs", type=Fraction, nargs="+",
                   help="custom drift, ascending coefficients of f (overrides --model)")
    p.add_argument("--equilibria", nargs="+",
                   help="custom equilibria as kind:x, e.g. sink:-1 saddle:0 sink:1")
    p.add_argument("--sink", type=Fraction, help="starting sink (default: leftmost)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=int, help=f"worker threads (env {sde.WORKERS_ENV}, "
                                              "default: CPU count)")
    p.add_argument("-o", "--output", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slowfast-escape", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="center-manifold series and reduced field")
    _add_common(p)
    p.add_argument("--grade", type=int, default=5, help="grade cap of the series")

    p = sub.add_parser("path", help="optimal escape path samples as CSV")
    _add_common(p)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=path.DEFAULT_DELTA)
    p.add_argument("--samples", type=int, default=2001)
    p.add_argument("--mode", choices=path.MODES, default="branch")
    p.add_argument("--full", action="store_true", help="solve the full 4-D system instead")

    p = sub.add_parser("action", help="action along the reduced path per epsilon")
    _add_common(p)
    p.add_argument("--eps", type=float, nargs="+", default=list(DEFAULT_GRID))
    p.add_argument("--delta", type=float, default=path.DEFAULT_DELTA)

    for name, help_ in (("simulate", "Monte Carlo escape-time ensembles"),
                        ("scaling", "fitted against predicted scaling coefficients")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.add_argument("--eps", type=float, nargs="+", default=[0.1])
        p.add_argument("--invD", type=float, nargs="+", default=[20.0] if name == "simulate"
                       else [15.0, 18.0, 21.0, 24.0, 27.0])
        p.add_argument("--trials", type=int, default=200)
        p.add_argument("--step", type=float, default=1e-2)
        p.add_argument("--scheme", choices=(sde.IMPLICIT, sde.EXPLICIT), default=sde.IMPLICIT)
        p.add_argument("--newton-tol", type=float, default=1e-10)
        p.add_argument("--newton-max-iters", type=int, default=25)
        p.add_argument("--t-max", type=float, default=sde.DEFAULT_T_MAX)
        p.add_argument("--overshoot", type=float, default=0.0,
                       help="count escape only this far past the saddle")
        if name == "simulate":
            p.add_argument("--raw", help="also write per-trial times to this CSV file")
        else:
            p.add_argument("--reference", action="store_true",
                           help="fit the published Duffing escape times instead of simulating")

    p = sub.add_parser("table1", help="Duffing scaling-coefficient table")
    _add_common(p)
    p.add_argument("--csv", action="store_true", help="emit CSV instead of a text table")

    p = sub.add_parser("verify", help="run the acceptance checks")
    _add_common(p)
    p.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config: cannot read {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("--config: top level must be a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"--config: unknown keys {unknown} for {args.command}")
    defaults = {}
    for action in sub._actions:
        if action.dest in cfg:
            value = cfg[action.dest]
            if action.type is not None:
                value = ([action.type(v) for v in value] if isinstance(value, list)
                         else action.type(value))
            defaults[action.dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def make_model(args, epsilon: float | None = None, noise_D: float | None = None) -> SlowFastModel:
    if args.f_coeffs:
        if not args.equilibria:
            raise UsageError("--f needs --equilibria")
        eq = []
        for item in args.equilibria:
            kind, _, x = str(item).partition(":")
            try:
                eq.append((Fraction(x), kind))
            except ValueError:
                raise UsageError(f"--equilibria: cannot parse {item!r} (expected kind:x)") from None
        model = SlowFastModel(args.f_coeffs, eq, name="custom")
    else:
        if args.model not in BUILTIN_MODELS:
            raise UsageError(f"--model: unknown model {args.model!r}")
        model = BUILTIN_MODELS[args.model]()
    return model.with_params(epsilon, noise_D)


def _sink(args, model):
    return model.sinks[0] if args.sink is None else args.sink


# -- subcommands ------------------------------------------------------------------------

def cmd_derive(args, out) -> int:
    model = make_model(args)
    if args.grade < 1:
        raise UsageError("--grade must be >= 1")
    cm = solve_center_manifold(model, args.grade)
    rf = reduced_field(cm)
    res_h, res_k = cm.residuals()
    print(f"model: {model.name}, f = {render(model.f_series(model.degree))}", file=out)
    print(f"grade cap: {cm.grade_cap} (e-blocks complete through e^{cm.complete_eps_order})",
          file=out)
    print(f"h = {render(cm.h)}", file=out)
    print(f"k = {render(cm.k)}", file=out)
    print(f"x' = {render(rf.x_dot)}", file=out)
    print(f"l1' = {render(rf.l1_dot)}", file=out)
    ok = res_h.is_zero() and res_k.is_zero()
    print(f"residual certificate: {'both conditions vanish exactly through grade ' + str(cm.grade_cap) if ok else 'FAILED'}",
          file=out)
    if model.f_coeffs == BUILTIN_MODELS["duffing"]().f_coeffs and cm.grade_cap >= 5:
        for comp in compare_duffing_reference(cm):
            print("\n".join(comp.lines()), file=out)
    return 0 if ok else 1


def cmd_path(args, out) -> int:
    model = make_model(args, epsilon=args.eps)
    sink = _sink(args, model)
    if args.samples < 2:
        raise UsageError("--samples must be >= 2")
    # the action check needs a dense grid; the output is thinned afterwards
    dense = max(args.samples, 4001)
    if args.full:
        sol = path.full_system_crosscheck(model, args.eps, args.delta, sink=sink,
                                          n_samples=dense)
    else:
        sol = path.reduced_heteroclinic(model, epsilon=args.eps, delta=args.delta, sink=sink,
                                        n_samples=dense, mode=args.mode)
    idx = np.unique(np.linspace(0, dense - 1, args.samples).round().astype(int))
    write_csv(out, ["t", "x", "l1", "y", "l2"], sol.samples[idx])
    return 0


def cmd_action(args, out) -> int:
    model = make_model(args)
    sink = Fraction(_sink(args, model))
    r0 = path.singular_action(model, sink, model.adjacent_saddle(sink))
    cm = path.solve_center_manifold_to_order(model, path.DEFAULT_EPS_ORDER)
    branch = path.zero_energy_branch(cm, cm.complete_eps_order)
    sols = [path.reduced_heteroclinic(model, cm, e, args.delta, sink=sink, branch=branch)
            for e in args.eps]
    positive = [(s.epsilon, s.action) for s in sols if 0 < s.epsilon <= 0.2]
    c2 = (path.fit_eps2(*zip(*positive), r0).coefficient if len(positive) >= 4 else float("nan"))
    write_csv(out, ["epsilon", "R", "R_singular", "eps2_fit", "miss_distance", "H_drift"],
              [(s.epsilon, s.action, r0, c2, s.miss_distance, s.hamiltonian_drift) for s in sols])
    return 0


def _config(args) -> sde.IntegratorConfig:
    return sde.IntegratorConfig(args.step, args.newton_tol, args.newton_max_iters, args.scheme,
                                args.overshoot)


def _ensembles(args):
    cfg = _config(args)
    for eps in args.eps:
        for inv_d in args.invD:
            if not inv_d > 0:
                raise UsageError(f"--invD values must be positive, got {inv_d}")
            model = make_model(args, epsilon=eps, noise_D=1.0 / inv_d)
            yield eps, inv_d, sde.run_ensemble(model, cfg, args.trials, args.seed, args.t_max,
                                               args.workers, start_sink=args.sink)


def cmd_simulate(args, out) -> int:
    rows, raw = [], []
    for eps, inv_d, ens in _ensembles(args):
        rows.append((eps, 1.0 / inv_d, args.trials, ens.mean_T, ens.std_T, ens.timeout_count,
                     args.seed, args.step))
        raw.extend((eps, 1.0 / inv_d, i, t.seed, "timeout" if t.timed_out else
                    "error" if t.error else t.first_passage_time, t.steps_taken)
                   for i, t in enumerate(ens.trials))
    write_csv(out, ["epsilon", "D", "n_trials", "mean_T", "std_T", "timeout_count", "seed", "nu"],
              rows)
    if args.raw:
        with open(args.raw, "w") as fh:
            write_csv(fh, ["epsilon", "D", "trial", "seed", "first_passage_time", "steps"], raw)
    return 0


def cmd_scaling(args, out) -> int:
    model = make_model(args)
    if args.reference:
        missing = [e for e in args.eps if e not in analysis.REFERENCE_LOG10_T]
        if missing or model.name != "duffing":
            raise UsageError(f"--reference has Duffing data only for eps in "
                             f"{sorted(analysis.REFERENCE_LOG10_T)}")
        sims = {e: analysis.reference_fit(e) for e in args.eps}
    else:
        points: dict[float, list] = {e: [] for e in args.eps}
        for eps, inv_d, ens in _ensembles(args):
            points[eps].append((inv_d, math.log10(ens.mean_T)))
        sims = {e: analysis.fit_scaling(p) for e, p in points.items()}
    rows = analysis.compare_table(model, None, args.eps, sims)
    write_csv(out, ["epsilon", "cs_pred", "cs_fit", "cs_stderr", "agree"],
              [(r.epsilon, r.cs_pred, r.cs_fit, r.cs_stderr, r.agree) for r in rows])
    return 0


def cmd_table1(args, out) -> int:
    rows = analysis.table1()
    if args.csv:
        write_csv(out, ["epsilon", "cs_pred", "cs_published", "cs_fit", "cs_stderr", "agree"],
                  [(r.epsilon, r.cs_pred, analysis.TABLE1_REFERENCE[r.epsilon][0] / 100,
                    r.cs_fit, r.cs_stderr, r.agree) for r in rows])
    else:
        print(analysis.render_table1(rows), file=out)
    return 0


def cmd_verify(args, out) -> int:
    from . import acceptance
    results = acceptance.run(args.only, workers=args.workers, seed=args.seed, stream=out)
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"derive": cmd_derive, "path": cmd_path, "action": cmd_action,
            "simulate": cmd_simulate, "scaling": cmd_scaling, "table1": cmd_table1,
            "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    live = args.command == "verify" and not args.output
    buf = sys.stdout if live else io.StringIO()
    try:
        code = COMMANDS[args.command](args, buf)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except COMPUTATION_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ModelError, ValueError, analysis.DegenerateDesign) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if live:
        return code
    text = buf.getvalue()
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
