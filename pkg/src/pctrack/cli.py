"""Command-line entry point: ``pctrack run | sweep | weights | reproduce``.

Exit codes: 0 on success, 1 when a run fails at runtime, 2 for usage and
configuration errors.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, apply_override, build_config, load_toml, preset
from .estimators import InvalidWindow, alpha_weights, beta_weights
from .harness import default_jobs, emit_csv, monte_carlo, summarize

SEED_ENV = "TVOPT_SEED"

# config field -> flag, so validation messages point at what the user typed
_FIELD_FLAGS = {
    "scenario": "--scenario",
    "methods": "--method",
    "h": "--h",
    "hs": "--h",
    "eta": "--eta",
    "t_max": "--t-max",
    "reps": "--reps",
    "seed": "--seed",
    "jobs": "--jobs",
    "terminal": "--terminal",
    "params.c_m": "--c-m",
    "params.c_p": "--c-p",
}


class UsageError(Exception):
    pass


def _field_flag(message: str) -> str:
    key = message.split(":", 1)[0].strip()
    flag = _FIELD_FLAGS.get(key) or _FIELD_FLAGS.get(key.split(".")[0])
    if flag:
        return f"{flag} ({key})"
    return f"--set {key}" if "." in key else key


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("must be in [0, 2^64)")
    return v


def _add_experiment_flags(p: argparse.ArgumentParser, sweep: bool) -> None:
    p.add_argument("--scenario", choices=["least-squares", "object-tracking", "performative", "quadratic"],
                   help="scenario to track (default: least-squares, or the config file's)")
    p.add_argument("--method", choices=["gd", "pc", "both"], default=None,
                   help="update rule(s) to run (default: both)")
    p.add_argument("--h", type=_float_list if sweep else float, default=None,
                   help="step size" + (" list, comma separated" if sweep else "") + " (required unless in --config)")
    p.add_argument("--eta", type=float, default=None,
                   help="fixed learning rate for every method (default: per-scenario rule)")
    p.add_argument("--t-max", type=float, default=None, help="time horizon (default: 3.0)")
    p.add_argument("--reps", type=_positive_int, default=None, help="Monte Carlo replicates (default: 10)")
    p.add_argument("--noise-free", action="store_true",
                   help="use exact derivatives instead of estimates (default: off)")
    p.add_argument("--c-m", type=float, default=None, help="level window constant (default: 1.0)")
    p.add_argument("--c-p", type=float, default=None, help="slope window constant (default: 1.0)")
    p.add_argument("--terminal", choices=["tail", "final"], default=None,
                   help="terminal error: mean of the last 5%% of steps or the last value (default: tail)")
    _add_common_flags(p)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=None,
                   help=f"master seed (default: ${SEED_ENV}, else 0)")
    p.add_argument("--config", type=Path, default=None, help="TOML config file (default: none)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field by dotted path, e.g. params.n_samples=400 (repeatable; default: none)")
    p.add_argument("--out", type=Path, default=None,
                   help="output directory (default: ./out/<subcommand>-<timestamp>)")
    p.add_argument("--jobs", type=_positive_int, default=None,
                   help="worker processes (default: available processors)")
    p.add_argument("-v", "--verbose", action="store_true", help="log run failures and ridge use (default: off)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pctrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one step size, one or both methods")
    _add_experiment_flags(p, sweep=False)

    p = sub.add_parser("sweep", help="grid over step sizes with rate fits")
    _add_experiment_flags(p, sweep=True)

    p = sub.add_parser("weights", help="print moving-average weights")
    p.add_argument("--scheme", choices=["alpha", "beta"], required=True, help="weight family (required)")
    p.add_argument("--m", type=int, default=None, help="alpha window length (required for alpha)")
    p.add_argument("--p", type=int, default=None, help="beta window length (required for beta)")
    p.add_argument("--h", type=float, default=1.0, help="sampling step for beta weights (default: 1.0)")

    p = sub.add_parser("reproduce", help="rerun a simulation figure")
    p.add_argument("figure", help="figure to rerun: regression, object-tracking or performative")
    p.add_argument("--h", type=_float_list, default=None, help="comma-separated step sizes (default: 1e-2,3e-3,1e-3)")
    p.add_argument("--t-max", type=float, default=None, help="time horizon (default: 3.0)")
    p.add_argument("--reps", type=_positive_int, default=None, help="Monte Carlo replicates (default: 10)")
    _add_common_flags(p)
    return parser


def _effective_data(args, base: dict) -> dict:
    data = dict(base)
    if args.config is not None:
        for k, v in load_toml(args.config).items():
            if isinstance(v, dict) and isinstance(data.get(k), dict):
                data[k] = {**data[k], **v}
            else:
                data[k] = v
    for assignment in args.set:
        apply_override(data, assignment)
    flags = {
        "scenario": getattr(args, "scenario", None),
        "t_max": args.t_max,
        "reps": args.reps,
        "terminal": getattr(args, "terminal", None),
    }
    for k, v in flags.items():
        if v is not None:
            data[k] = v
    if args.h is not None:
        data["hs"] = args.h if isinstance(args.h, list) else [args.h]
    method = getattr(args, "method", None)
    if method is not None:
        data["methods"] = ["gd", "pc"] if method == "both" else [method]
    if getattr(args, "eta", None) is not None:
        data["eta"] = {m: args.eta for m in data.get("methods", ["gd", "pc"])}
    if getattr(args, "noise_free", False):
        data["exact"] = True
    params = dict(data.get("params", {}))
    for flag, key in (("c_m", "c_m"), ("c_p", "c_p")):
        v = getattr(args, flag, None)
        if v is not None:
            params[key] = v
    if params:
        data["params"] = params
    if args.seed is not None:
        data["seed"] = args.seed
    elif "seed" not in data and os.environ.get(SEED_ENV):
        try:
            data["seed"] = _seed(os.environ[SEED_ENV])
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"${SEED_ENV}: {exc}") from None
    data["jobs"] = args.jobs if args.jobs is not None else data.get("jobs", default_jobs())
    return data


def _out_dir(args, data: dict) -> Path:
    if args.out is not None:
        return args.out
    if "out" in data:
        return Path(data["out"])
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path("out") / f"{args.command}-{stamp}"


def _execute(args, data: dict, prefix: str) -> int:
    config = build_config(data)
    out = _out_dir(args, data)
    effective = {**config.as_dict(), "out": str(out)}
    print("effective config: " + json.dumps(effective, sort_keys=True, default=str), file=sys.stderr)
    results = monte_carlo(config)
    trace, summary_path = emit_csv(results, out, prefix, config.terminal)
    summary = summarize(results, config.terminal)
    print(f"{'method':<6} {'h':>10} {'terminal_error':>16} {'std':>12} {'reps':>5}")
    for r in summary.rows:
        print(f"{r['method']:<6} {r['h']:>10.4g} {r['terminal_error_mean']:>16.6g} "
              f"{r['terminal_error_std']:>12.4g} {r['reps']:>5d}")
    if len(config.hs) < 3:
        if args.command != "run":
            print("warning: fewer than 3 step sizes, no rate slope fitted", file=sys.stderr)
    else:
        for method, (slope, se) in sorted(summary.slopes.items()):
            print(f"slope {method}: {slope:.4f} +/- {se:.4f}")
    print(f"wrote {trace}\nwrote {summary_path}", file=sys.stderr)
    failed = [(k, r.rep, r.failure) for k, runs in results.items() for r in runs if r.failed]
    for (method, h), rep, why in failed:
        print(f"error: run {method} h={h:g} rep={rep} failed at {why}", file=sys.stderr)
    return 1 if failed else 0


def cmd_run(args) -> int:
    data = _effective_data(args, {})
    if "hs" not in data:
        raise UsageError("--h: a step size is required")
    if len(data["hs"]) != 1:
        raise UsageError("--h: run takes a single step size; use sweep for several")
    return _execute(args, data, "run")


def cmd_sweep(args) -> int:
    data = _effective_data(args, {})
    if "hs" not in data:
        raise UsageError("--h: at least one step size is required")
    return _execute(args, data, "sweep")


def cmd_reproduce(args) -> int:
    try:
        base = preset(args.figure)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    return _execute(args, _effective_data(args, base), args.figure)


def cmd_weights(args) -> int:
    np.set_printoptions(precision=17)
    if args.scheme == "alpha":
        if args.m is None:
            raise UsageError("--m: required for the alpha scheme")
        try:
            scheme = alpha_weights(args.m)
        except InvalidWindow as exc:
            raise UsageError(f"--m: {exc}") from None
        names = ("sum(a) - 1", "sum(i*a)")
    else:
        if args.p is None:
            raise UsageError("--p: required for the beta scheme")
        if not args.h > 0:
            raise UsageError(f"--h: must be positive, got {args.h}")
        try:
            scheme = beta_weights(args.p, args.h)
        except InvalidWindow as exc:
            raise UsageError(f"--p: {exc}") from None
        names = ("sum(b)", "sum(j*b) + 1/h")
    print(" ".join(repr(float(w)) for w in scheme.weights))
    for name, val in zip(names, scheme.residuals()):
        print(f"residual {name}: {val:.3e}")
    return 0


_COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "weights": cmd_weights, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.exit(2, f"pctrack {args.command}: error: {exc}\n")
    except ConfigError as exc:
        parser.exit(2, f"pctrack {args.command}: error: {_field_flag(str(exc))}: "
                       f"{str(exc).split(':', 1)[-1].strip()}\n")
    except (OSError, ArithmeticError, RuntimeError) as exc:
        print(f"pctrack {args.command}: runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
