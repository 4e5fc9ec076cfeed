"""Command-line front end.

Subcommands::

    crnsens simulate      --model REF --N N --t-final T [--n-paths P] [--dump-paths]
    crnsens sensitivity   --model REF --output F --param J --method M --N N --t-final T
                          [--n-samples S] [--h H]
    crnsens scaling-study CONFIG
    crnsens time-study    CONFIG

Common flags: ``--seed``, ``--workers``, ``--out-dir``. ``REF`` is a model
file or ``builtin:<name>``. A study CONFIG may also be a CSV written by an
earlier run; its comment header holds the full configuration.

Exit codes: 1 usage or configuration error, 2 model file error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    DEFAULT_SEED,
    ConfigError,
    load_scaling_config,
    load_time_config,
    scaling_config_lines,
    time_config_lines,
)
from .estimators import EstimatorMethod, relative_metrics
from .model import ModelSyntaxError, SystemInstance, load_network
from .paths import Method, SimulationError, simulate_batch, simulate_direct, simulate_rtc, write_path_csv
from .randomness import StreamKey
from .study import (
    OutputFunction,
    estimate_cell,
    file_header,
    report_csv,
    run_scaling_study,
    run_time_study,
    slopes_csv,
    time_csv,
    time_fit_csv,
    true_sensitivity,
    _csv_text,
)

EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_RUNTIME = 3

SENSITIVITY_COLUMNS = ["model", "output", "method", "param", "N", "T", "Ns", "h", "point",
                       "std_error", "raw_variance", "truth", "rsd", "rb", "re"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (default {DEFAULT_SEED}, or the config's seed)")
    p.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")


def _x0_arg(text):
    try:
        return tuple(Fraction(v.strip()) for v in text.split(","))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad initial concentrations {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crnsens", description="Exact simulation and parametric sensitivity "
                     "estimation for stochastic reaction networks.")
    parser.add_argument("--version", action="version", version=f"crnsens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate paths and summarize the final state")
    p.add_argument("--model", required=True)
    p.add_argument("--N", type=int, required=True, help="system size")
    p.add_argument("--t-final", type=float, required=True)
    p.add_argument("--n-paths", type=int, default=1000)
    p.add_argument("--x0", type=_x0_arg, default=None, help="initial concentrations, comma separated")
    p.add_argument("--method", choices=["direct", "rtc"], default="direct")
    p.add_argument("--dump-paths", action="store_true", help="write one CSV per path")
    _common(p)

    p = sub.add_parser("sensitivity", help="estimate one sensitivity")
    p.add_argument("--model", required=True)
    p.add_argument("--output", required=True, help="e.g. component(1), square(1), sin_scaled(1)")
    p.add_argument("--param", type=int, required=True, help="1-based reaction index")
    p.add_argument("--method", required=True, choices=[m.value for m in EstimatorMethod])
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--t-final", type=float, required=True)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--h", type=float, default=None, help="perturbation (finite differences only)")
    p.add_argument("--x0", type=_x0_arg, default=None)
    p.add_argument("--truth", choices=["auto", "exact", "fluid", "none"], default="auto")
    _common(p)

    p = sub.add_parser("scaling-study", help="estimator metrics over a grid of system sizes")
    p.add_argument("config", type=Path)
    _common(p)

    p = sub.add_parser("time-study", help="estimator variance over a grid of final times")
    p.add_argument("config", type=Path)
    _common(p)
    return parser


def _network(ref):
    try:
        return load_network(ref)
    except KeyError as exc:
        raise ModelSyntaxError(exc.args[0]) from None


def _instance(model, N, x0):
    net = _network(model)
    try:
        return SystemInstance.from_network(net, N, x0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _model_name(ref: str) -> str:
    return ref.split(":", 1)[1] if ref.startswith("builtin:") else Path(ref).stem


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def cmd_simulate(args) -> int:
    if args.n_paths < 1 or args.N < 1 or not args.t_final > 0:
        raise UsageError("N, n-paths and t-final must be positive")
    inst = _instance(args.model, args.N, args.x0)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    method = Method.RTC if args.method == "rtc" else Method.DIRECT
    batch = simulate_batch(inst, [args.t_final], args.n_paths, seed, method=method,
                           workers=args.workers)
    final = batch.final_states().astype(float)
    if args.dump_paths:
        sim = simulate_rtc if method is Method.RTC else simulate_direct
        width = len(str(args.n_paths - 1))
        for i in range(args.n_paths):
            traj = sim(inst, args.t_final, StreamKey(seed, i))
            args.out_dir.mkdir(parents=True, exist_ok=True)
            write_path_csv(traj, args.out_dir / f"path_{i:0{width}d}.csv")
    mean = final.mean(axis=0)
    var = final.var(axis=0, ddof=1) if args.n_paths > 1 else np.zeros_like(mean)
    print(f"# crnsens {__version__} simulate model={args.model} N={args.N} "
          f"t_final={args.t_final!r} n_paths={args.n_paths} seed={seed} method={args.method}")
    print("species,mean,variance")
    for name, m, v in zip(inst.network.species, mean, var):
        print(f"{name},{float(m)!r},{float(v)!r}")
    return 0


def cmd_sensitivity(args) -> int:
    method = EstimatorMethod(args.method)
    if method.is_fd and args.h is None:
        raise UsageError(f"{method.value} requires --h")
    if not method.is_fd and args.h is not None:
        raise UsageError(f"--h is not used by {method.value}")
    if args.n_samples < 2 or args.N < 1 or not args.t_final > 0:
        raise UsageError("N, n-samples and t-final must be positive (n-samples >= 2)")
    try:
        output = OutputFunction.parse(args.output)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    inst = _instance(args.model, args.N, args.x0)
    net = inst.network
    if not 1 <= args.param <= net.n_reactions:
        raise UsageError(f"--param must lie in 1..{net.n_reactions}")
    if output.i >= net.n_species:
        raise UsageError(f"output species index exceeds {net.n_species}")
    j = args.param - 1
    seed = DEFAULT_SEED if args.seed is None else args.seed
    s = estimate_cell(method, inst, output, j, [args.t_final], args.n_samples, seed,
                      h=args.h, workers=args.workers)
    truth, exact = true_sensitivity(inst, output, j, args.t_final, args.truth)
    rsd = rb = re_ = None
    if truth:
        rel = relative_metrics(s, truth)
        rsd = rel.rsd
        if exact:
            rb, re_ = rel.rb, rel.re
    cfg = ["command = sensitivity", f"model = {args.model}", f"output = {output}",
           f"param = {args.param}", f"method = {method.value}", f"N = {args.N}",
           f"t_final = {args.t_final!r}", f"n_samples = {args.n_samples}", f"seed = {seed}"]
    if args.h is not None:
        cfg.append(f"h = {args.h!r}")
    if args.x0 is not None:
        cfg.append("x0 = " + ",".join(str(v) for v in args.x0))
    cfg.append(f"truth = {args.truth}")
    row = [_model_name(args.model), str(output), method.value, args.param, args.N, args.t_final,
           s.n_samples, s.h, s.point, s.std_error, s.sample_variance, truth, rsd, rb, re_]
    text = _csv_text(file_header(cfg), SENSITIVITY_COLUMNS, [row])
    _write(args.out_dir, "sensitivity.csv", text)
    print(f"{method.value}: point={s.point:.6g} se={s.std_error:.3g} var={s.sample_variance:.6g}"
          + (f" truth={truth:.6g}" if truth is not None else "")
          + (f" rsd={rsd:.4g}" if rsd is not None else "")
          + (f" rb={rb:.3g} re={re_:.3g}" if rb is not None else ""))
    return 0


def _with_seed(cfg, seed):
    if seed is None:
        return cfg
    return replace(cfg, seed=seed)


def _absolute_model(cfg):
    if cfg.model.startswith("builtin:"):
        return cfg
    return replace(cfg, model=str(Path(cfg.model).resolve()))


def _load(loader, path):
    try:
        cfg = loader(path)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except ConfigError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    return _absolute_model(cfg)


def format_slope_table(report) -> str:
    lines = [f"{'method':<10} {'slope':>9} {'intercept':>10} {'points':>6}"]
    for m, (slope, icpt, k) in report.slopes.items():
        lines.append(f"{m.value:<10} {slope:>9.4f} {icpt:>10.4f} {k:>6d}")
    return "\n".join(lines)


def cmd_scaling_study(args) -> int:
    cfg = _with_seed(_load(load_scaling_config, args.config), args.seed)
    _network(cfg.model)
    lines = scaling_config_lines(cfg)
    report = run_scaling_study(cfg, workers=args.workers)
    name = _model_name(cfg.model)
    _write(args.out_dir, "report.csv", report_csv(report, lines, name))
    _write(args.out_dir, "slopes.csv", slopes_csv(report, lines))
    if report.slopes:
        print(format_slope_table(report))
    else:
        print("single system size: no slopes fitted")
    return 0


def cmd_time_study(args) -> int:
    cfg = _with_seed(_load(load_time_config, args.config), args.seed)
    _network(cfg.model)
    lines = time_config_lines(cfg)
    report = run_time_study(cfg, workers=args.workers)
    name = _model_name(cfg.model)
    _write(args.out_dir, "time_study.csv", time_csv(report, lines, name))
    _write(args.out_dir, "time_fit.csv", time_fit_csv(report, lines))
    if report.fits:
        print(f"{'method':<10} {'slope':>12} {'intercept':>12} {'r2':>8}")
        for m, (a, b, r2, _) in report.fits.items():
            print(f"{m.value:<10} {a:>12.6g} {b:>12.6g} {r2:>8.4f}")
    else:
        print("single final time: no fit")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "sensitivity": cmd_sensitivity,
    "scaling-study": cmd_scaling_study,
    "time-study": cmd_time_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers < 1:
        parser.error("--workers must be at least 1")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"crnsens: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelSyntaxError as exc:
        print(f"crnsens: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"crnsens: cannot read model: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (SimulationError, ValueError, LookupError, ArithmeticError, OSError) as exc:
        print(f"crnsens: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
