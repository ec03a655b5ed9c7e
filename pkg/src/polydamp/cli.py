"""Command-line front end.

Exit codes: 0 on success, 1 for invalid input (arguments, config or
signal files), 2 for runtime or numerical failures.

Frequencies are angular, in radians per time unit; the whiteness test uses
the Fourier bins ``2*pi*k/N``.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .crlb import PARAM_NAMES, active_mask, crlb_diag, fisher_information
from .errors import PolydampError
from .experiment import (
    PROFILE_FULL,
    run_montecarlo,
    simulate_record,
    summarize,
    write_outputs,
)
from .fileio import SignalFileError, format_signal, read_signal, write_report, write_signal
from .pipeline import run_pipeline
from .pseudo_true import brute_force_cisoid, brute_force_decay, pseudo_true_cisoid, pseudo_true_lorentzian
from .signal_model import ComponentParams, TimeGrid

log = logging.getLogger("polydamp")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, out_help: str):
    p.add_argument("--config", type=Path, help="experiment config (YAML); defaults to the three-line test signal")
    p.add_argument("--seed", type=int, help="master seed, overrides the config")
    p.add_argument("--out", type=Path, help=out_help)
    p.add_argument("--alpha", type=float, help="significance level of the whiteness test")
    p.add_argument("--neighborhood-width", type=int, dest="half_width",
                   help="half-width W of the test neighbourhood, in Fourier bins")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polydamp", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthesize one noisy record")
    _common(p, "signal CSV to write (default: stdout)")
    p.add_argument("--noise-variance", type=float,
                   help="noise variance (default: first entry of the config; 0 allowed)")

    p = sub.add_parser("estimate", help="estimate and classify the components of a record")
    p.add_argument("signal", type=Path, help="signal CSV (index,t,re,im)")
    _common(p, "output directory for report.yaml and residual.csv (default: report)")

    p = sub.add_parser("montecarlo", help="repeat simulate+estimate over noise levels")
    _common(p, "output directory (default: the config's output_dir)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--full", action="store_true", help=f"{PROFILE_FULL} repetitions per noise level")
    p.add_argument("--repetitions", type=int, help="repetitions per noise level")
    p.add_argument("--svg", action="store_true", help="write figures as SVG instead of PNG")

    p = sub.add_parser("pseudotrue", help="limits of mismatched single-line fits")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--omega", type=float, default=1.5)
    p.add_argument("--beta", type=float, default=1.0 / 150.0)
    p.add_argument("--gamma", type=float, default=1e-5)
    p.add_argument("--n", type=int, default=200, help="samples on t = 0, 1, ..., n-1")
    p.add_argument("--oracle", action="store_true", help="also report brute-force minimizers")
    p.add_argument("--out", type=Path, help="CSV file (default: stdout)")

    p = sub.add_parser("crlb", help="root Cramér-Rao bounds for the configured components")
    _common(p, "CSV file (default: stdout)")
    p.add_argument("--noise-variance", type=float, help="single noise variance (default: the config's list)")
    return parser


def _load_config(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.section6_config()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    try:
        test = cfg.test
        if getattr(args, "alpha", None) is not None:
            test = replace(test, alpha=args.alpha)
        if getattr(args, "half_width", None) is not None:
            test = replace(test, half_width=args.half_width)
        if test != cfg.test:
            changes["test"] = test
        return cfg.with_overrides(**changes) if changes else cfg
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(text: str, path: Path | None):
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    sigma2 = cfg.noise_variances[0] if args.noise_variance is None else args.noise_variance
    if not (sigma2 >= 0.0 and math.isfinite(sigma2)):
        raise UsageError("noise variance must be non-negative")
    signal, truth = simulate_record(cfg, sigma2, cfg.seed)
    meta = {"seed": cfg.seed}
    for k, c in enumerate(truth):
        meta[f"component{k}"] = (
            f"class={c.model_class.label} r={c.r!r} phi={c.phi!r} omega={c.omega!r} "
            f"beta={c.beta!r} gamma={c.gamma!r}"
        )
    _emit(format_signal(signal, meta), args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    signal, _ = read_signal(args.signal)
    report = run_pipeline(signal, cfg.pipeline_config())
    out = args.out or Path("report")
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / "report.yaml", report)
    write_signal(out / "residual.csv", report.residual)
    for c in report.components:
        p = c.params
        print(f"{p.model_class.label:<10} r={p.r:.6g} phi={p.phi:.6g} omega={p.omega:.6g} "
              f"beta={p.beta:.6g} gamma={p.gamma:.6g}")
    print(f"steps executed: {report.steps_executed}; noise variance estimate: "
          f"{report.noise_variance_estimate:.6g}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    from .plotting import render_all

    cfg = _load_config(args)
    reps = args.repetitions or (PROFILE_FULL if args.full else None)
    if reps is not None:
        try:
            cfg = cfg.with_overrides(repetitions=reps)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    out = args.out or Path(cfg.output_dir)

    def progress(done, total):
        if done % max(1, total // 20) == 0 or done == total:
            log.info("%d/%d repetitions", done, total)

    outcomes = run_montecarlo(cfg, args.workers, progress)
    paths = write_outputs(out, cfg, outcomes)
    rows = summarize(cfg, outcomes)
    paths += render_all(out, rows, outcomes, "svg" if args.svg else "png")
    for r in rows:
        print(f"sigma2={r.sigma2:g} component {r.component + 1} ({r.true_class.label}): "
              f"class rate {r.class_rate:.3f}, fully correct {r.run_rate:.3f}, failed {r.failed}")
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def cmd_pseudotrue(args) -> int:
    try:
        psi = ComponentParams(args.r, args.phi, args.omega, args.beta, args.gamma)
        grid = TimeGrid.uniform(args.n)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cis = pseudo_true_cisoid(psi, grid)
    lor = pseudo_true_lorentzian(psi, grid)
    head = ["template", "r0", "phi0", "omega0", "beta0", "bracket_lo", "bracket_hi"]
    rows = [
        ["cisoid", cis.r0, cis.phi0, cis.omega0, "", "", ""],
        ["lorentzian", lor.r0, lor.phi0, lor.omega0, lor.beta0, *lor.bracket],
    ]
    if args.oracle:
        head.append("oracle")
        rows[0].append(repr(brute_force_cisoid(psi, grid)))
        rows[1].append(repr(brute_force_decay(psi, grid)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_crlb(args) -> int:
    cfg = _load_config(args)
    rng = np.random.default_rng(cfg.seed)
    truth = cfg.draw_components(rng)
    if not truth:
        raise UsageError("the config has no components")
    levels = cfg.noise_variances if args.noise_variance is None else (args.noise_variance,)
    grid = cfg.grid.build()
    mask = active_mask([c.model_class for c in truth])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sigma2", "seed", "component", "class", *[f"root_crlb_{n}" for n in PARAM_NAMES]])
    for s2 in levels:
        try:
            var = iter(crlb_diag(fisher_information(truth, grid, s2), mask))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        for k, c in enumerate(truth):
            vals = [repr(math.sqrt(next(var))) if mask[5 * k + i] else "nan" for i in range(5)]
            w.writerow([repr(float(s2)), cfg.seed, k, c.model_class.label, *vals])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "montecarlo": cmd_montecarlo,
    "pseudotrue": cmd_pseudotrue,
    "crlb": cmd_crlb,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (cfgmod.ConfigError, SignalFileError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (PolydampError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
