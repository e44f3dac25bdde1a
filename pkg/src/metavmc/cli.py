"""Command-line entry point: ``metavmc <subcommand>``.

Exit codes: 0 success, 1 failed check or module error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, MetaVmcError
from .harness import (
    ExperimentConfig, RunDir, emit_curves, evaluate, load_curves, mean_curve, meta_train, run_experiment,
    run_quadratic_suite, sample_tasks,
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def _add_config_options(p):
    p.add_argument("--config", type=Path, help="JSON experiment config; flags override its fields")
    g = p.add_argument_group("config overrides")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "algos":
            g.add_argument(flag, nargs="+", default=None)
        elif f.name == "n_hidden":
            g.add_argument(flag, type=int, default=None)
        else:
            default = f.default
            g.add_argument(flag, type=type(default), default=None)


def _config_from(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    return cfg.validate()


def _cmd_sample_tasks(args):
    sample_tasks(_config_from(args), args.out)
    print(f"tasks written to {args.out}")


def _cmd_meta_train(args):
    run = RunDir(args.out)
    if args.config or not run.path("config.json").exists():
        sample_tasks(_config_from(args), args.out)
    meta_train(run, args.workers)
    print(f"initialisations written to {run.path('init')}")


def _cmd_evaluate(args):
    evaluate(RunDir(args.run), args.workers)
    print(f"curves written to {Path(args.run) / 'curves'}")


def _cmd_emit(args):
    for path in emit_curves(RunDir(args.run), figures=not args.no_figures):
        print(path)


def _cmd_run(args):
    run = run_experiment(_config_from(args), args.out, args.workers, figures=not args.no_figures)
    cfg = run.config()
    for algo in cfg.algos:
        mean, _ = mean_curve(load_curves(run, algo))
        print(f"{algo:9s} ratio@0={mean[0]:.4f} ratio@{min(cfg.t, mean.size - 1)}={mean[min(cfg.t, mean.size - 1)]:.4f} "
              f"final={mean[-1]:.4f}")


def _cmd_panels(args):
    from .plotting import plot_sigma_panels

    panels = {}
    for d in args.runs:
        run = RunDir(d)
        cfg = run.config()
        panels[cfg.sigma] = {a: mean_curve(load_curves(run, a)) for a in cfg.algos}
    print(plot_sigma_panels(panels, args.out, args.iters))


def _cmd_quad_verify(args):
    checks = run_quadratic_suite(args.ensemble)
    for c in checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: error={c.error:.3e} (tol {c.tolerance:.0e})")
    if args.report:
        Path(args.report).write_text(json.dumps([dataclasses.asdict(c) for c in checks], indent=1) + "\n")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK


def build_parser():
    parser = argparse.ArgumentParser(prog="metavmc", description="Meta-learned VMC initialisations for Max-Cut ensembles.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-tasks", help="fix base graph and evaluation tasks")
    _add_config_options(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_sample_tasks)

    p = sub.add_parser("meta-train", help="produce initialisations (meta-train, pretrain, random)")
    _add_config_options(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_meta_train)

    p = sub.add_parser("evaluate", help="fine-tune every initialisation on the test tasks")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("emit", help="write mean curves, combined CSV and figures")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_emit)

    p = sub.add_parser("run", help="sample-tasks + meta-train + evaluate + emit")
    _add_config_options(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("panels", help="render one learning-curve panel per sigma from several runs")
    p.add_argument("--runs", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--iters", type=int, default=None)
    p.set_defaults(func=_cmd_panels)

    p = sub.add_parser("quad-verify", help="closed-form checks on the quadratic toy ensemble")
    p.add_argument("ensemble", nargs="?", type=Path, help="ensemble JSON (tasks, probs, beta)")
    p.add_argument("--report", type=Path)
    p.set_defaults(func=_cmd_quad_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args) or EXIT_OK
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MetaVmcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
