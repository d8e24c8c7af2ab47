"""Command-line entry point: ``fedcontrib {run,sweep,gen-data,check-config}``.

Exit codes: 0 success, 2 configuration error, 3 runtime or capacity error,
4 reconciliation failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, SyntheticSource, parse_config, preset_path
from .data import write_idx
from .errors import ConfigError, FedContribError, IdxParseError, ReconciliationError
from .experiment import load_data, run_experiment, sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_RECONCILIATION = 4

THREADS_ENV = "FEDCONTRIB_THREADS"

log = logging.getLogger("fedcontrib")


def _resolve_config(arg: str) -> Path:
    """A file path, or ``preset:<name>`` for a config shipped with the package."""
    if arg.startswith("preset:"):
        return preset_path(arg.split(":", 1)[1])
    return Path(arg)


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = parse_config(_resolve_config(args.config))
    if args.seed_override is not None:
        cfg = cfg.with_overrides(seeds=(args.seed_override,))
    if getattr(args, "out", None):
        cfg = cfg.with_overrides(output_dir=args.out)
    return cfg


def _jobs(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return n
    return args.jobs if args.jobs is not None else cfg.jobs


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    result = run_experiment(cfg, cfg.output_dir, jobs=_jobs(args, cfg))
    for m, report in result.aggregate.items():
        shares = ", ".join(f"{cid}: {s:.4f}" for cid, s in zip(report.client_ids, report.scores))
        flag = "" if report.normalized else " (degenerate, raw gains shown)"
        log.info("%-5s %s%s", m, shares, flag)
    for m, e in result.aggregate_errors.items():
        log.info("error vs naive  %-5s %s", m, "n/a" if e is None else f"{e:.4f} ({100 * e:.2f}%)")
    log.info("%d FL trainings; outputs in %s", result.trainings, cfg.output_dir)
    if not result.reconciliation_passed:
        log.error("overhead reconciliation failed; see %s/reconciliation.json", cfg.output_dir)
        return EXIT_RECONCILIATION
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args)
    values = [int(v) for v in args.values.split(",")] if args.values else None
    result = sweep(cfg, cfg.output_dir, values=values, jobs=_jobs(args, cfg))
    for m, e in result.summary().items():
        log.info("mean error vs naive  %-5s %s", m, "n/a" if e is None else f"{e:.4f} ({100 * e:.2f}%)")
    if not all(c.result.reconciliation_passed for c in result.cells):
        return EXIT_RECONCILIATION
    return EXIT_OK


def cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if not isinstance(cfg.dataset, SyntheticSource):
        raise ConfigError("gen-data needs a synthetic dataset section", "dataset.source")
    pool, validation = load_data(cfg)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(pool, out / "train-images-idx3-ubyte", out / "train-labels-idx1-ubyte")
    write_idx(validation, out / "test-images-idx3-ubyte", out / "test-labels-idx1-ubyte")
    log.info("wrote %d training and %d test samples to %s", len(pool), len(validation), out)
    return EXIT_OK


def cmd_check_config(args: argparse.Namespace) -> int:
    cfg = _load(args)
    log.info("ok: %d clients, methods %s, seeds %s, %d rounds",
             len(cfg.clients), ",".join(cfg.methods), list(cfg.seeds), cfg.hyper.rounds)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedcontrib",
                                     description="Client contribution estimation for federated learning.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="experiment JSON file, or preset:<name> for a bundled preset")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--seed-override", type=int, help="replace the config's seed list with this one seed")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    common.add_argument("--jobs", type=int, help=f"parallel trainings (env {THREADS_ENV} takes precedence)")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one experiment").set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", parents=[common], help="grid over the first two clients' sample counts")
    p.add_argument("--values", help="comma-separated sample counts (default: options.sweep_values)")
    p.set_defaults(func=cmd_sweep)
    sub.add_parser("gen-data", parents=[common],
                   help="write the synthetic dataset as IDX files").set_defaults(func=cmd_gen_data)
    sub.add_parser("check-config", parents=[common],
                   help="validate a config and exit").set_defaults(func=cmd_check_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except ReconciliationError as exc:
        log.error("reconciliation failed: %s", exc)
        return EXIT_RECONCILIATION
    except (IdxParseError, OSError, FedContribError, FloatingPointError) as exc:
        log.error("error: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
