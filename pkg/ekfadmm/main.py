# File: ekfadmm/main.py
"""
Command-line driver.

    ekfadmm run <preset|config.toml> [--filter --lam --rho --n-a --alpha-forget --naive --N --seed --out]
    ekfadmm sweep <preset> [--seeds 0..19 --workers --filter --N --out]
    ekfadmm compare <preset> [--filters f1,f2 --seeds --N --workers --out]
    ekfadmm selftest [--quick]

Exit status: 0 on success, 1 on run failures, 2 on usage or configuration errors.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import structlog

from ekfadmm import report
from ekfadmm.config import ConfigurationError, Settings, get_settings, load_experiment_config
from ekfadmm.core_models import ExperimentConfig
from ekfadmm.factories.learner_engine import LEARNER_STRATEGIES
from ekfadmm.runner import PRESETS, apply_overrides, compare_filters, preset_config, run_experiment
from ekfadmm.selftest import run_selftest
from ekfadmm.sweep import compare, run_sweep
from ekfadmm.utils import parse_list, parse_seeds

log = structlog.get_logger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def configure_logging(settings: Settings) -> None:
    """structlog through stdlib logging on stderr: console output by default, JSON lines when log_json is set."""
    level = getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(format="%(message)s", stream=sys.stderr)
    logging.getLogger().setLevel(level)
    processors = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
    ]
    if settings.log_json:
        processors += [structlog.processors.format_exc_info, structlog.processors.JSONRenderer()]
    else:
        processors.append(structlog.dev.ConsoleRenderer(colors=False))
    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=False,
    )


# --- Parser ---

def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--filter", choices=sorted(LEARNER_STRATEGIES), help="Online learner to run.")
    p.add_argument("--lam", type=float, help="Regularization weight lambda.")
    p.add_argument("--rho", type=float, help="ADMM penalty rho.")
    p.add_argument("--n-a", dest="n_a", type=int, help="Inner ADMM iterations per sample.")
    p.add_argument("--alpha-forget", dest="alpha_forget", type=float, help="Forgetting factor in (0, 1].")
    p.add_argument("--naive", action="store_true", help="Use the augmented-measurement step instead of the fast one.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ekfadmm", description="Online learning with EKF-ADMM.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one experiment.")
    run.add_argument("target", help=f"Preset ({', '.join(PRESETS)}) or path to a TOML config file.")
    run.add_argument("--N", type=int, help="Number of samples.")
    run.add_argument("--seed", type=int, help="PRNG seed.")
    run.add_argument("--out", type=Path, help="Output directory.")
    _add_overrides(run)

    sweep = sub.add_parser("sweep", help="Repeat a preset over seeds and report mean (std).")
    sweep.add_argument("preset", help=f"One of: {', '.join(PRESETS)}.")
    sweep.add_argument("--seeds", default="0..19", help="Range a..b (inclusive) or comma list.")
    sweep.add_argument("--workers", type=int, help="Parallel worker processes.")
    sweep.add_argument("--N", type=int, help="Number of samples per run.")
    sweep.add_argument("--out", type=Path, help="Output directory.")
    _add_overrides(sweep)

    cmp_ = sub.add_parser("compare", help="Run several filters on the same seeded data.")
    cmp_.add_argument("preset", help=f"One of: {', '.join(PRESETS)}.")
    cmp_.add_argument("--filters", help="Comma-separated filter names (default: the preset's line-up).")
    cmp_.add_argument("--seeds", default="0..4", help="Range a..b (inclusive) or comma list.")
    cmp_.add_argument("--workers", type=int, help="Parallel worker processes.")
    cmp_.add_argument("--N", type=int, help="Number of samples per run.")
    cmp_.add_argument("--out", type=Path, help="Output directory.")

    selftest = sub.add_parser("selftest", help="Run the oracle-equivalence suites.")
    selftest.add_argument("--quick", action="store_true", help="Reduced case counts.")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "filter": args.filter,
        "lam": args.lam,
        "rho": args.rho,
        "n_a": args.n_a,
        "alpha_forget": args.alpha_forget,
        "naive": args.naive,
    }


def _resolve_run_config(args: argparse.Namespace) -> ExperimentConfig:
    target = Path(args.target)
    if args.target not in PRESETS and (target.suffix == ".toml" or target.is_file()):
        config = load_experiment_config(target)
        return apply_overrides(config, N=args.N, seed=args.seed, output_dir=args.out, **_overrides(args))
    return preset_config(
        args.target, N=args.N, seed=args.seed or 0, output_dir=args.out, **_overrides(args)
    )


# --- Commands ---

def _cmd_run(args: argparse.Namespace) -> int:
    config = _resolve_run_config(args)
    result = run_experiment(config)
    sys.stdout.write(report.format_summary(result.summary))
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    seeds = _seeds(args.seeds)
    out = args.out or get_settings().output_root / f"{args.preset}-sweep"
    config = preset_config(args.preset, N=args.N, output_dir=out, **_overrides(args))
    row = run_sweep(config, seeds, out, args.workers)
    sys.stdout.write(report.format_sweep_table([row]))
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    seeds = _seeds(args.seeds)
    filters = parse_list(args.filters) if args.filters else compare_filters(args.preset)
    unknown = [f for f in filters if f not in LEARNER_STRATEGIES]
    if not filters or unknown:
        raise ConfigurationError(
            f"filters: unknown filter(s) {unknown}; valid filters: {', '.join(sorted(LEARNER_STRATEGIES))}"
        )
    out = args.out or get_settings().output_root / f"{args.preset}-compare"
    rows = compare(args.preset, filters, seeds, out, N=args.N, workers=args.workers)
    sys.stdout.write(report.format_sweep_table(rows))
    return EXIT_OK


def _cmd_selftest(args: argparse.Namespace) -> int:
    results = run_selftest(quick=args.quick)
    for r in results:
        sys.stdout.write(r.line() + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


def _seeds(text: str) -> List[int]:
    try:
        return parse_seeds(text)
    except ValueError as e:
        raise ConfigurationError(f"seeds: {e}") from e


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "compare": _cmd_compare, "selftest": _cmd_selftest}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Parses argv, runs one subcommand and returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    configure_logging(get_settings())
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        log.error("Invalid configuration", error=str(e))
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except Exception as e:
        log.exception("Command failed", command=args.command)
        sys.stderr.write(f"error: {e}\n")
        return EXIT_FAILURE


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
