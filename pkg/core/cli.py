"""
Command-line interface

    run      --config <file> --out <dir> [--seeds N] [--workers K] [--verbose]
    replay   --trace <file>
    validate --scenario <file>
    sample   --config <file> --seed S --out <file> [--channels <file>]

Exit status: 0 success, 1 configuration or input error, 2 runtime error.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import List, Optional

from core import __version__
from core.config import ConfigError, load_config
from core.experiment import check_solvers, replay, run_experiment
from core.net_model import sample_channels
from core.scenario import Scenario, sample_scenario, validate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='semqoe',
        description='Multi-cell semantic communication resource allocation experiments')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run a Monte Carlo sweep')
    run.add_argument('--config', required=True, help='Experiment config (.json or .toml)')
    run.add_argument('--out', required=True, help='Output directory')
    run.add_argument('--seeds', type=int, default=None, help='Override the seed count')
    run.add_argument('--workers', type=int, default=None, help='Worker processes (0 = auto)')
    run.add_argument('--verbose', action='store_true', help='Debug logging')

    rep = sub.add_parser('replay', help='Verify a matching trace')
    rep.add_argument('--trace', required=True, help='Trace file (.jsonl)')
    rep.add_argument('--verbose', action='store_true')

    val = sub.add_parser('validate', help='Check a scenario document')
    val.add_argument('--scenario', required=True, help='Scenario JSON')
    val.add_argument('--verbose', action='store_true')

    smp = sub.add_parser('sample', help='Sample a scenario (and its channels) to JSON')
    smp.add_argument('--config', required=True, help='Experiment config (.json or .toml)')
    smp.add_argument('--seed', type=int, default=0)
    smp.add_argument('--out', required=True, help='Scenario JSON to write')
    smp.add_argument('--channels', default=None, help='Optional channel realization JSON to write')
    smp.add_argument('--verbose', action='store_true')
    return parser


def _run(args) -> int:
    config = load_config(args.config)
    if args.seeds is not None:
        if args.seeds < 0:
            raise ConfigError("--seeds must be non-negative")
        config = replace(config, seeds=args.seeds)
    check_solvers(config.solvers)
    report = run_experiment(config, args.out, workers=args.workers)
    logger.info(f"Wrote {len(report.runs)} run rows to {report.runs_path}")
    return EXIT_OK


def _replay(args) -> int:
    try:
        report = replay(args.trace)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"Could not read trace {args.trace}: {exc}") from exc
    if report.verified:
        print(f"verified ({report.steps} swaps)")
        return EXIT_OK
    print(f"divergence at step {report.divergent_step}: {report.message}")
    return EXIT_RUNTIME


def _validate(args) -> int:
    try:
        scenario = Scenario.from_json(args.scenario)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"Could not read scenario {args.scenario}: {exc}") from exc
    violations = validate(scenario)
    print(json.dumps([v.to_dict() for v in violations], indent=2))
    return EXIT_OK if not violations else EXIT_CONFIG


def _sample(args) -> int:
    config = load_config(args.config)
    scenario = sample_scenario(config.scenario, args.seed)
    scenario.to_json(args.out)
    logger.info(f"Scenario written to {args.out}")
    if args.channels:
        sample_channels(scenario, args.seed).to_json(args.channels)
        logger.info(f"Channel realization written to {args.channels}")
    return EXIT_OK


COMMANDS = {'run': _run, 'replay': _replay, 'validate': _validate, 'sample': _sample}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(getattr(args, 'verbose', False))
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except Exception as exc:
        logger.exception(f"Run failed: {exc}")
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
