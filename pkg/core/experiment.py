"""
Experiment Runner

Monte Carlo sweeps over one scenario axis. Every (axis value, seed) point
samples a scenario and a channel realization, runs each requested solver
and reports overall QoE, served users and iterations. Points fan out over
a process pool; rows are written in a fixed order so identical configs
produce identical files.
"""

import json
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, replace
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
from scipy.stats import t as student_t

from core.baselines import (
    exhaustive_oracle, no_cooperation_mode, nominal_requirements, random_matching, sr_max_mode, upper_bound,
)
from core.config import AccuracyConfig, ConfigError, ExperimentConfig, ScenarioConfig
from core.evaluator import NetworkEvaluator, ObjectiveKind
from core.matching import (
    Matching, MatchingResult, ReplayReport, SwapRecord, replay_swaps, run_algorithm1,
)
from core.net_model import sample_channels
from core.scenario import Scenario, sample_scenario
from core.semantic_model import load_tables
from core.symbol_search import SymbolSearch

logger = logging.getLogger(__name__)

SOLVERS = ('qoe_max', 'sr_max', 'random', 'no_coop', 'oracle', 'upper_bound')
MATCHING_SOLVERS = ('qoe_max', 'sr_max', 'no_coop')
INTEGER_AXES = ('n_channels', 'n_si', 'n_bi', 'n_cells')

RUN_COLUMNS = ['solver', 'axis_name', 'axis_value', 'seed', 'overall_qoe',
               'served_users', 'iterations', 'wall_ms']
AGGREGATE_COLUMNS = ['solver', 'axis_name', 'axis_value', 'n', 'mean_qoe', 'std_qoe',
                     'ci95_low', 'ci95_high', 'mean_served_users', 'mean_iterations']

TRACE_SCHEMA_VERSION = 1
WORKERS_ENV = 'SEMQOE_WORKERS'


class UnknownSolver(ConfigError):
    """A solver name outside the supported set."""


def check_solvers(solvers) -> None:
    unknown = [s for s in solvers if s not in SOLVERS]
    if unknown:
        raise UnknownSolver(f"Unknown solver(s) {unknown}; choose from {list(SOLVERS)}")


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: explicit request, else the environment, else 1. Zero means auto."""
    if requested is None:
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        else:
            requested = 1
    if requested < 0:
        raise ConfigError(f"Worker count must be >= 0, got {requested}")
    if requested == 0:
        return min(multiprocessing.cpu_count(), 16)
    return max(1, min(requested, multiprocessing.cpu_count()))


def apply_axis(config: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """Scenario config at one sweep point (g_th is applied to the sampled scenario instead)."""
    if axis in INTEGER_AXES:
        if not float(value).is_integer():
            raise ConfigError(f"sweep value {value} for {axis} must be an integer")
        updated = replace(config, **{axis: int(value)})
        updated.validate()
        return updated
    return config


def axis_label(value: float) -> str:
    return f"{value:g}".replace('.', 'p').replace('-', 'm')


# ----------------------------------------------------------------------
# One sweep point
# ----------------------------------------------------------------------
def _write_trace(path: str, solver: str, scenario: Scenario, seed: int, accuracy: AccuracyConfig,
                 objective: ObjectiveKind, cooperative: bool, tolerance: float,
                 result: MatchingResult) -> None:
    header = {
        'type': 'header',
        'schema_version': TRACE_SCHEMA_VERSION,
        'solver': solver,
        'scenario': scenario.to_dict(),
        'channel_seed': seed,
        'accuracy': asdict(accuracy),
        'objective': objective.value,
        'cooperative': cooperative,
        'tolerance': tolerance,
        'initial': result.initial.to_dict(),
        'sweeps': result.sweeps,
        'final_objective': result.objective,
    }
    with open(path, 'w', encoding='utf-8') as f:
        f.write(json.dumps(header) + '\n')
        for record in result.trace:
            f.write(json.dumps({'type': 'swap', **record.to_dict()}) + '\n')


def run_point(args: Tuple[ExperimentConfig, float, int, Optional[str]]) -> List[Dict[str, Any]]:
    """Module-level so the process pool can pickle it; one row per solver."""
    config, axis_value, seed, trace_dir = args
    axis = config.sweep.axis
    scenario = sample_scenario(apply_axis(config.scenario, axis, axis_value), seed)
    if axis == 'g_th':
        scenario = scenario.with_g_th(float(axis_value))
    realization = sample_channels(scenario, seed)
    tables = load_tables(config.accuracy, scenario.constants)
    reporter = NetworkEvaluator(scenario, realization, SymbolSearch(scenario, tables))

    rows = []
    for solver in config.solvers:
        started = time.perf_counter()
        iterations = 0
        result: Optional[MatchingResult] = None
        cooperative, objective = True, ObjectiveKind.QOE_MAX
        traced = scenario
        if solver == 'qoe_max':
            result = run_algorithm1(scenario, reporter, seed, config.matching)
            qoe, served = reporter.overall_qoe(result.assignment), reporter.served_users(result.assignment)
        elif solver == 'sr_max':
            objective = ObjectiveKind.SR_MAX
            result = sr_max_mode(scenario, realization, tables, seed, config.matching)
            traced = nominal_requirements(scenario)
            qoe, served = reporter.overall_qoe(result.assignment), reporter.served_users(result.assignment)
        elif solver == 'no_coop':
            cooperative = False
            result = no_cooperation_mode(scenario, realization, SymbolSearch(scenario, tables), seed,
                                         config.matching)
            qoe, served = reporter.overall_qoe(result.assignment), reporter.served_users(result.assignment)
        elif solver == 'random':
            assignment = random_matching(scenario, reporter, seed)
            qoe, served = reporter.overall_qoe(assignment), reporter.served_users(assignment)
        elif solver == 'oracle':
            oracle = exhaustive_oracle(scenario, realization, tables, max_leaves=config.oracle_max_leaves)
            qoe, served = oracle.qoe, reporter.served_users(oracle.assignment)
        elif solver == 'upper_bound':
            qoe = upper_bound(scenario)
            served = int(qoe)
        else:
            raise UnknownSolver(f"Unknown solver {solver!r}")
        if result is not None:
            iterations = result.sweeps
            if trace_dir:
                name = f"{solver}_{axis}_{axis_label(axis_value)}_seed{seed}.jsonl"
                _write_trace(os.path.join(trace_dir, name), solver, traced, seed, config.accuracy,
                             objective, cooperative, config.matching.tolerance, result)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        rows.append({
            'solver': solver,
            'axis_name': axis,
            'axis_value': float(axis_value),
            'seed': int(seed),
            'overall_qoe': float(qoe),
            'served_users': int(served),
            'iterations': int(iterations),
            'wall_ms': round(elapsed_ms, 3) if config.record_wall_time else 0.0,
        })
    return rows


# ----------------------------------------------------------------------
# Aggregation and output
# ----------------------------------------------------------------------
def aggregate(frame: pd.DataFrame) -> pd.DataFrame:
    """Per (solver, axis value): count, mean, sample std and 95% t-interval of overall QoE."""
    if frame.empty:
        return pd.DataFrame(columns=AGGREGATE_COLUMNS)
    grouped = frame.groupby(['solver', 'axis_name', 'axis_value'], sort=True)
    out = grouped.agg(
        n=('overall_qoe', 'size'),
        mean_qoe=('overall_qoe', 'mean'),
        std_qoe=('overall_qoe', 'std'),
        mean_served_users=('served_users', 'mean'),
        mean_iterations=('iterations', 'mean'),
    ).reset_index()
    half = [student_t.ppf(0.975, n - 1) * s / math.sqrt(n) if n > 1 else float('nan')
            for n, s in zip(out['n'], out['std_qoe'])]
    out['ci95_low'] = out['mean_qoe'] - half
    out['ci95_high'] = out['mean_qoe'] + half
    return out[AGGREGATE_COLUMNS]


def write_summary(path: str, config: ExperimentConfig, agg: pd.DataFrame, n_points: int) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write("Semantic QoE Experiment Summary\n")
        f.write(f"{'=' * 60}\n\n")
        f.write(f"Solvers: {', '.join(config.solvers)}\n")
        f.write(f"Sweep axis: {config.sweep.axis} {list(config.sweep.values)}\n")
        f.write(f"Seeds: {len(config.seed_list())}\n")
        f.write(f"Points evaluated: {n_points}\n")
        f.write(f"Cells: {config.scenario.n_cells}, channels: {config.scenario.n_channels}, "
                f"(N_si, N_bi) = ({config.scenario.n_si}, {config.scenario.n_bi})\n\n")
        f.write("Mean overall QoE:\n")
        for _, row in agg.iterrows():
            f.write(f"  {row['solver']:<12} {row['axis_name']}={row['axis_value']:g}: "
                    f"{row['mean_qoe']:.4f} (n={int(row['n'])})\n")


@dataclass
class ExperimentReport:
    runs: pd.DataFrame
    aggregate: pd.DataFrame
    runs_path: str
    aggregate_path: str
    summary_path: str


def run_experiment(config: ExperimentConfig, out_dir: str, workers: Optional[int] = None) -> ExperimentReport:
    """Run every (axis value, seed) point and write runs.csv, aggregate.csv and summary.txt.

    Args:
        config: Validated experiment configuration
        out_dir: Output directory (created when missing)
        workers: Process count; None falls back to config.workers, then the environment

    Returns:
        ExperimentReport with both frames and the written paths
    """
    check_solvers(config.solvers)
    n_workers = resolve_workers(workers if workers is not None else config.workers)
    os.makedirs(out_dir, exist_ok=True)
    trace_dir = None
    if config.save_traces:
        trace_dir = os.path.join(out_dir, 'traces')
        os.makedirs(trace_dir, exist_ok=True)

    seeds = config.seed_list()
    points = [(config, value, seed, trace_dir) for value in config.sweep.values for seed in seeds]
    total = len(points)
    logger.info("=" * 60)
    logger.info(f"Experiment started {datetime.now().isoformat(timespec='seconds')}")
    logger.info(f"Solvers: {list(config.solvers)}; axis {config.sweep.axis} over {list(config.sweep.values)}")
    logger.info(f"Points: {total} ({len(seeds)} seeds); workers: {n_workers}")

    rows: List[Dict[str, Any]] = []
    completed = 0
    step = max(1, total // 10)
    if n_workers == 1 or total <= 1:
        for args in points:
            rows.extend(run_point(args))
            completed += 1
            if completed % step == 0 or completed == total:
                logger.info(f"Progress: {completed}/{total} ({completed / total * 100:.1f}%)")
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as executor:
            future_map = {executor.submit(run_point, args): (args[1], args[2]) for args in points}
            for future in as_completed(future_map):
                value, seed = future_map[future]
                try:
                    rows.extend(future.result())
                except Exception:
                    logger.error(f"Point {config.sweep.axis}={value} seed={seed} failed")
                    raise
                completed += 1
                if completed % step == 0 or completed == total:
                    logger.info(f"Progress: {completed}/{total} ({completed / total * 100:.1f}%)")

    runs = pd.DataFrame(rows, columns=RUN_COLUMNS)
    if not runs.empty:
        runs = runs.sort_values(['axis_value', 'seed', 'solver'], kind='mergesort').reset_index(drop=True)
    agg = aggregate(runs)

    runs_path = os.path.join(out_dir, 'runs.csv')
    aggregate_path = os.path.join(out_dir, 'aggregate.csv')
    summary_path = os.path.join(out_dir, 'summary.txt')
    runs.to_csv(runs_path, index=False)
    agg.to_csv(aggregate_path, index=False)
    write_summary(summary_path, config, agg, total)

    logger.info(f"Results saved to: {out_dir}")
    logger.info("=" * 60)
    return ExperimentReport(runs=runs, aggregate=agg, runs_path=runs_path,
                            aggregate_path=aggregate_path, summary_path=summary_path)


# ----------------------------------------------------------------------
# Trace replay
# ----------------------------------------------------------------------
def load_trace(filepath: str) -> Tuple[Dict[str, Any], List[SwapRecord]]:
    with open(filepath, 'r', encoding='utf-8') as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get('type') != 'header':
        raise ValueError(f"{filepath} does not start with a trace header")
    header = lines[0]
    if header.get('schema_version') != TRACE_SCHEMA_VERSION:
        raise ValueError(f"Unsupported trace schema_version {header.get('schema_version')}")
    return header, [SwapRecord.from_dict(line) for line in lines[1:]]


def replay(filepath: str) -> ReplayReport:
    """Rebuild the run recorded in a trace and re-apply its swap log."""
    header, records = load_trace(filepath)
    scenario = Scenario.from_dict(header['scenario'])
    realization = sample_channels(scenario, int(header['channel_seed']))
    tables = load_tables(AccuracyConfig(**header['accuracy']), scenario.constants)
    search = SymbolSearch(scenario, tables, ObjectiveKind(header['objective']))
    evaluator = NetworkEvaluator(scenario, realization, search, cooperative=bool(header['cooperative']))
    initial = Matching.from_dict(header['initial'], scenario)
    report = replay_swaps(initial, records, evaluator, float(header['tolerance']))
    if report.verified and records and records[-1].objective != header['final_objective']:
        return ReplayReport(False, len(records), len(records),
                            f"final objective {records[-1].objective!r} != recorded {header['final_objective']!r}")
    return report
