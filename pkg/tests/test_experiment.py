import glob
import json
import multiprocessing
import os
from dataclasses import asdict, replace

import pandas as pd
import pytest

from core.cli import main
from core.config import ConfigError, ExperimentConfig, SweepConfig
from core.experiment import (
    AGGREGATE_COLUMNS, RUN_COLUMNS, UnknownSolver, apply_axis, axis_label, load_trace, replay,
    resolve_workers, run_experiment,
)
from core.scenario import Scenario


@pytest.fixture
def experiment(small_config):
    return ExperimentConfig(solvers=('qoe_max', 'random', 'upper_bound'), seeds=2,
                            scenario=small_config)


def test_output_files_and_columns(experiment, tmp_path):
    report = run_experiment(experiment, str(tmp_path))
    runs = pd.read_csv(report.runs_path)
    agg = pd.read_csv(report.aggregate_path)
    assert list(runs.columns) == RUN_COLUMNS
    assert list(agg.columns) == AGGREGATE_COLUMNS
    assert len(runs) == 2 * 3
    assert list(runs['seed']) == [0, 0, 0, 1, 1, 1]
    assert list(runs['solver'][:3]) == ['qoe_max', 'random', 'upper_bound']
    assert (runs['wall_ms'] == 0.0).all()
    assert os.path.exists(report.summary_path)
    bound = runs[runs['solver'] == 'upper_bound']['overall_qoe']
    for solver in ('qoe_max', 'random'):
        assert (runs[runs['solver'] == solver]['overall_qoe'].values <= bound.values).all()


def test_reruns_are_byte_identical(experiment, tmp_path):
    run_experiment(experiment, str(tmp_path / 'a'))
    run_experiment(experiment, str(tmp_path / 'b'))
    for name in ('runs.csv', 'aggregate.csv', 'summary.txt'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_empty_seed_list(experiment, tmp_path):
    report = run_experiment(replace(experiment, seeds=0), str(tmp_path))
    assert list(pd.read_csv(report.runs_path).columns) == RUN_COLUMNS
    assert report.aggregate.empty


def test_aggregate_recomputes_from_runs(experiment, tmp_path):
    report = run_experiment(replace(experiment, seeds=3), str(tmp_path))
    runs = pd.read_csv(report.runs_path)
    agg = pd.read_csv(report.aggregate_path)
    for _, row in agg.iterrows():
        values = runs[(runs['solver'] == row['solver']) & (runs['axis_value'] == row['axis_value'])]['overall_qoe']
        assert row['n'] == len(values) == 3
        assert row['mean_qoe'] == pytest.approx(values.mean(), rel=1e-9, abs=1e-12)
        assert row['std_qoe'] == pytest.approx(values.std(ddof=1), rel=1e-9, abs=1e-12)
        assert row['ci95_low'] <= row['mean_qoe'] <= row['ci95_high']


def test_g_th_sweep(experiment, tmp_path):
    config = replace(experiment, solvers=('qoe_max',), seeds=1,
                     sweep=SweepConfig(axis='g_th', values=(0.4, 0.9)))
    runs = run_experiment(config, str(tmp_path)).runs
    assert list(runs['axis_name']) == ['g_th', 'g_th']
    assert list(runs['axis_value']) == [0.4, 0.9]


def test_unknown_solver(experiment, tmp_path):
    with pytest.raises(UnknownSolver):
        run_experiment(replace(experiment, solvers=('qoe_max', 'greedy')), str(tmp_path))


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv('SEMQOE_WORKERS', '0')
    assert resolve_workers() == min(multiprocessing.cpu_count(), 16)
    monkeypatch.setenv('SEMQOE_WORKERS', '1')
    assert resolve_workers() == 1
    assert resolve_workers(2) == min(2, multiprocessing.cpu_count())
    monkeypatch.setenv('SEMQOE_WORKERS', 'many')
    with pytest.raises(ConfigError):
        resolve_workers()
    monkeypatch.delenv('SEMQOE_WORKERS')
    assert resolve_workers() == 1
    with pytest.raises(ConfigError):
        resolve_workers(-1)


def test_apply_axis(small_config):
    assert apply_axis(small_config, 'n_channels', 4.0).n_channels == 4
    assert apply_axis(small_config, 'g_th', 0.7) == small_config
    with pytest.raises(ConfigError, match="integer"):
        apply_axis(small_config, 'n_channels', 4.5)
    assert axis_label(0.5) == '0p5'


def test_parallel_matches_serial(experiment, tmp_path):
    serial = run_experiment(experiment, str(tmp_path / 'serial'), workers=1)
    parallel = run_experiment(experiment, str(tmp_path / 'parallel'), workers=2)
    pd.testing.assert_frame_equal(serial.runs, parallel.runs)


@pytest.fixture
def traced(experiment, tmp_path):
    config = replace(experiment, solvers=('qoe_max', 'no_coop'), save_traces=True)
    run_experiment(config, str(tmp_path))
    paths = sorted(glob.glob(str(tmp_path / 'traces' / '*.jsonl')))
    assert len(paths) == 4
    return paths


def test_traces_replay(traced):
    for path in traced:
        header, records = load_trace(path)
        assert Scenario.from_dict(header['scenario']).seed == header['channel_seed']
        report = replay(path)
        assert report.verified and report.steps == len(records)


def _forge(path, out):
    with open(path, encoding='utf-8') as f:
        lines = [json.loads(line) for line in f]
    swaps = [line for line in lines if line['type'] == 'swap']
    assert swaps, "expected at least one swap"
    swaps[0]['delta_utility'] += 1e-6
    with open(out, 'w', encoding='utf-8') as f:
        f.write('\n'.join(json.dumps(line) for line in lines) + '\n')


def test_forged_trace_diverges(traced, tmp_path):
    path = next(p for p in traced if len(load_trace(p)[1]) > 0)
    forged = str(tmp_path / 'forged.jsonl')
    _forge(path, forged)
    report = replay(forged)
    assert not report.verified and report.divergent_step == 1


def test_sr_max_reports_at_swept_threshold(experiment, tmp_path):
    config = replace(experiment, solvers=('qoe_max', 'sr_max'), seeds=3, save_traces=True,
                     sweep=SweepConfig(axis='g_th', values=(0.5, 0.7, 0.9)))
    runs = run_experiment(config, str(tmp_path)).runs
    sr = runs[runs['solver'] == 'sr_max'].pivot(index='seed', columns='axis_value', values='overall_qoe')
    assert (sr.diff(axis=1).iloc[:, 1:] <= 0).all().all()
    for path in glob.glob(str(tmp_path / 'traces' / 'sr_max_*.jsonl')):
        header, _ = load_trace(path)
        scenario = Scenario.from_dict(header['scenario'])
        assert {u.params.g_th for u in scenario.users} == {0.5}
        assert replay(path).verified


# ----------------------------------------------------------------------
# Command line
# ----------------------------------------------------------------------
@pytest.fixture
def config_file(experiment, tmp_path):
    data = asdict(experiment)
    data['scenario'] = {k: v for k, v in data['scenario'].items() if v is not None}
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(data))
    return str(path)


def test_cli_run(config_file, tmp_path):
    out = tmp_path / 'out'
    assert main(['run', '--config', config_file, '--out', str(out), '--seeds', '1']) == 0
    assert len(pd.read_csv(out / 'runs.csv')) == 3


def test_cli_config_errors(config_file, tmp_path):
    assert main(['run', '--config', str(tmp_path / 'missing.json'), '--out', str(tmp_path)]) == 1
    data = json.loads(open(config_file).read())
    data['solvers'] = ['qoe_max', 'greedy']
    bad = tmp_path / 'bad.json'
    bad.write_text(json.dumps(data))
    assert main(['run', '--config', str(bad), '--out', str(tmp_path / 'out')]) == 1


def test_cli_sample_and_validate(config_file, tmp_path):
    scenario_path = tmp_path / 'scenario.json'
    channels_path = tmp_path / 'channels.json'
    assert main(['sample', '--config', config_file, '--seed', '3', '--out', str(scenario_path),
                 '--channels', str(channels_path)]) == 0
    assert channels_path.exists()
    assert main(['validate', '--scenario', str(scenario_path)]) == 0

    data = json.loads(scenario_path.read_text())
    data['n_si'] += 1
    broken = tmp_path / 'broken.json'
    broken.write_text(json.dumps(data))
    assert main(['validate', '--scenario', str(broken)]) == 1


def test_cli_replay(traced, tmp_path, capsys):
    path = next(p for p in traced if len(load_trace(p)[1]) > 0)
    assert main(['replay', '--trace', path]) == 0
    assert capsys.readouterr().out.startswith('verified')
    forged = str(tmp_path / 'forged.jsonl')
    _forge(path, forged)
    assert main(['replay', '--trace', forged]) == 2
    assert 'divergence at step 1' in capsys.readouterr().out
    assert main(['replay', '--trace', str(tmp_path / 'nope.jsonl')]) == 1
