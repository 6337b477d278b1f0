"""Monte Carlo checks at realistic scale. Run with: pytest -m slow"""

from dataclasses import replace

import numpy as np
import pytest

from core.baselines import (
    exhaustive_oracle, no_cooperation_mode, random_matching, sr_max_mode, upper_bound,
)
from core.config import ScenarioConfig
from core.matching import check_matching, find_blocking_swap, run_algorithm1

pytestmark = pytest.mark.slow

# Three cells, one single and one pair per cell on three channels
DIRECTIONAL = ScenarioConfig(n_si=3, n_bi=3, n_channels=3, power_levels_dbm=(0.0, 10.0, 20.0))

THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


def test_matching_close_to_oracle_on_tiny_instances(make_world, tiny_config):
    within = 0
    seeds = range(100)
    for seed in seeds:
        world = make_world(config=tiny_config, seed=seed)
        oracle = exhaustive_oracle(world.scenario, world.realization, world.tables)
        result = run_algorithm1(world.scenario, world.evaluator, seed)
        assert result.objective <= oracle.value + 1e-9
        if result.objective >= 0.95 * oracle.value:
            within += 1
    assert within >= 90


@pytest.mark.parametrize('config', [
    ScenarioConfig(),
    DIRECTIONAL,
    replace(DIRECTIONAL, n_channels=2),
    ScenarioConfig(n_channels=4, power_levels_dbm=(0.0, 10.0, 20.0)),
    ScenarioConfig(n_channels=8, power_levels_dbm=(0.0, 10.0, 20.0)),
], ids=['default', 'directional', 'overloaded', 'four_channels', 'eight_channels'])
def test_terminates_stable(make_world, config):
    seeds = range(3) if config == ScenarioConfig() else range(20)
    for seed in seeds:
        world = make_world(config=config, seed=seed)
        result = run_algorithm1(world.scenario, world.evaluator, seed)
        assert check_matching(result.matching, world.scenario) == []
        assert find_blocking_swap(result.matching, world.evaluator) is None
        history = np.array(result.objective_history)
        assert np.all(np.diff(history) > 0)
        assert world.evaluator.overall_qoe(result.assignment) <= upper_bound(world.scenario)


def test_default_scale_near_upper_bound(make_world):
    matched, bounds, random = [], [], []
    for seed in range(5):
        world = make_world(config=ScenarioConfig(), seed=seed)
        result = run_algorithm1(world.scenario, world.evaluator, seed)
        matched.append(world.evaluator.overall_qoe(result.assignment))
        bounds.append(upper_bound(world.scenario))
        random.append(world.evaluator.overall_qoe(random_matching(world.scenario, world.evaluator, seed)))
    assert np.mean(matched) >= 0.85 * np.mean(bounds)
    assert np.mean(matched) > np.mean(random)


def test_threshold_sweep_ordering(make_world):
    qoe = np.zeros((20, len(THRESHOLDS)))
    sr = np.zeros_like(qoe)
    for seed in range(qoe.shape[0]):
        for j, g_th in enumerate(THRESHOLDS):
            world = make_world(config=replace(DIRECTIONAL, g_th=g_th), seed=seed)
            result = run_algorithm1(world.scenario, world.evaluator, seed)
            qoe[seed, j] = world.evaluator.overall_qoe(result.assignment)
            decided = sr_max_mode(world.scenario, world.realization, world.tables, seed)
            sr[seed, j] = world.evaluator.overall_qoe(decided.assignment)
    # same allocation at every threshold, scored more strictly
    assert np.all(np.diff(sr, axis=1) <= 0)
    mean_qoe, mean_sr = qoe.mean(axis=0), sr.mean(axis=0)
    assert np.all(np.diff(mean_qoe) <= 1e-9)
    assert np.all(mean_qoe >= mean_sr)
    gap = mean_qoe - mean_sr
    assert np.all(gap[1:] > gap[0])


def test_channel_sweep_ordering(make_world):
    base = ScenarioConfig(power_levels_dbm=(0.0, 10.0, 20.0))
    means = []
    for n_channels in (4, 6, 8):
        matched, random, bounds = [], [], []
        for seed in range(3):
            world = make_world(config=replace(base, n_channels=n_channels), seed=seed)
            result = run_algorithm1(world.scenario, world.evaluator, seed)
            matched.append(world.evaluator.overall_qoe(result.assignment))
            random.append(world.evaluator.overall_qoe(random_matching(world.scenario, world.evaluator, seed)))
            bounds.append(upper_bound(world.scenario))
        assert np.mean(bounds) >= np.mean(matched) > np.mean(random)
        means.append(np.mean(matched))
    assert means[-1] > means[0]


def test_cooperation_helps_on_average(make_world):
    coop, blind = [], []
    for seed in range(20):
        world = make_world(config=DIRECTIONAL, seed=seed)
        result = run_algorithm1(world.scenario, world.evaluator, seed)
        coop.append(world.evaluator.overall_qoe(result.assignment))
        alone = no_cooperation_mode(world.scenario, world.realization, world.search, seed)
        blind.append(world.evaluator.overall_qoe(alone.assignment))
    assert np.mean(coop) >= np.mean(blind)
