import math
from dataclasses import replace

import numpy as np
import pytest

from core.config import ScenarioConfig
from core.scenario import (
    Scenario, _sample_params, cell_centers, distribute, sample_scenario, stream, validate,
)
from core.semantic_model import TaskRole


def test_default_scenario_is_valid():
    scenario = sample_scenario(ScenarioConfig(), 0)
    assert validate(scenario) == []
    assert scenario.n_cells == 3
    assert sum(1 for g in scenario.groups if g.is_bimodal) == 6
    assert sum(1 for g in scenario.groups if not g.is_bimodal) == 6
    assert len(scenario.users) == 18


def test_sampling_is_deterministic():
    a = sample_scenario(ScenarioConfig(), 42)
    b = sample_scenario(ScenarioConfig(), 42)
    c = sample_scenario(ScenarioConfig(), 43)
    assert a == b
    assert a.users != c.users


def test_pairs_come_first_with_text_member_leading():
    scenario = sample_scenario(ScenarioConfig(), 3)
    for cell in scenario.cells:
        groups = scenario.groups_in(cell.index)
        flags = [g.is_bimodal for g in groups]
        assert flags == sorted(flags, reverse=True)
        for g in groups:
            if g.is_bimodal:
                roles = [scenario.users[u].role for u in g.users]
                assert roles == [TaskRole.BIMODAL_TEXT, TaskRole.BIMODAL_IMAGE]


def test_positions_inside_annulus():
    config = ScenarioConfig()
    scenario = sample_scenario(config, 9)
    for user in scenario.users:
        d = user.distance_to(scenario.cells[user.cell].center)
        assert config.min_distance_m <= d <= config.cell_radius_m + 1e-9


def test_round_robin_keeps_cells_balanced():
    rng = np.random.default_rng(0)
    cells = distribute(7, 3, rng)
    counts = [cells.count(b) for b in range(3)]
    assert sum(counts) == 7
    assert max(counts) - min(counts) <= 1


def test_distribution_override():
    config = ScenarioConfig(n_si=4, n_bi=2, singles_per_cell=(4, 0, 0), pairs_per_cell=(0, 0, 2))
    scenario = sample_scenario(config, 1)
    assert [len(scenario.users_in(b)) for b in range(3)] == [4, 0, 4]


def test_three_cell_ring_spacing():
    centers = cell_centers(ScenarioConfig())
    for i in range(3):
        for j in range(i + 1, 3):
            d = math.dist(centers[i], centers[j])
            assert d == pytest.approx(1000.0, rel=1e-12)


def test_json_roundtrip(tmp_path):
    scenario = sample_scenario(ScenarioConfig(), 5)
    assert Scenario.from_dict(scenario.to_dict()) == scenario
    path = tmp_path / 'scenario.json'
    scenario.to_json(str(path))
    assert Scenario.from_json(str(path)) == scenario


def test_with_g_th():
    scenario = sample_scenario(ScenarioConfig(), 5).with_g_th(0.8)
    assert all(u.params.g_th == 0.8 for u in scenario.users)


def test_split_pair_is_reported():
    scenario = sample_scenario(ScenarioConfig(), 2)
    pair = next(g for g in scenario.groups if g.is_bimodal)
    image = scenario.users[pair.users[1]]
    moved = replace(image, cell=(image.cell + 1) % scenario.n_cells)
    users = tuple(moved if u.index == image.index else u for u in scenario.users)
    found = validate(replace(scenario, users=users))
    assert [v.subject for v in found if v.code == 'split_group'] == [f"group {pair.index}"]


def test_zero_beta_is_reported():
    scenario = sample_scenario(ScenarioConfig(), 2)
    target = scenario.users[0]
    broken = replace(target, params=replace(target.params, beta=0.0))
    found = validate(replace(scenario, users=(broken,) + scenario.users[1:]))
    assert [(v.code, v.subject) for v in found] == [('param_beta', 'user 0')]


def test_totals_mismatch_is_reported():
    scenario = sample_scenario(ScenarioConfig(), 2)
    found = validate(replace(scenario, n_si=7))
    assert [v.code for v in found] == ['totals']


def test_streams_are_independent_of_order():
    first = stream(10, 1, 3).random()
    stream(10, 1, 2).random()
    assert stream(10, 1, 3).random() == first


@pytest.mark.slow
def test_parameter_distributions():
    config = ScenarioConfig()
    rng = np.random.default_rng(123)
    n = 100_000
    draws = [_sample_params(config, TaskRole.SINGLE_TEXT, rng) for _ in range(n)]
    w = np.array([p.w for p in draws])
    lam = np.array([p.lam for p in draws])
    beta = np.array([p.beta for p in draws])
    assert w.mean() == pytest.approx(0.5, abs=0.01)
    assert lam.mean() == pytest.approx(55.0, abs=0.05)
    assert beta.min() > 0.0
    assert np.all(np.abs(lam - 55.0) <= 4 * 2.5 + 1e-9)
