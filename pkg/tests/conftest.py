"""Shared fixtures: small scenarios, default accuracy tables and hand-built channels."""

import os
import sys
from dataclasses import replace

import numpy as np
import pytest

# Ensure project root is on sys.path so `core` imports resolve
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from core.config import AccuracyConfig, ScenarioConfig
from core.evaluator import NetworkEvaluator, ObjectiveKind
from core.net_model import ChannelRealization, sample_channels
from core.scenario import sample_scenario
from core.semantic_model import SemanticConstants, build_surrogate_tables
from core.symbol_search import SymbolSearch


# Two cells: a pair and a single in cell 0 (3 users on 3 channels), two singles in cell 1
SMALL = ScenarioConfig(n_cells=2, n_si=3, n_bi=1, n_channels=3,
                       power_levels_dbm=(0.0, 10.0, 20.0),
                       pairs_per_cell=(1, 0), singles_per_cell=(1, 2))

# Exhaustively searchable: 2 cells, 2 channels, 2 power levels, at most 2 groups per cell
TINY = ScenarioConfig(n_cells=2, n_si=2, n_bi=1, n_channels=2,
                      power_levels_dbm=(10.0, 20.0),
                      pairs_per_cell=(1, 0), singles_per_cell=(0, 2))


@pytest.fixture
def small_config():
    return SMALL


@pytest.fixture
def tiny_config():
    return TINY


@pytest.fixture(scope='session')
def default_tables():
    return build_surrogate_tables(AccuracyConfig(), SemanticConstants.from_config(ScenarioConfig()))


class World:
    """Scenario, channels and a cooperative QoE evaluator for one seed."""

    def __init__(self, config, seed, tables, objective=ObjectiveKind.QOE_MAX, cooperative=True):
        self.scenario = sample_scenario(config, seed)
        self.realization = sample_channels(self.scenario, seed)
        self.tables = tables
        self.search = SymbolSearch(self.scenario, tables, objective)
        self.evaluator = NetworkEvaluator(self.scenario, self.realization, self.search, cooperative)


@pytest.fixture
def make_world(default_tables):
    def build(config=SMALL, seed=0, **kwargs):
        return World(config, seed, default_tables, **kwargs)
    return build


def hand_realization(gains, cell_of, noise_mw=1e-12):
    """Realization from an explicit (users, cells, channels, n_rx) gain array."""
    gains = np.asarray(gains, dtype=complex)
    n_users, n_cells = gains.shape[:2]
    return ChannelRealization(gains=gains, pathloss_db=np.zeros((n_users, n_cells)),
                              shadowing_db=np.zeros((n_users, n_cells)), cell_of=tuple(cell_of),
                              noise_mw=noise_mw, seed=0)


@pytest.fixture
def realization_factory():
    return hand_realization


def without_intercell(realization):
    """Copy of a realization with every user's gains towards foreign BSs zeroed."""
    gains = realization.gains.copy()
    for u, b in enumerate(realization.cell_of):
        mask = np.ones(gains.shape[1], dtype=bool)
        mask[b] = False
        gains[u, mask] = 0.0
    return replace(realization, gains=gains)


@pytest.fixture
def strip_intercell():
    return without_intercell
