"""
Baselines

Reference solvers around the swap matching: exhaustive joint search for
tiny instances, random allocation, the matching without inter-cell
cooperation, and the analytic upper bound on overall QoE.
"""

import logging
from dataclasses import dataclass
from itertools import permutations, product
from typing import Iterator, List, Optional, Sequence, Tuple

from core.config import MatchingConfig
from core.evaluator import NetworkEvaluator, ObjectiveKind
from core.matching import MatchingResult, initial_matching, run_algorithm1
from core.net_model import Assignment, ChannelRealization
from core.scenario import Group, Scenario
from core.semantic_model import AccuracyTables
from core.symbol_search import SymbolSearch

logger = logging.getLogger(__name__)

__all__ = [
    'ObjectiveKind', 'OracleTooLarge', 'OracleResult', 'exhaustive_leaf_count', 'exhaustive_oracle',
    'random_matching', 'nominal_requirements', 'sr_max_mode', 'no_cooperation_mode', 'upper_bound',
    'NOMINAL_SCORE', 'STREAM_RANDOM',
]

STREAM_RANDOM = 21

# Score of a user exactly meeting its rate or accuracy requirement
NOMINAL_SCORE = 0.5

# (user, channel, power index)
Placement = Tuple[int, int, int]


class OracleTooLarge(RuntimeError):
    """The joint search space exceeds the configured leaf cap."""


@dataclass(frozen=True)
class OracleResult:
    assignment: Assignment
    value: float
    qoe: float
    leaves: int


def _cell_leaf_count(groups: Sequence[Group], n_channels: int, n_powers: int) -> int:
    def count(i: int, used: int) -> int:
        if i == len(groups):
            return 1
        free = n_channels - used
        total = count(i + 1, used)
        if groups[i].is_bimodal:
            if free >= 2:
                total += free * (free - 1) * n_powers ** 2 * count(i + 1, used + 2)
        elif free >= 1:
            total += free * n_powers * count(i + 1, used + 1)
        return total
    return count(0, 0)


def exhaustive_leaf_count(scenario: Scenario) -> int:
    """Joint configurations enumerated by the oracle: per cell every injective
    group-to-channel placement (unserved allowed, both pair orientations)
    times every power level per served user; product over cells."""
    n_powers = len(scenario.power_levels_dbm)
    total = 1
    for cell in scenario.cells:
        total *= _cell_leaf_count(scenario.groups_in(cell.index), scenario.n_channels, n_powers)
    return total


def _cell_configs(groups: Sequence[Group], n_channels: int, n_powers: int) -> Iterator[Tuple[Placement, ...]]:
    def rec(i: int, used: frozenset) -> Iterator[Tuple[Placement, ...]]:
        if i == len(groups):
            yield ()
            return
        group = groups[i]
        yield from rec(i + 1, used)
        free = [m for m in range(n_channels) if m not in used]
        if group.is_bimodal:
            u_t, u_i = group.users
            for m, m2 in permutations(free, 2):
                for p, p2 in product(range(n_powers), repeat=2):
                    for rest in rec(i + 1, used | {m, m2}):
                        yield ((u_t, m, p), (u_i, m2, p2)) + rest
        else:
            (u,) = group.users
            for m in free:
                for p in range(n_powers):
                    for rest in rec(i + 1, used | {m}):
                        yield ((u, m, p),) + rest
    return rec(0, frozenset())


def _assignment(scenario: Scenario, placements: Sequence[Tuple[Placement, ...]]) -> Assignment:
    n = len(scenario.users)
    channel_of: List[Optional[int]] = [None] * n
    power_dbm = [scenario.power_levels_dbm[0]] * n
    for cell_placements in placements:
        for u, m, p in cell_placements:
            channel_of[u] = m
            power_dbm[u] = scenario.power_levels_dbm[p]
    return Assignment(channel_of=tuple(channel_of), power_dbm=tuple(power_dbm), symbols_of=(None,) * n)


def exhaustive_oracle(scenario: Scenario, realization: ChannelRealization, tables: AccuracyTables,
                      objective: ObjectiveKind = ObjectiveKind.QOE_MAX,
                      max_leaves: int = 10 ** 7) -> OracleResult:
    """Global optimum by joint enumeration across cells under true interference.

    The first leaf with a strictly greater objective wins ties.

    Raises:
        OracleTooLarge: the leaf count exceeds max_leaves
    """
    leaves = exhaustive_leaf_count(scenario)
    if leaves > max_leaves:
        raise OracleTooLarge(f"exhaustive search needs {leaves} leaves, cap is {max_leaves}")
    evaluator = NetworkEvaluator(scenario, realization, SymbolSearch(scenario, tables, objective))
    n_powers = len(scenario.power_levels_dbm)
    per_cell = [list(_cell_configs(scenario.groups_in(c.index), scenario.n_channels, n_powers))
                for c in scenario.cells]

    best_value, best = -1.0, None
    for placements in product(*per_cell):
        assignment = _assignment(scenario, placements)
        value = sum(evaluator.group_value(assignment, g) for g in scenario.groups)
        if value > best_value:
            best_value, best = value, assignment
    final = evaluator.finalize(best)
    qoe = evaluator.overall_qoe(final)
    logger.debug(f"Oracle scanned {leaves} leaves: value {best_value:.6f}, QoE {qoe:.6f}")
    return OracleResult(assignment=final, value=float(best_value), qoe=qoe, leaves=leaves)


def random_matching(scenario: Scenario, evaluator: NetworkEvaluator, seed: int) -> Assignment:
    """Random channel permutation per cell and uniform power levels; symbol counts from P1."""
    matching = initial_matching(scenario, seed, purpose=STREAM_RANDOM, random_powers=True)
    return evaluator.finalize(matching.to_assignment(scenario))


def nominal_requirements(scenario: Scenario) -> Scenario:
    """Scenario holding every user to its stated rate and accuracy requirements
    (both scores at least NOMINAL_SCORE), whatever threshold is in force."""
    return scenario.with_g_th(NOMINAL_SCORE)


def sr_max_mode(scenario: Scenario, realization: ChannelRealization, tables: AccuracyTables,
                seed: int, config: Optional[MatchingConfig] = None) -> MatchingResult:
    """S-R maximization baseline.

    Symbol search and matching maximize group S-R under the nominal
    requirements only; the allocation does not depend on G_th. Score it
    with a QoE evaluator of the original scenario, which applies G_th.
    """
    decision = nominal_requirements(scenario)
    evaluator = NetworkEvaluator(decision, realization, SymbolSearch(decision, tables, ObjectiveKind.SR_MAX))
    return run_algorithm1(decision, evaluator, seed, config)


def no_cooperation_mode(scenario: Scenario, realization: ChannelRealization, search: SymbolSearch,
                        seed: int, config: Optional[MatchingConfig] = None) -> MatchingResult:
    """Swap matching where each BS ignores the other cells.

    Blocking checks see only same-cell players and SINR without inter-cell
    interference. Report the result through a cooperative evaluator's
    overall_qoe to score it under true interference.
    """
    evaluator = NetworkEvaluator(scenario, realization, search, cooperative=False)
    return run_algorithm1(scenario, evaluator, seed, config)


def upper_bound(scenario: Scenario) -> float:
    """Every servable user scoring 1: sum over cells of min(|U^b|, |M|)."""
    return float(sum(min(len(scenario.users_in(c.index)), scenario.n_channels) for c in scenario.cells))
