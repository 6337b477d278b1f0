"""
Symbol Search

Exhaustive search over admissible symbol counts for one group with fixed
SINRs: maximize the group objective subject to every member reaching the
minimum rate and accuracy scores.

Accuracy is piecewise constant on the table's SINR grid, so results are
memoized per (group, SINR cell of each member) without approximation.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from core.qoe import KSUTS, QoEParams, accuracy_score, rate_score
from core.scenario import Group, Scenario
from core.semantic_model import AccuracyTables, SemanticConstants, TaskRole, semantic_rate

logger = logging.getLogger(__name__)


class ObjectiveKind(Enum):
    """Scalar maximized by the search and the matching utilities."""
    QOE_MAX = "qoe_max"
    SR_MAX = "sr_max"


@dataclass(frozen=True)
class P1Solution:
    """Best symbol counts of a group.

    qoe is the group QoE at k_star; value is the maximized objective
    (equal to qoe for QOE_MAX, the group S-R in ksuts/s for SR_MAX).
    Infeasible groups carry k_star=None and zeros.
    """
    k_star: Optional[Tuple[int, ...]]
    qoe: float
    value: float
    feasible: bool

    @classmethod
    def infeasible(cls) -> 'P1Solution':
        return cls(k_star=None, qoe=0.0, value=0.0, feasible=False)


def _scores(params: QoEParams, rates: np.ndarray, xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    g_rate = rate_score(params, rates)
    g_acc = accuracy_score(params, xi)
    qoe = params.w * g_rate + (1.0 - params.w) * g_acc
    ok = (g_rate >= params.g_th) & (g_acc >= params.g_th)
    return qoe, ok


def _pick(qoe: np.ndarray, sr: np.ndarray, ok: np.ndarray, objective: ObjectiveKind) -> Optional[int]:
    """Flat index of the best feasible candidate; first (smallest k) wins ties."""
    if not ok.any():
        return None
    target = qoe if objective is ObjectiveKind.QOE_MAX else sr
    masked = np.where(ok, target, -np.inf).ravel()
    return int(np.argmax(masked))


def solve_p1(roles: Sequence[TaskRole], sinrs: Sequence[float], params: Sequence[QoEParams],
             constants: SemanticConstants, tables: AccuracyTables,
             objective: ObjectiveKind = ObjectiveKind.QOE_MAX) -> P1Solution:
    """Best admissible symbol counts of one group.

    Args:
        roles: Task roles of the members (text member first for a pair)
        sinrs: Linear SINR of each member (0 allowed)
        params: QoE parameters of each member
        constants: Semantic entropies and symbol-count sets
        tables: Accuracy tables
        objective: Group QoE or group S-R

    Returns:
        P1Solution; infeasible when no candidate passes the score threshold
    """
    if len(roles) == 1:
        table = tables.single
        ks = constants.k_set[roles[0]]
        cell = table.sinr_cell(sinrs[0])
        xi = table.entries[[table.k_index(0, k) for k in ks], cell]
        rates = np.array([semantic_rate(constants, roles[0], k) for k in ks])
        qoe, ok = _scores(params[0], rates, xi)
        sr = rates / KSUTS * xi
        best = _pick(qoe, sr, ok, objective)
        if best is None:
            return P1Solution.infeasible()
        return P1Solution(k_star=(ks[best],), qoe=float(qoe[best]), value=float(
            qoe[best] if objective is ObjectiveKind.QOE_MAX else sr[best]), feasible=True)

    table = tables.bimodal
    ks_t, ks_i = constants.k_set[roles[0]], constants.k_set[roles[1]]
    cell_t, cell_i = table.sinr_cell(sinrs[0]), table.sinr_cell(sinrs[1])
    idx_t = [table.k_index(0, k) for k in ks_t]
    idx_i = [table.k_index(1, k) for k in ks_i]
    xi = table.entries[np.ix_(idx_t, idx_i)][:, :, cell_t, cell_i]
    rates_t = np.array([semantic_rate(constants, roles[0], k) for k in ks_t])
    rates_i = np.array([semantic_rate(constants, roles[1], k) for k in ks_i])
    qoe_t, ok_t = _scores(params[0], rates_t[:, None], xi)
    qoe_i, ok_i = _scores(params[1], rates_i[None, :], xi)
    qoe = qoe_t + qoe_i
    ok = ok_t & ok_i
    sr = (rates_t[:, None] + rates_i[None, :]) / KSUTS * xi
    best = _pick(qoe, sr, ok, objective)
    if best is None:
        return P1Solution.infeasible()
    a, b = np.unravel_index(best, xi.shape)
    return P1Solution(k_star=(ks_t[a], ks_i[b]), qoe=float(qoe[a, b]), value=float(
        qoe[a, b] if objective is ObjectiveKind.QOE_MAX else sr[a, b]), feasible=True)


class SymbolSearch:
    """P1 solver bound to one scenario, memoized per (group, SINR cells)."""

    def __init__(self, scenario: Scenario, tables: AccuracyTables,
                 objective: ObjectiveKind = ObjectiveKind.QOE_MAX):
        self.scenario = scenario
        self.tables = tables
        self.objective = objective
        self._cache: Dict[Tuple[int, Tuple[int, ...]], P1Solution] = {}
        self.hits = 0
        self.misses = 0

    def _table(self, group: Group):
        return self.tables.bimodal if group.is_bimodal else self.tables.single

    def solve(self, group: Group, sinrs: Sequence[float]) -> P1Solution:
        table = self._table(group)
        key = (group.index, tuple(table.sinr_cell(s) for s in sinrs))
        cached = self._cache.get(key)
        if cached is not None:
            self.hits += 1
            return cached
        self.misses += 1
        users = [self.scenario.users[u] for u in group.users]
        solution = solve_p1(
            roles=[u.role for u in users],
            sinrs=sinrs,
            params=[u.params for u in users],
            constants=self.scenario.constants,
            tables=self.tables,
            objective=self.objective,
        )
        self._cache[key] = solution
        return solution

    def cache_size(self) -> int:
        return len(self._cache)
