"""
Network Evaluator

Scores assignments for the solvers: SINR per user (with or without the
inter-cell term), the P1 solution per group, symbol finalization and the
reported overall QoE under true interference.
"""

import logging
from typing import Dict, List, Optional

from core.net_model import Assignment, ChannelRealization, sinr as link_sinr
from core.qoe import meets_threshold, accuracy_score, group_qoe, rate_score
from core.scenario import Group, Scenario
from core.semantic_model import accuracy, semantic_rate
from core.symbol_search import ObjectiveKind, P1Solution, SymbolSearch

logger = logging.getLogger(__name__)

__all__ = ['NetworkEvaluator', 'ObjectiveKind']


class NetworkEvaluator:
    """Evaluates assignments of one scenario and channel realization.

    With cooperative=False the decision view drops inter-cell interference
    (each BS only knows its own users); reporting through overall_qoe and
    served_users always uses the true SINR.
    """

    def __init__(self, scenario: Scenario, realization: ChannelRealization,
                 search: SymbolSearch, cooperative: bool = True):
        self.scenario = scenario
        self.realization = realization
        self.search = search
        self.cooperative = cooperative

    @property
    def objective(self) -> ObjectiveKind:
        return self.search.objective

    def sinr(self, assignment: Assignment, user: int, true_view: bool = False) -> float:
        return link_sinr(assignment, self.realization, user,
                         intercell=self.cooperative or true_view)

    def group_solution(self, assignment: Assignment, group: Group) -> P1Solution:
        """P1 solution of a group; any unserved member makes it infeasible."""
        if any(assignment.channel_of[u] is None for u in group.users):
            return P1Solution.infeasible()
        return self.search.solve(group, [self.sinr(assignment, u) for u in group.users])

    def group_value(self, assignment: Assignment, group: Group) -> float:
        return self.group_solution(assignment, group).value

    def finalize(self, assignment: Assignment) -> Assignment:
        """Fill in each group's optimal symbol counts (None for infeasible groups)."""
        symbols: Dict[int, Optional[int]] = {}
        for group in self.scenario.groups:
            solution = self.group_solution(assignment, group)
            for i, u in enumerate(group.users):
                symbols[u] = solution.k_star[i] if solution.feasible else None
        return assignment.with_symbols(symbols)

    def _fixed_group_qoe(self, assignment: Assignment, group: Group) -> float:
        """Group QoE at the assignment's symbol counts under true SINR; 0 unless every member passes."""
        ks = [assignment.symbols_of[u] for u in group.users]
        if any(assignment.channel_of[u] is None for u in group.users) or None in ks:
            return 0.0
        users = [self.scenario.users[u] for u in group.users]
        sinrs = [self.sinr(assignment, u, true_view=True) for u in group.users]
        table = self.search.tables.bimodal if group.is_bimodal else self.search.tables.single
        xi = accuracy(table, ks, sinrs)
        phis = [semantic_rate(self.scenario.constants, user.role, k) for user, k in zip(users, ks)]
        for user, phi in zip(users, phis):
            if not meets_threshold(user.params, rate_score(user.params, phi), accuracy_score(user.params, xi)):
                return 0.0
        return group_qoe([u.params for u in users], phis, xi)

    def group_qoes(self, assignment: Assignment) -> List[float]:
        return [self._fixed_group_qoe(assignment, g) for g in self.scenario.groups]

    def overall_qoe(self, assignment: Assignment) -> float:
        """Network objective: sum of group QoE under the assignment's symbol counts."""
        return float(sum(self.group_qoes(assignment)))

    def served_users(self, assignment: Assignment) -> int:
        """Users on a real channel whose group meets the score threshold."""
        return sum(len(g.users) for g, q in zip(self.scenario.groups, self.group_qoes(assignment))
                   if q > 0.0)
