"""
Swap Matching

Channel and power allocation as a many-to-one matching between players
(user groups, plus virtual single-modal players when a cell has spare
channels) and resource bundles (channels with power levels, plus virtual
channels when a cell is overloaded).

A swap moves one player onto a new bundle; same-cell holders of the
channels it takes move onto the channels it vacated. A swap is accepted
when no affected player (or channel, in overloaded cells) loses utility
and at least one gains. Sweeps repeat until a full pass accepts nothing.

By default a warm-up runs first from the initial matching: swaps that
raise the summed utility of the affected players, best per player, until
none is left. Blocking sweeps then certify the result.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations, permutations, product
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from scipy.special import comb

from core.config import MatchingConfig
from core.evaluator import NetworkEvaluator
from core.net_model import Assignment
from core.scenario import Scenario, stream

logger = logging.getLogger(__name__)

CASE_SPARE = 1       # |U^b| <= |M|: virtual players fill the spare channels
CASE_OVERLOADED = 2  # |U^b| > |M|: virtual channels absorb the surplus users

STREAM_INITIAL = 20

DEFAULT_TOLERANCE = 1e-9


class InvalidSwap(ValueError):
    """A swap that cannot be applied to the current matching."""


class IterationCapExceeded(RuntimeError):
    """The sweep loop did not reach a stable matching within the cap."""


# ----------------------------------------------------------------------
# Market
# ----------------------------------------------------------------------
@dataclass(frozen=True, order=True)
class Player:
    """A matching player: group q of a cell; virtual players have group=None."""
    cell: int
    q: int
    group: Optional[int] = field(default=None, compare=False)
    bimodal: bool = field(default=False, compare=False)

    @property
    def is_virtual(self) -> bool:
        return self.group is None

    @property
    def size(self) -> int:
        return 2 if self.bimodal else 1


@dataclass(frozen=True)
class Bundle:
    """Channels and power-level indices held by a player (text member first for a pair)."""
    channels: Tuple[int, ...]
    powers: Tuple[int, ...]

    def to_list(self) -> List[List[int]]:
        return [list(self.channels), list(self.powers)]

    @classmethod
    def from_list(cls, data: Sequence[Sequence[int]]) -> 'Bundle':
        return cls(channels=tuple(int(c) for c in data[0]), powers=tuple(int(p) for p in data[1]))


@dataclass(frozen=True)
class CellMarket:
    cell: int
    case: int
    players: Tuple[Player, ...]
    n_channels: int          # real plus virtual channels
    n_real_channels: int
    n_users: int

    @property
    def n_virtual_players(self) -> int:
        return sum(1 for p in self.players if p.is_virtual)

    @property
    def n_virtual_channels(self) -> int:
        return self.n_channels - self.n_real_channels

    def is_virtual_channel(self, channel: int) -> bool:
        return channel >= self.n_real_channels


def augment_market(scenario: Scenario) -> Tuple[CellMarket, ...]:
    """Per-cell players and channel set, padded with virtual entities.

    Cells with no more users than channels get |M| - |U^b| virtual players;
    overloaded cells get |U^b| - |M| virtual channels. Either way every
    channel has exactly one holder.
    """
    markets = []
    for cell in scenario.cells:
        groups = scenario.groups_in(cell.index)
        n_users = sum(len(g.users) for g in groups)
        players = [Player(cell=cell.index, q=g.q, group=g.index, bimodal=g.is_bimodal) for g in groups]
        if n_users <= scenario.n_channels:
            case = CASE_SPARE
            players += [Player(cell=cell.index, q=len(groups) + i)
                        for i in range(scenario.n_channels - n_users)]
            n_channels = scenario.n_channels
        else:
            case = CASE_OVERLOADED
            n_channels = n_users
        markets.append(CellMarket(cell=cell.index, case=case, players=tuple(players),
                                  n_channels=n_channels, n_real_channels=scenario.n_channels,
                                  n_users=n_users))
    return tuple(markets)


def candidate_bundles(market: CellMarket, player: Player, n_powers: int,
                      both_orientations: bool = False) -> Iterator[Bundle]:
    """Bundles a player may propose, in scan order.

    Single-modal: every channel with every power level. Bimodal: every
    channel pair m < m' (text member on m) with every ordered power pair;
    both_orientations also lets the text member take m'.
    """
    if not player.bimodal:
        for m in range(market.n_channels):
            for p in range(n_powers):
                yield Bundle(channels=(m,), powers=(p,))
        return
    pairs = permutations if both_orientations else combinations
    for m, m2 in pairs(range(market.n_channels), 2):
        for p, p2 in product(range(n_powers), repeat=2):
            yield Bundle(channels=(m, m2), powers=(p, p2))


def candidate_count(market: CellMarket, player: Player, n_powers: int,
                    both_orientations: bool = False) -> int:
    if player.bimodal:
        pairs = int(comb(market.n_channels, 2, exact=True)) * (2 if both_orientations else 1)
        return pairs * n_powers ** 2
    return market.n_channels * n_powers


def matching_candidate_count(scenario: Scenario) -> int:
    """Candidate bundles scanned in one full sweep over all players."""
    n_powers = len(scenario.power_levels_dbm)
    return sum(candidate_count(mk, p, n_powers) for mk in augment_market(scenario) for p in mk.players)


# ----------------------------------------------------------------------
# Matching state
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Matching:
    """Bundle held by every player of every cell. Immutable; swaps build a new Matching."""
    markets: Tuple[CellMarket, ...]
    bundles: Tuple[Tuple[Bundle, ...], ...]
    n_powers: int

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Matching) and self.bundles == other.bundles

    def __hash__(self) -> int:
        return hash(self.bundles)

    def bundle(self, player: Player) -> Bundle:
        return self.bundles[player.cell][player.q]

    def players(self) -> Iterator[Player]:
        for market in self.markets:
            yield from market.players

    @cached_property
    def _holders(self) -> Tuple[Dict[int, int], ...]:
        return tuple({c: q for q, b in enumerate(cell_bundles) for c in b.channels}
                     for cell_bundles in self.bundles)

    def holder(self, cell: int, channel: int) -> Player:
        return self.markets[cell].players[self._holders[cell][channel]]

    def with_bundles(self, cell: int, updates: Mapping[int, Bundle]) -> 'Matching':
        cell_bundles = tuple(updates.get(q, b) for q, b in enumerate(self.bundles[cell]))
        bundles = self.bundles[:cell] + (cell_bundles,) + self.bundles[cell + 1:]
        return replace(self, bundles=bundles)

    def to_assignment(self, scenario: Scenario) -> Assignment:
        """Real players on real channels transmit; a group touching a virtual channel is unserved."""
        n = len(scenario.users)
        channel_of: List[Optional[int]] = [None] * n
        power_dbm = [scenario.power_levels_dbm[0]] * n
        levels = scenario.power_levels_dbm
        for market, cell_bundles in zip(self.markets, self.bundles):
            for player, b in zip(market.players, cell_bundles):
                if player.is_virtual or any(market.is_virtual_channel(c) for c in b.channels):
                    continue
                for u, c, p in zip(scenario.groups[player.group].users, b.channels, b.powers):
                    channel_of[u] = c
                    power_dbm[u] = levels[p]
        return Assignment(channel_of=tuple(channel_of), power_dbm=tuple(power_dbm),
                          symbols_of=(None,) * n)

    def to_dict(self) -> Dict[str, Any]:
        return {'bundles': [[b.to_list() for b in cell_bundles] for cell_bundles in self.bundles]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], scenario: Scenario) -> 'Matching':
        markets = augment_market(scenario)
        bundles = tuple(tuple(Bundle.from_list(b) for b in cell_bundles) for cell_bundles in data['bundles'])
        return cls(markets=markets, bundles=bundles, n_powers=len(scenario.power_levels_dbm))


def initial_matching(scenario: Scenario, seed: int, markets: Optional[Tuple[CellMarket, ...]] = None,
                     purpose: int = STREAM_INITIAL, random_powers: bool = False) -> Matching:
    """Seeded channel permutation per cell; players take consecutive entries.

    Powers start at the minimum level, or uniformly random with random_powers.
    """
    markets = markets or augment_market(scenario)
    n_powers = len(scenario.power_levels_dbm)
    bundles = []
    for market in markets:
        rng = stream(seed, purpose, market.cell)
        perm = [int(c) for c in rng.permutation(market.n_channels)]
        cell_bundles = []
        pos = 0
        for player in market.players:
            channels = tuple(perm[pos:pos + player.size])
            pos += player.size
            if random_powers:
                powers = tuple(int(p) for p in rng.integers(0, n_powers, player.size))
            else:
                powers = (0,) * player.size
            cell_bundles.append(Bundle(channels=channels, powers=powers))
        if pos != market.n_channels:
            raise RuntimeError(f"cell {market.cell}: players cover {pos} of {market.n_channels} channels")
        bundles.append(tuple(cell_bundles))
    return Matching(markets=markets, bundles=tuple(bundles), n_powers=n_powers)


def check_matching(matching: Matching, scenario: Scenario) -> List[str]:
    """Structural check plus the assignment constraints; empty when valid."""
    problems = []
    for market, cell_bundles in zip(matching.markets, matching.bundles):
        if len(cell_bundles) != len(market.players):
            problems.append(f"cell {market.cell}: {len(cell_bundles)} bundles for {len(market.players)} players")
            continue
        held = []
        for player, b in zip(market.players, cell_bundles):
            if len(b.channels) != player.size or len(b.powers) != player.size:
                problems.append(f"cell {market.cell} player {player.q}: bundle size does not match the group")
            if len(set(b.channels)) != len(b.channels):
                problems.append(f"cell {market.cell} player {player.q}: repeated channel in {b.channels}")
            if any(not 0 <= p < matching.n_powers for p in b.powers):
                problems.append(f"cell {market.cell} player {player.q}: power index out of range")
            held.extend(b.channels)
        if sorted(held) != list(range(market.n_channels)):
            problems.append(f"cell {market.cell}: channels {sorted(held)} are not held exactly once")
    if not problems:
        problems.extend(matching.to_assignment(scenario).violations(scenario))
    return problems


# ----------------------------------------------------------------------
# Swaps
# ----------------------------------------------------------------------
def _check_bundle(matching: Matching, player: Player, bundle: Bundle) -> None:
    market = matching.markets[player.cell]
    if len(bundle.channels) != player.size or len(bundle.powers) != player.size:
        raise InvalidSwap(f"player {player.q} of cell {player.cell} needs {player.size} channel(s)")
    if len(set(bundle.channels)) != player.size:
        raise InvalidSwap(f"bundle {bundle.channels} repeats a channel")
    if any(not 0 <= c < market.n_channels for c in bundle.channels):
        raise InvalidSwap(f"bundle {bundle.channels} leaves the channel set of cell {player.cell}")
    if any(not 0 <= p < matching.n_powers for p in bundle.powers):
        raise InvalidSwap(f"bundle powers {bundle.powers} leave the power set")


def apply_swap(matching: Matching, player: Player, bundle: Bundle) -> Matching:
    """Move player onto bundle; displaced same-cell holders take the vacated channels.

    Displaced players keep their power levels and slot orientation.

    Raises:
        InvalidSwap: malformed bundle or bundle equal to the current one
    """
    _check_bundle(matching, player, bundle)
    current = matching.bundle(player)
    if bundle == current:
        raise InvalidSwap("swap must change the bundle")
    taken = [c for c in bundle.channels if c not in current.channels]
    vacated = [c for c in current.channels if c not in bundle.channels]
    updates: Dict[int, Bundle] = {player.q: bundle}
    for new_channel, free_channel in zip(taken, vacated):
        other = matching.holder(player.cell, new_channel)
        held = updates.get(other.q, matching.bundle(other))
        channels = tuple(free_channel if c == new_channel else c for c in held.channels)
        updates[other.q] = Bundle(channels=channels, powers=held.powers)
    return matching.with_bundles(player.cell, updates)


def affected_set(matching: Matching, player: Player, old: Bundle, new: Bundle,
                 cooperative: bool = True) -> List[Player]:
    """Players holding a channel of old or new: the swapper, same-cell holders,
    and co-channel players of the other cells on real channels."""
    market = matching.markets[player.cell]
    channels = set(old.channels) | set(new.channels)
    found = {player}
    for other in matching.markets:
        same = other.cell == player.cell
        if not same and not cooperative:
            continue
        for c in channels:
            if not same and market.is_virtual_channel(c):
                continue
            found.add(matching.holder(other.cell, c))
    return sorted(found)


def player_utility(evaluator: NetworkEvaluator, assignment: Assignment, player: Player) -> float:
    """Group objective of a real player, 0 for virtual players."""
    if player.is_virtual:
        return 0.0
    return evaluator.group_value(assignment, evaluator.scenario.groups[player.group])


def all_utilities(matching: Matching, evaluator: NetworkEvaluator) -> Dict[Player, float]:
    assignment = matching.to_assignment(evaluator.scenario)
    return {p: player_utility(evaluator, assignment, p) for p in matching.players()}


def total_utility(utilities: Mapping[Player, float]) -> float:
    return float(sum(utilities[p] for p in sorted(utilities)))


def channel_utilities(matching: Matching, players: Sequence[Player],
                      utilities: Mapping[Player, float]) -> Dict[Tuple[int, int], float]:
    """Utility of each (cell, channel) held by players: 0 on virtual channels or
    virtual holders, half the pair's utility for each channel of a bimodal holder."""
    result = {}
    for p in players:
        market = matching.markets[p.cell]
        for c in matching.bundle(p).channels:
            if p.is_virtual or market.is_virtual_channel(c):
                value = 0.0
            elif p.bimodal:
                value = utilities[p] / 2.0
            else:
                value = utilities[p]
            result[(p.cell, c)] = value
    return result


def pareto_improves(before: Mapping[Any, float], after: Mapping[Any, float],
                    tolerance: float = DEFAULT_TOLERANCE) -> bool:
    """Nobody loses more than the tolerance and somebody gains more than it."""
    strict = False
    for key, old in before.items():
        new = after[key]
        if new < old - tolerance:
            return False
        if new > old + tolerance:
            strict = True
    return strict


@dataclass(frozen=True)
class SwapOutcome:
    player: Player
    old: Bundle
    new: Bundle
    previous: Matching
    matching: Matching
    affected: Tuple[Player, ...]
    before: Dict[Player, float]
    after: Dict[Player, float]

    @property
    def delta(self) -> float:
        return float(sum(self.after[p] for p in self.affected) - sum(self.before[p] for p in self.affected))


def evaluate_swap(matching: Matching, player: Player, bundle: Bundle, evaluator: NetworkEvaluator,
                  utilities: Optional[Mapping[Player, float]] = None) -> SwapOutcome:
    """Apply a swap and score every affected player before and after it.

    utilities, when given, caches the current player utilities.
    """
    old = matching.bundle(player)
    swapped = apply_swap(matching, player, bundle)
    affected = tuple(affected_set(matching, player, old, bundle, evaluator.cooperative))
    if utilities is None:
        current = matching.to_assignment(evaluator.scenario)
        before = {p: player_utility(evaluator, current, p) for p in affected}
    else:
        before = {p: utilities[p] for p in affected}
    candidate = swapped.to_assignment(evaluator.scenario)
    after = {p: player_utility(evaluator, candidate, p) for p in affected}
    return SwapOutcome(player=player, old=old, new=bundle, previous=matching, matching=swapped,
                       affected=affected, before=before, after=after)


def players_improve(outcome: SwapOutcome, tolerance: float = DEFAULT_TOLERANCE) -> bool:
    """Case 1 condition: every affected player weakly gains, one strictly."""
    return pareto_improves(outcome.before, outcome.after, tolerance)


def channels_improve(outcome: SwapOutcome, tolerance: float = DEFAULT_TOLERANCE) -> bool:
    """Case 2 condition over every (cell, channel) held by an affected player.

    The affected players hold the same channel set before and after the swap.
    """
    before = channel_utilities(outcome.previous, outcome.affected, outcome.before)
    after = channel_utilities(outcome.matching, outcome.affected, outcome.after)
    return pareto_improves(before, after, tolerance)


def outcome_blocks(outcome: SwapOutcome, tolerance: float = DEFAULT_TOLERANCE) -> bool:
    """Blocking test matching the swapper's cell case."""
    if outcome.matching.markets[outcome.player.cell].case == CASE_SPARE:
        return players_improve(outcome, tolerance)
    return channels_improve(outcome, tolerance)


def is_blocking_case1(matching: Matching, player: Player, bundle: Bundle, evaluator: NetworkEvaluator,
                      tolerance: float = DEFAULT_TOLERANCE,
                      utilities: Optional[Mapping[Player, float]] = None) -> bool:
    """Player-utility blocking test: all affected players weakly gain, one strictly."""
    try:
        outcome = evaluate_swap(matching, player, bundle, evaluator, utilities)
    except InvalidSwap:
        return False
    return players_improve(outcome, tolerance)


def is_blocking_case2(matching: Matching, player: Player, bundle: Bundle, evaluator: NetworkEvaluator,
                      tolerance: float = DEFAULT_TOLERANCE,
                      utilities: Optional[Mapping[Player, float]] = None) -> bool:
    """Channel-utility blocking test over every channel held by an affected player."""
    try:
        outcome = evaluate_swap(matching, player, bundle, evaluator, utilities)
    except InvalidSwap:
        return False
    return channels_improve(outcome, tolerance)


# ----------------------------------------------------------------------
# Sweep loop
# ----------------------------------------------------------------------
RULE_IMPROVE = 'improve'  # warm-up: the affected utility sum rises
RULE_BLOCK = 'block'      # blocking swap of the cell's case


@dataclass(frozen=True)
class SwapRecord:
    sweep: int
    cell: int
    player: int
    old_bundle: Bundle
    new_bundle: Bundle
    delta_utility: float
    objective: float
    rule: str = RULE_BLOCK

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sweep': self.sweep,
            'cell': self.cell,
            'player': self.player,
            'rule': self.rule,
            'old_bundle': self.old_bundle.to_list(),
            'new_bundle': self.new_bundle.to_list(),
            'delta_utility': self.delta_utility,
            'objective': self.objective,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'SwapRecord':
        return cls(
            sweep=int(data['sweep']),
            cell=int(data['cell']),
            player=int(data['player']),
            old_bundle=Bundle.from_list(data['old_bundle']),
            new_bundle=Bundle.from_list(data['new_bundle']),
            delta_utility=float(data['delta_utility']),
            objective=float(data['objective']),
            rule=str(data.get('rule', RULE_BLOCK)),
        )


@dataclass(frozen=True)
class SweepStats:
    sweep: int
    accepted: int
    candidates: Dict[Player, int]
    rule: str = RULE_BLOCK


@dataclass
class MatchingResult:
    """Stable matching and the record of how it was reached."""
    matching: Matching
    initial: Matching
    assignment: Assignment
    sweeps: int
    trace: List[SwapRecord]
    objective_history: List[float]
    sweep_stats: List[SweepStats]
    utilities: Dict[Player, float]

    @property
    def swaps(self) -> int:
        return len(self.trace)

    @property
    def objective(self) -> float:
        return self.objective_history[-1]


@dataclass
class _Progress:
    """Mutable state of one run: current matching, utilities and logs."""
    matching: Matching
    utilities: Dict[Player, float]
    max_sweeps: int
    history: List[float] = field(default_factory=list)
    trace: List[SwapRecord] = field(default_factory=list)
    stats: List[SweepStats] = field(default_factory=list)
    sweep: int = 0

    def __post_init__(self):
        self.history.append(total_utility(self.utilities))

    def next_sweep(self) -> int:
        self.sweep += 1
        if self.sweep > self.max_sweeps:
            raise IterationCapExceeded(
                f"no stable matching after {self.max_sweeps} sweeps "
                f"({len(self.trace)} swaps, objective {self.history[-1]:.6f})")
        return self.sweep

    def accept(self, outcome: SwapOutcome, rule: str) -> None:
        self.matching = outcome.matching
        self.utilities.update(outcome.after)
        self.history.append(total_utility(self.utilities))
        self.trace.append(SwapRecord(sweep=self.sweep, cell=outcome.player.cell, player=outcome.player.q,
                                     old_bundle=outcome.old, new_bundle=outcome.new,
                                     delta_utility=outcome.delta, objective=self.history[-1], rule=rule))

    def finish_sweep(self, rule: str, accepted: int, counts: Dict[Player, int]) -> None:
        self.stats.append(SweepStats(sweep=self.sweep, accepted=accepted, candidates=counts, rule=rule))
        logger.debug(f"Sweep {self.sweep} ({rule}): {accepted} swap(s), objective {self.history[-1]:.6f}")


def _improvement_sweep(progress: _Progress, evaluator: NetworkEvaluator, tolerance: float) -> int:
    """Each player in turn takes its bundle with the largest affected-sum gain, if any."""
    progress.next_sweep()
    accepted = 0
    counts: Dict[Player, int] = {}
    n_powers = progress.matching.n_powers
    for market in progress.matching.markets:
        for player in market.players:
            current = progress.matching.bundle(player)
            best: Optional[SwapOutcome] = None
            scanned = 0
            for bundle in candidate_bundles(market, player, n_powers, both_orientations=True):
                scanned += 1
                if bundle == current:
                    continue
                outcome = evaluate_swap(progress.matching, player, bundle, evaluator, progress.utilities)
                if outcome.delta > tolerance and (best is None or outcome.delta > best.delta):
                    best = outcome
            counts[player] = scanned
            if best is not None:
                progress.accept(best, RULE_IMPROVE)
                accepted += 1
    progress.finish_sweep(RULE_IMPROVE, accepted, counts)
    return accepted


def _blocking_sweep(progress: _Progress, evaluator: NetworkEvaluator, tolerance: float) -> int:
    """First-found blocking swaps, applied as soon as they are found."""
    progress.next_sweep()
    accepted = 0
    counts: Dict[Player, int] = {}
    n_powers = progress.matching.n_powers
    for market in progress.matching.markets:
        for player in market.players:
            scanned = 0
            for bundle in candidate_bundles(market, player, n_powers):
                scanned += 1
                if bundle == progress.matching.bundle(player):
                    continue
                outcome = evaluate_swap(progress.matching, player, bundle, evaluator, progress.utilities)
                if outcome_blocks(outcome, tolerance):
                    progress.accept(outcome, RULE_BLOCK)
                    accepted += 1
            counts[player] = scanned
    progress.finish_sweep(RULE_BLOCK, accepted, counts)
    return accepted


def run_algorithm1(scenario: Scenario, evaluator: NetworkEvaluator, seed: int,
                   config: Optional[MatchingConfig] = None,
                   initial: Optional[Matching] = None) -> MatchingResult:
    """Iterate swaps until a full sweep finds no blocking swap.

    With config.warm_start the run first sweeps sum-improving swaps: each
    player moves to the bundle (either pair orientation) that raises the
    affected utility sum the most, until a sweep moves nobody. Blocking
    sweeps follow and visit cells, then players, then candidate bundles in
    scan order; an accepted swap updates the matching immediately and the
    scan goes on from the player's new bundle.

    Args:
        scenario: Scenario being allocated
        evaluator: Utility evaluator (cooperative or not)
        seed: Seed of the initial channel permutation
        config: Sweep cap, utility tolerance and warm-up switch
        initial: Starting matching, overriding the seeded one

    Returns:
        MatchingResult with the finalized assignment

    Raises:
        IterationCapExceeded: no stable matching within config.max_sweeps sweeps
    """
    config = config or MatchingConfig()
    start = initial or initial_matching(scenario, seed)
    progress = _Progress(matching=start, utilities=all_utilities(start, evaluator),
                         max_sweeps=config.max_sweeps)
    if config.warm_start:
        while _improvement_sweep(progress, evaluator, config.tolerance):
            pass
    while _blocking_sweep(progress, evaluator, config.tolerance):
        pass

    assignment = evaluator.finalize(progress.matching.to_assignment(scenario))
    logger.debug(f"Stable after {progress.sweep} sweep(s), {len(progress.trace)} swap(s); "
                 f"P1 cache {evaluator.search.cache_size()} entries")
    return MatchingResult(matching=progress.matching, initial=start, assignment=assignment,
                          sweeps=progress.sweep, trace=progress.trace, objective_history=progress.history,
                          sweep_stats=progress.stats, utilities=dict(progress.utilities))


def find_blocking_swap(matching: Matching, evaluator: NetworkEvaluator,
                       tolerance: float = DEFAULT_TOLERANCE) -> Optional[Tuple[Player, Bundle]]:
    """Full re-scan; the first blocking (player, bundle) or None when stable."""
    utilities = all_utilities(matching, evaluator)
    for market in matching.markets:
        test = is_blocking_case1 if market.case == CASE_SPARE else is_blocking_case2
        for player in market.players:
            for bundle in candidate_bundles(market, player, matching.n_powers):
                if bundle == matching.bundle(player):
                    continue
                if test(matching, player, bundle, evaluator, tolerance, utilities):
                    return player, bundle
    return None


# ----------------------------------------------------------------------
# Replay
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ReplayReport:
    verified: bool
    steps: int
    divergent_step: Optional[int] = None
    message: str = ''


def replay_swaps(initial: Matching, records: Sequence[SwapRecord], evaluator: NetworkEvaluator,
                 tolerance: float = DEFAULT_TOLERANCE) -> ReplayReport:
    """Re-apply a swap log and check every step reproduces exactly.

    Steps are numbered from 1.
    """
    matching = initial
    utilities = all_utilities(matching, evaluator)
    for step, record in enumerate(records, start=1):
        market = matching.markets[record.cell] if 0 <= record.cell < len(matching.markets) else None
        if market is None or not 0 <= record.player < len(market.players):
            return ReplayReport(False, step - 1, step, f"step {step}: unknown player {record.cell}/{record.player}")
        player = market.players[record.player]
        if matching.bundle(player) != record.old_bundle:
            return ReplayReport(False, step - 1, step,
                                f"step {step}: player holds {matching.bundle(player).to_list()}, "
                                f"trace says {record.old_bundle.to_list()}")
        try:
            outcome = evaluate_swap(matching, player, record.new_bundle, evaluator, utilities)
        except InvalidSwap as exc:
            return ReplayReport(False, step - 1, step, f"step {step}: {exc}")
        if record.rule == RULE_IMPROVE:
            if not outcome.delta > tolerance:
                return ReplayReport(False, step - 1, step, f"step {step}: swap does not raise the utility sum")
        elif record.rule == RULE_BLOCK:
            if not outcome_blocks(outcome, tolerance):
                return ReplayReport(False, step - 1, step, f"step {step}: swap is not blocking")
        else:
            return ReplayReport(False, step - 1, step, f"step {step}: unknown rule {record.rule!r}")
        if outcome.delta != record.delta_utility:
            return ReplayReport(False, step - 1, step,
                                f"step {step}: delta {outcome.delta!r} != recorded {record.delta_utility!r}")
        matching = outcome.matching
        utilities.update(outcome.after)
        objective = total_utility(utilities)
        if objective != record.objective:
            return ReplayReport(False, step - 1, step,
                                f"step {step}: objective {objective!r} != recorded {record.objective!r}")
    return ReplayReport(True, len(records), None, 'verified')
