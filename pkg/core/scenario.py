"""
Scenario Sampling

Builds the immutable world description of one experiment: cell layout,
user placement, user groups, radio constants and per-user QoE parameters.
All randomness comes from streams split off the master seed per purpose,
so the same (config, seed) always yields the same scenario.
"""

import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

from core.config import ScenarioConfig
from core.qoe import QoEParams
from core.semantic_model import SemanticConstants, TaskRole

logger = logging.getLogger(__name__)

SCENARIO_SCHEMA_VERSION = 1

# Stream purposes for SeedSequence spawn keys
STREAM_LAYOUT = 0
STREAM_POSITIONS = 1
STREAM_PARAMS = 2


def stream(seed: int, purpose: int, *entity: int) -> np.random.Generator:
    """Independent RNG stream for (purpose, entity) under a master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(purpose, *entity)))


@dataclass(frozen=True)
class Cell:
    index: int
    center: Tuple[float, float]
    radius_m: float


@dataclass(frozen=True)
class User:
    index: int
    cell: int
    role: TaskRole
    position: Tuple[float, float]
    params: QoEParams

    def distance_to(self, point: Tuple[float, float]) -> float:
        return math.hypot(self.position[0] - point[0], self.position[1] - point[1])


@dataclass(frozen=True)
class Group:
    """A decision unit: one single-modal user, or a (text, image) bimodal pair.

    q is the index inside its cell; bimodal pairs come first.
    """
    index: int
    cell: int
    q: int
    users: Tuple[int, ...]

    @property
    def is_bimodal(self) -> bool:
        return len(self.users) == 2


@dataclass(frozen=True)
class Scenario:
    cells: Tuple[Cell, ...]
    users: Tuple[User, ...]
    groups: Tuple[Group, ...]
    n_channels: int
    power_levels_dbm: Tuple[float, ...]
    noise_psd_dbm_hz: float
    n_rx: int
    shadowing_std_db: float
    min_distance_m: float
    constants: SemanticConstants
    n_si: int
    n_bi: int
    seed: int

    @property
    def bandwidth_hz(self) -> float:
        return self.constants.bandwidth_hz

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def noise_mw(self) -> float:
        """Total noise power over one channel, mW."""
        return 10.0 ** (self.noise_psd_dbm_hz / 10.0) * self.bandwidth_hz

    def groups_in(self, cell: int) -> List[Group]:
        return sorted((g for g in self.groups if g.cell == cell), key=lambda g: g.q)

    def users_in(self, cell: int) -> List[User]:
        return [u for u in self.users if u.cell == cell]

    def bimodal_count(self, cell: int) -> int:
        return sum(1 for g in self.groups if g.cell == cell and g.is_bimodal)

    def group_of_user(self) -> Dict[int, Group]:
        return {u: g for g in self.groups for u in g.users}

    def with_g_th(self, g_th: float) -> 'Scenario':
        users = tuple(replace(u, params=replace(u.params, g_th=g_th)) for u in self.users)
        return replace(self, users=users)

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        return {
            'schema_version': SCENARIO_SCHEMA_VERSION,
            'seed': self.seed,
            'n_si': self.n_si,
            'n_bi': self.n_bi,
            'n_channels': self.n_channels,
            'power_levels_dbm': list(self.power_levels_dbm),
            'noise_psd_dbm_hz': self.noise_psd_dbm_hz,
            'n_rx': self.n_rx,
            'shadowing_std_db': self.shadowing_std_db,
            'min_distance_m': self.min_distance_m,
            'constants': self.constants.to_dict(),
            'cells': [{'index': c.index, 'center': list(c.center), 'radius_m': c.radius_m}
                      for c in self.cells],
            'users': [{'index': u.index, 'cell': u.cell, 'role': u.role.value,
                       'position': list(u.position), 'params': u.params.to_dict()}
                      for u in self.users],
            'groups': [{'index': g.index, 'cell': g.cell, 'q': g.q, 'users': list(g.users)}
                       for g in self.groups],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Scenario':
        version = data.get('schema_version')
        if version != SCENARIO_SCHEMA_VERSION:
            raise ValueError(f"Unsupported scenario schema_version {version}")
        return cls(
            cells=tuple(Cell(index=int(c['index']), center=tuple(c['center']),
                             radius_m=float(c['radius_m'])) for c in data['cells']),
            users=tuple(User(index=int(u['index']), cell=int(u['cell']), role=TaskRole(u['role']),
                             position=tuple(u['position']), params=QoEParams(**u['params']))
                        for u in data['users']),
            groups=tuple(Group(index=int(g['index']), cell=int(g['cell']), q=int(g['q']),
                               users=tuple(int(x) for x in g['users'])) for g in data['groups']),
            n_channels=int(data['n_channels']),
            power_levels_dbm=tuple(float(p) for p in data['power_levels_dbm']),
            noise_psd_dbm_hz=float(data['noise_psd_dbm_hz']),
            n_rx=int(data['n_rx']),
            shadowing_std_db=float(data['shadowing_std_db']),
            min_distance_m=float(data['min_distance_m']),
            constants=SemanticConstants.from_dict(data['constants']),
            n_si=int(data['n_si']),
            n_bi=int(data['n_bi']),
            seed=int(data['seed']),
        )

    def to_json(self, filepath: str) -> None:
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def from_json(cls, filepath: str) -> 'Scenario':
        with open(filepath, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


# ----------------------------------------------------------------------
# Sampling
# ----------------------------------------------------------------------
def cell_centers(config: ScenarioConfig) -> List[Tuple[float, float]]:
    """Cell centers: explicit override, else a ring with neighbouring sites one ISD apart.

    Three cells give an equilateral triangle with side ISD.
    """
    if config.cell_centers_m is not None:
        return [(float(x), float(y)) for x, y in config.cell_centers_m]
    n = config.n_cells
    if n == 1:
        return [(0.0, 0.0)]
    ring = config.inter_site_distance_m / (2.0 * math.sin(math.pi / n))
    return [(ring * math.cos(2.0 * math.pi * b / n + math.pi / 2.0),
             ring * math.sin(2.0 * math.pi * b / n + math.pi / 2.0)) for b in range(n)]


def distribute(count: int, n_cells: int, rng: np.random.Generator,
               override: Optional[Tuple[int, ...]] = None) -> List[int]:
    """Cell of each of `count` groups: seeded shuffle of cells, then round-robin."""
    if override is not None:
        return [b for b, c in enumerate(override) for _ in range(c)]
    order = rng.permutation(n_cells)
    return [int(order[i % n_cells]) for i in range(count)]


def _truncated_normal(rng: np.random.Generator, mean: float, std: float,
                      sigmas: float, floor: float) -> float:
    if std <= 0:
        return max(mean, floor)
    value = truncnorm.rvs(-sigmas, sigmas, loc=mean, scale=std, random_state=rng)
    return max(float(value), floor)


def _sample_params(config: ScenarioConfig, role: TaskRole, rng: np.random.Generator) -> QoEParams:
    if role is TaskRole.BIMODAL_IMAGE:
        phi_lo, phi_hi = config.image_phi_req_ksuts
        beta_mean, beta_std = config.image_beta_mean, config.image_beta_std
    else:
        phi_lo, phi_hi = config.text_phi_req_ksuts
        beta_mean, beta_std = config.text_beta_mean, config.text_beta_std
    sig, floor = config.truncation_sigmas, config.positive_floor
    return QoEParams(
        w=float(rng.uniform(*config.w_range)),
        beta=_truncated_normal(rng, beta_mean, beta_std, sig, floor),
        lam=_truncated_normal(rng, config.lambda_mean, config.lambda_std, sig, floor),
        phi_req=float(rng.uniform(phi_lo, phi_hi)),
        xi_req=float(rng.uniform(*config.xi_req_range)),
        g_th=float(config.g_th),
    )


def _sample_position(center: Tuple[float, float], config: ScenarioConfig,
                     rng: np.random.Generator) -> Tuple[float, float]:
    # uniform over the annulus [min_distance, radius]
    r = math.sqrt(rng.uniform(config.min_distance_m ** 2, config.cell_radius_m ** 2))
    theta = rng.uniform(0.0, 2.0 * math.pi)
    return (center[0] + r * math.cos(theta), center[1] + r * math.sin(theta))


def sample_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Sample a full scenario.

    Args:
        config: Layout, constants and distributions
        seed: Master seed

    Returns:
        Immutable Scenario
    """
    config.validate()
    centers = cell_centers(config)
    cells = tuple(Cell(index=b, center=c, radius_m=float(config.cell_radius_m))
                  for b, c in enumerate(centers))

    layout_rng = stream(seed, STREAM_LAYOUT)
    pair_cells = distribute(config.n_bi, config.n_cells, layout_rng, config.pairs_per_cell)
    single_cells = distribute(config.n_si, config.n_cells, layout_rng, config.singles_per_cell)

    users: List[User] = []
    groups: List[Group] = []
    for b in range(config.n_cells):
        members: List[Tuple[TaskRole, ...]] = (
            [(TaskRole.BIMODAL_TEXT, TaskRole.BIMODAL_IMAGE)] * pair_cells.count(b)
            + [(TaskRole.SINGLE_TEXT,)] * single_cells.count(b))
        for q, roles in enumerate(members):
            ids = []
            for role in roles:
                u = len(users)
                users.append(User(
                    index=u, cell=b, role=role,
                    position=_sample_position(centers[b], config, stream(seed, STREAM_POSITIONS, u)),
                    params=_sample_params(config, role, stream(seed, STREAM_PARAMS, u)),
                ))
                ids.append(u)
            groups.append(Group(index=len(groups), cell=b, q=q, users=tuple(ids)))

    scenario = Scenario(
        cells=cells,
        users=tuple(users),
        groups=tuple(groups),
        n_channels=int(config.n_channels),
        power_levels_dbm=tuple(float(p) for p in config.power_levels_dbm),
        noise_psd_dbm_hz=float(config.noise_psd_dbm_hz),
        n_rx=int(config.n_rx),
        shadowing_std_db=float(config.shadowing_std_db),
        min_distance_m=float(config.min_distance_m),
        constants=SemanticConstants.from_config(config),
        n_si=int(config.n_si),
        n_bi=int(config.n_bi),
        seed=int(seed),
    )
    logger.debug(f"Sampled scenario seed={seed}: {len(cells)} cells, {len(users)} users, "
                 f"{len(groups)} groups, {config.n_channels} channels")
    return scenario


# ----------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str

    def to_dict(self) -> Dict[str, str]:
        return {'code': self.code, 'subject': self.subject, 'message': self.message}


def validate(scenario: Scenario) -> List[Violation]:
    """Check every scenario invariant; an empty list means valid."""
    found: List[Violation] = []
    users = {u.index: u for u in scenario.users}

    singles = sum(1 for g in scenario.groups if not g.is_bimodal)
    pairs = sum(1 for g in scenario.groups if g.is_bimodal)
    if singles != scenario.n_si:
        found.append(Violation('totals', 'groups', f"{singles} single-modal users, expected {scenario.n_si}"))
    if pairs != scenario.n_bi:
        found.append(Violation('totals', 'groups', f"{pairs} bimodal pairs, expected {scenario.n_bi}"))

    seen: Dict[int, int] = {}
    for g in scenario.groups:
        subject = f"group {g.index}"
        if len(g.users) not in (1, 2):
            found.append(Violation('group_size', subject, f"group has {len(g.users)} users"))
            continue
        missing = [u for u in g.users if u not in users]
        if missing:
            found.append(Violation('unknown_user', subject, f"unknown users {missing}"))
            continue
        for u in g.users:
            if u in seen:
                found.append(Violation('duplicate_user', f"user {u}",
                                       f"user is in groups {seen[u]} and {g.index}"))
            seen[u] = g.index
        roles = sorted(users[u].role.value for u in g.users)
        if g.is_bimodal:
            if roles != sorted([TaskRole.BIMODAL_TEXT.value, TaskRole.BIMODAL_IMAGE.value]):
                found.append(Violation('roles', subject, f"bimodal pair has roles {roles}"))
            if users[g.users[0]].role is not TaskRole.BIMODAL_TEXT:
                found.append(Violation('roles', subject, "bimodal pair must list the text user first"))
        elif roles != [TaskRole.SINGLE_TEXT.value]:
            found.append(Violation('roles', subject, f"single-modal group has role {roles}"))
        if any(users[u].cell != g.cell for u in g.users):
            found.append(Violation('split_group', subject,
                                   f"members sit in cells {[users[u].cell for u in g.users]}, group in {g.cell}"))

    for b in range(scenario.n_cells):
        cell_groups = scenario.groups_in(b)
        qs = [g.q for g in cell_groups]
        if qs != list(range(len(cell_groups))):
            found.append(Violation('group_index', f"cell {b}", f"group indices {qs} are not 0..n-1"))
        flags = [g.is_bimodal for g in cell_groups]
        if flags != sorted(flags, reverse=True):
            found.append(Violation('group_order', f"cell {b}", "bimodal pairs must precede single-modal users"))

    for u in scenario.users:
        subject = f"user {u.index}"
        if u.index not in seen:
            found.append(Violation('orphan_user', subject, "user belongs to no group"))
        if not 0 <= u.cell < scenario.n_cells:
            found.append(Violation('unknown_cell', subject, f"cell {u.cell} does not exist"))
            continue
        cell = scenario.cells[u.cell]
        d = u.distance_to(cell.center)
        if d < scenario.min_distance_m - 1e-9:
            found.append(Violation('distance_floor', subject,
                                   f"{d:.2f} m from its BS, floor is {scenario.min_distance_m} m"))
        if d > cell.radius_m + 1e-9:
            found.append(Violation('outside_cell', subject, f"{d:.2f} m from its BS, radius {cell.radius_m} m"))
        for name, problem in u.params.violations().items():
            found.append(Violation(f"param_{name}", subject, problem))

    if scenario.n_channels < 1:
        found.append(Violation('channels', 'scenario', "at least one channel is required"))
    levels = list(scenario.power_levels_dbm)
    if not levels or levels != sorted(set(levels)):
        found.append(Violation('power_levels', 'scenario', "power levels must be strictly increasing"))
    return found
