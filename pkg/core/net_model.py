"""
Network Model

Uplink channel realizations (pathloss, log-normal shadowing, Rayleigh
fading over N_r receive antennas) and the per-user SINR of an assignment
with maximal ratio combining at the serving BS and inter-cell interference
from co-channel users of the other cells.

Powers are handled in mW, gains as linear amplitudes.
"""

import json
import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.scenario import Scenario, stream

logger = logging.getLogger(__name__)

REALIZATION_SCHEMA_VERSION = 1

STREAM_SHADOWING = 10
STREAM_FADING = 11


class ContractViolation(ValueError):
    """An operation was called outside its precondition."""


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def pathloss_db(distance_km: float) -> float:
    """Macro-cell pathloss 128.1 + 37.6 log10(d) dB, d in km."""
    if not distance_km > 0:
        raise ValueError(f"Distance must be positive, got {distance_km}")
    return 128.1 + 37.6 * math.log10(distance_km)


def small_scale_fading(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """i.i.d. CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def amplitude(loss_db: np.ndarray) -> np.ndarray:
    """Linear amplitude of a total loss in dB."""
    return np.sqrt(10.0 ** (-np.asarray(loss_db) / 10.0))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Channel vectors H[u, b, m] (length n_rx) from every user to every BS on every channel.

    Attributes:
        gains: complex array (users, cells, channels, n_rx)
        pathloss_db: (users, cells)
        shadowing_db: (users, cells)
        cell_of: serving cell of each user
        noise_mw: total noise power over one channel
        seed: seed the realization was drawn with
    """
    gains: np.ndarray
    pathloss_db: np.ndarray
    shadowing_db: np.ndarray
    cell_of: Tuple[int, ...]
    noise_mw: float
    seed: int

    def __post_init__(self):
        if self.gains.ndim != 4 or self.gains.shape[-1] < 1:
            raise ValueError(f"Gain array must be (users, cells, channels, n_rx), got {self.gains.shape}")
        if len(self.cell_of) != self.gains.shape[0]:
            raise ValueError("cell_of must list one serving cell per user")

    @property
    def n_users(self) -> int:
        return self.gains.shape[0]

    @property
    def n_channels(self) -> int:
        return self.gains.shape[2]

    @property
    def n_rx(self) -> int:
        return self.gains.shape[3]

    def serving(self, u: int, m: int) -> np.ndarray:
        """H of user u towards its own BS on channel m."""
        return self.gains[u, self.cell_of[u], m]

    @cached_property
    def own_gain(self) -> np.ndarray:
        """||H[u, b(u), m]||^2, shape (users, channels)."""
        idx = np.arange(self.n_users)
        serving = self.gains[idx, np.asarray(self.cell_of)]
        return np.sum(np.abs(serving) ** 2, axis=-1)

    @cached_property
    def cross_gain(self) -> np.ndarray:
        """|H[u, b(u), m]^H H[v, b(u), m]|^2, shape (victims, interferers, channels)."""
        idx = np.arange(self.n_users)
        serving = self.gains[idx, np.asarray(self.cell_of)]            # (U, M, R)
        at_victim_bs = self.gains[:, np.asarray(self.cell_of)]          # (V, U, M, R)
        inner = np.einsum('umr,vumr->uvm', serving.conj(), at_victim_bs)
        return np.abs(inner) ** 2

    def to_dict(self) -> Dict[str, Any]:
        return {
            'schema_version': REALIZATION_SCHEMA_VERSION,
            'seed': self.seed,
            'noise_mw': self.noise_mw,
            'cell_of': list(self.cell_of),
            'shape': list(self.gains.shape),
            'gains_real': self.gains.real.ravel().tolist(),
            'gains_imag': self.gains.imag.ravel().tolist(),
            'pathloss_db': self.pathloss_db.ravel().tolist(),
            'shadowing_db': self.shadowing_db.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ChannelRealization':
        if data.get('schema_version') != REALIZATION_SCHEMA_VERSION:
            raise ValueError(f"Unsupported realization schema_version {data.get('schema_version')}")
        shape = tuple(data['shape'])
        gains = (np.array(data['gains_real'], dtype=float)
                 + 1j * np.array(data['gains_imag'], dtype=float)).reshape(shape)
        return cls(
            gains=gains,
            pathloss_db=np.array(data['pathloss_db'], dtype=float).reshape(shape[:2]),
            shadowing_db=np.array(data['shadowing_db'], dtype=float).reshape(shape[:2]),
            cell_of=tuple(int(b) for b in data['cell_of']),
            noise_mw=float(data['noise_mw']),
            seed=int(data['seed']),
        )

    def to_json(self, filepath: str) -> None:
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_json(cls, filepath: str) -> 'ChannelRealization':
        with open(filepath, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def sample_channels(scenario: Scenario, seed: int) -> ChannelRealization:
    """Draw the channel realization of a scenario.

    Shadowing is drawn per (user, BS); fading per (user, BS) over all channels
    and antennas. Each comes from its own stream keyed by the user, so the
    result does not depend on generation order.
    """
    n_users, n_cells = len(scenario.users), scenario.n_cells
    shape = (n_users, n_cells, scenario.n_channels, scenario.n_rx)
    gains = np.empty(shape, dtype=complex)
    pl = np.empty((n_users, n_cells))
    sh = np.empty((n_users, n_cells))
    for user in scenario.users:
        u = user.index
        shadow_rng = stream(seed, STREAM_SHADOWING, u)
        sh[u] = shadow_rng.normal(0.0, scenario.shadowing_std_db, n_cells) \
            if scenario.shadowing_std_db > 0 else 0.0
        for cell in scenario.cells:
            b = cell.index
            d_km = max(user.distance_to(cell.center), scenario.min_distance_m) / 1000.0
            pl[u, b] = pathloss_db(d_km)
            fading = small_scale_fading(stream(seed, STREAM_FADING, u, b),
                                        (scenario.n_channels, scenario.n_rx))
            gains[u, b] = amplitude(pl[u, b] + sh[u, b]) * fading
    return ChannelRealization(
        gains=gains,
        pathloss_db=pl,
        shadowing_db=sh,
        cell_of=tuple(u.cell for u in scenario.users),
        noise_mw=scenario.noise_mw,
        seed=int(seed),
    )


@dataclass(frozen=True)
class Assignment:
    """Decision variables of every user.

    channel_of[u] is the channel index or None, power_dbm[u] a level from the
    power set, symbols_of[u] the symbol count or None when not decided.
    """
    channel_of: Tuple[Optional[int], ...]
    power_dbm: Tuple[float, ...]
    symbols_of: Tuple[Optional[int], ...]

    @classmethod
    def empty(cls, scenario: Scenario) -> 'Assignment':
        n = len(scenario.users)
        return cls(channel_of=(None,) * n,
                   power_dbm=(scenario.power_levels_dbm[0],) * n,
                   symbols_of=(None,) * n)

    def power_mw(self, u: int) -> float:
        return dbm_to_mw(self.power_dbm[u])

    def with_symbols(self, symbols: Dict[int, Optional[int]]) -> 'Assignment':
        merged = list(self.symbols_of)
        for u, k in symbols.items():
            merged[u] = k
        return replace(self, symbols_of=tuple(merged))

    def served(self) -> List[int]:
        return [u for u, m in enumerate(self.channel_of) if m is not None]

    def to_dict(self) -> Dict[str, Any]:
        return {'channel_of': list(self.channel_of), 'power_dbm': list(self.power_dbm),
                'symbols_of': list(self.symbols_of)}

    def violations(self, scenario: Scenario) -> List[str]:
        """Constraint check (orthogonality, one channel per user, pair
        all-or-nothing, admissible symbol counts, power set)."""
        problems = []
        n = len(scenario.users)
        if not len(self.channel_of) == len(self.power_dbm) == len(self.symbols_of) == n:
            return [f"assignment covers {len(self.channel_of)} users, scenario has {n}"]
        used: Dict[Tuple[int, int], int] = {}
        for user in scenario.users:
            u, m = user.index, self.channel_of[user.index]
            if m is None:
                continue
            if not 0 <= m < scenario.n_channels:
                problems.append(f"user {u} on channel {m} outside 0..{scenario.n_channels - 1}")
                continue
            key = (user.cell, m)
            if key in used:
                problems.append(f"users {used[key]} and {u} share channel {m} in cell {user.cell}")
            used[key] = u
        for g in scenario.groups:
            if g.is_bimodal:
                chans = [self.channel_of[u] for u in g.users]
                if (chans[0] is None) != (chans[1] is None):
                    problems.append(f"bimodal group {g.index} has exactly one member on a channel")
        levels = set(scenario.power_levels_dbm)
        p_max = max(scenario.power_levels_dbm)
        for user in scenario.users:
            u = user.index
            if self.power_dbm[u] not in levels or self.power_dbm[u] > p_max:
                problems.append(f"user {u} power {self.power_dbm[u]} dBm not in the power set")
            k = self.symbols_of[u]
            if k is not None and k not in scenario.constants.k_set[user.role]:
                problems.append(f"user {u} symbol count {k} not admissible for {user.role.value}")
        return problems


def interference(assignment: Assignment, realization: ChannelRealization, u: int, m: int) -> float:
    """Inter-cell interference (mW) at user u's BS on channel m after MRC.

    Raises:
        ContractViolation: u is not on channel m
    """
    if assignment.channel_of[u] != m:
        raise ContractViolation(f"user {u} is not assigned channel {m}")
    cell = realization.cell_of[u]
    cross = realization.cross_gain
    total = 0.0
    for v, mv in enumerate(assignment.channel_of):
        if mv == m and realization.cell_of[v] != cell:
            total += assignment.power_mw(v) * cross[u, v, m]
    return float(total)


def sinr(assignment: Assignment, realization: ChannelRealization, u: int,
         intercell: bool = True) -> float:
    """Post-MRC SINR (linear) of user u; 0 when u has no channel.

    With intercell=False the inter-cell interference term is dropped, which
    is the view a BS has without channel information from its neighbours.
    """
    m = assignment.channel_of[u]
    if m is None:
        return 0.0
    g = realization.own_gain[u, m]
    if g <= 0.0:
        return 0.0
    i = interference(assignment, realization, u, m) if intercell else 0.0
    return float(assignment.power_mw(u) * g * g / (g * realization.noise_mw + i))
