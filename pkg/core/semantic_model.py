"""
Semantic Model

Per-task semantic constants, the semantic rate of a user, and the
accuracy lookup tables mapping (symbol counts, SINR) to task accuracy.

The accuracy tables stand in for measured transceiver curves. They are
piecewise constant on a dB grid: a SINR is clamped into the grid range and
looked up in the nearest lower cell.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from core.config import AccuracyConfig, ScenarioConfig

logger = logging.getLogger(__name__)


class TableError(ValueError):
    """Malformed accuracy table or non-monotone surrogate parameterization."""


class TaskRole(Enum):
    """Task role of a single user."""
    SINGLE_TEXT = "single_text"
    BIMODAL_TEXT = "bimodal_text"
    BIMODAL_IMAGE = "bimodal_image"

    @property
    def is_bimodal(self) -> bool:
        return self is not TaskRole.SINGLE_TEXT

    @property
    def is_text(self) -> bool:
        return self is not TaskRole.BIMODAL_IMAGE


@dataclass(frozen=True)
class SemanticConstants:
    """Approximate semantic entropies (suts), symbol-count sets and channel bandwidth."""
    entropy_suts: Dict[TaskRole, float]
    k_set: Dict[TaskRole, Tuple[int, ...]]
    bandwidth_hz: float

    def __post_init__(self):
        for role in TaskRole:
            if self.entropy_suts.get(role, 0.0) <= 0:
                raise ValueError(f"Semantic entropy for {role.value} must be positive")
            ks = self.k_set.get(role, ())
            if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
                raise ValueError(f"Symbol-count set for {role.value} must be non-empty and strictly increasing")
        if self.bandwidth_hz <= 0:
            raise ValueError("Bandwidth must be positive")

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> 'SemanticConstants':
        return cls(
            entropy_suts={
                TaskRole.SINGLE_TEXT: float(config.entropy_si),
                TaskRole.BIMODAL_TEXT: float(config.entropy_bi_text),
                TaskRole.BIMODAL_IMAGE: float(config.entropy_bi_image),
            },
            k_set={
                TaskRole.SINGLE_TEXT: tuple(int(k) for k in config.k_set_si),
                TaskRole.BIMODAL_TEXT: tuple(int(k) for k in config.k_set_bi_text),
                TaskRole.BIMODAL_IMAGE: tuple(int(k) for k in config.k_set_bi_image),
            },
            bandwidth_hz=float(config.bandwidth_hz),
        )

    def to_dict(self) -> Dict:
        return {
            'entropy_suts': {role.value: v for role, v in self.entropy_suts.items()},
            'k_set': {role.value: list(v) for role, v in self.k_set.items()},
            'bandwidth_hz': self.bandwidth_hz,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SemanticConstants':
        return cls(
            entropy_suts={TaskRole(k): float(v) for k, v in data['entropy_suts'].items()},
            k_set={TaskRole(k): tuple(int(x) for x in v) for k, v in data['k_set'].items()},
            bandwidth_hz=float(data['bandwidth_hz']),
        )


def semantic_rate(constants: SemanticConstants, role: TaskRole, k: int) -> float:
    """Semantic rate in suts/s: entropy * W / k.

    Raises:
        ValueError: k is not an admissible symbol count for the role
    """
    if k not in constants.k_set[role]:
        raise ValueError(f"k={k} is not in the admissible set for {role.value}")
    return constants.entropy_suts[role] * constants.bandwidth_hz / k


def sinr_to_db(sinr: float) -> float:
    """Linear SINR to dB; zero maps to -inf (clamped by the table lookup)."""
    if sinr <= 0.0:
        return -np.inf
    return 10.0 * np.log10(sinr)


@dataclass(frozen=True, eq=False)
class AccuracyTable:
    """Discretized accuracy map.

    Single-modal tables have entries[k_idx, sinr_idx]; bimodal tables have
    entries[kt_idx, ki_idx, sinr_t_idx, sinr_i_idx]. Every entry lies in
    [0, 1] and is non-decreasing along each SINR axis.
    """
    sinr_grid_db: np.ndarray
    k_values: Tuple[Tuple[int, ...], ...]
    entries: np.ndarray
    bimodal: bool = False
    _k_index: Tuple[Dict[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.sinr_grid_db, dtype=float)
        entries = np.asarray(self.entries, dtype=float)
        n_k = len(self.k_values)
        if n_k != (2 if self.bimodal else 1):
            raise TableError(f"Expected {2 if self.bimodal else 1} symbol-count axes, got {n_k}")
        if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
            raise TableError("SINR grid must be a non-empty strictly increasing vector")
        expected = tuple(len(ks) for ks in self.k_values) + (grid.size,) * n_k
        if entries.shape != expected:
            raise TableError(f"Table shape {entries.shape} does not cover the grid {expected}")
        if not np.all(np.isfinite(entries)):
            raise TableError("Table has missing entries")
        if np.any(entries < 0.0) or np.any(entries > 1.0):
            raise TableError("Accuracy entries must lie in [0, 1]")
        for axis in range(n_k, 2 * n_k):
            if np.any(np.diff(entries, axis=axis) < 0.0):
                raise TableError("Accuracy must be non-decreasing in SINR at every symbol count")
        object.__setattr__(self, 'sinr_grid_db', grid)
        object.__setattr__(self, 'entries', entries)
        object.__setattr__(self, '_k_index',
                           tuple({int(k): i for i, k in enumerate(ks)} for ks in self.k_values))

    def sinr_cell(self, sinr: float) -> int:
        """Nearest-lower grid cell of a linear SINR, clamped to the grid."""
        sinr_db = sinr_to_db(sinr)
        idx = int(np.searchsorted(self.sinr_grid_db, sinr_db, side='right')) - 1
        return min(max(idx, 0), self.sinr_grid_db.size - 1)

    def k_index(self, axis: int, k: int) -> int:
        try:
            return self._k_index[axis][int(k)]
        except KeyError:
            raise ValueError(f"k={k} is not covered by the accuracy table") from None

    def lookup_cells(self, ks: Sequence[int], cells: Sequence[int]) -> float:
        """Accuracy for symbol counts and pre-quantized SINR cells."""
        idx = tuple(self.k_index(i, k) for i, k in enumerate(ks)) + tuple(cells)
        return float(self.entries[idx])

    def to_frame(self) -> pd.DataFrame:
        """Long-format frame: k[,k2], sinr_db[,sinr2_db], xi."""
        grid = self.sinr_grid_db
        if not self.bimodal:
            kk, gg = np.meshgrid(self.k_values[0], grid, indexing='ij')
            return pd.DataFrame({'k': kk.ravel(), 'sinr_db': gg.ravel(), 'xi': self.entries.ravel()})
        kt, ki, gt, gi = np.meshgrid(self.k_values[0], self.k_values[1], grid, grid, indexing='ij')
        return pd.DataFrame({
            'k': kt.ravel(), 'k2': ki.ravel(),
            'sinr_db': gt.ravel(), 'sinr2_db': gi.ravel(),
            'xi': self.entries.ravel(),
        })

    def to_csv(self, filepath: str) -> None:
        self.to_frame().to_csv(filepath, index=False)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'AccuracyTable':
        bimodal = 'k2' in frame.columns
        k_cols = ['k', 'k2'] if bimodal else ['k']
        s_cols = ['sinr_db', 'sinr2_db'] if bimodal else ['sinr_db']
        missing = [c for c in k_cols + s_cols + ['xi'] if c not in frame.columns]
        if missing:
            raise TableError(f"Accuracy CSV is missing columns: {missing}")
        if frame.duplicated(subset=k_cols + s_cols).any():
            raise TableError("Accuracy CSV has duplicate grid points")
        k_values = tuple(tuple(int(v) for v in sorted(frame[c].unique())) for c in k_cols)
        grid = np.array(sorted(frame[s_cols[0]].unique()), dtype=float)
        for c in s_cols[1:]:
            if not np.array_equal(np.sort(frame[c].unique()), grid):
                raise TableError("Both SINR axes of a bimodal table must share one grid")
        shape = tuple(len(ks) for ks in k_values) + (grid.size,) * len(s_cols)
        if len(frame) != int(np.prod(shape)):
            raise TableError(f"Accuracy CSV has {len(frame)} rows, the full grid needs {int(np.prod(shape))}")
        entries = (frame.set_index(k_cols + s_cols)['xi']
                   .sort_index()
                   .to_numpy(dtype=float)
                   .reshape(shape))
        return cls(sinr_grid_db=grid, k_values=k_values, entries=entries, bimodal=bimodal)

    @classmethod
    def from_csv(cls, filepath: str) -> 'AccuracyTable':
        return cls.from_frame(pd.read_csv(filepath))


@dataclass(frozen=True)
class AccuracyTables:
    """The pair of tables used by the network: single-modal text and bimodal VQA."""
    single: AccuracyTable
    bimodal: AccuracyTable


def accuracy(table: AccuracyTable, ks: Sequence[int], sinrs: Sequence[float]) -> float:
    """Task accuracy for symbol count(s) and linear SINR(s)."""
    cells = [table.sinr_cell(s) for s in sinrs]
    return table.lookup_cells(ks, cells)


def _grid(config: AccuracyConfig) -> np.ndarray:
    if config.sinr_step_db <= 0 or config.sinr_max_db <= config.sinr_min_db:
        raise TableError("SINR grid needs a positive step and max > min")
    n = int(round((config.sinr_max_db - config.sinr_min_db) / config.sinr_step_db)) + 1
    return config.sinr_min_db + config.sinr_step_db * np.arange(n)


def _check_shape(config: AccuracyConfig) -> None:
    if config.slope_per_db <= 0:
        raise TableError("Surrogate slope must be positive (accuracy must grow with SINR)")
    if not 0.0 <= config.xi_floor < config.xi_ceiling <= 1.0:
        raise TableError("Surrogate needs 0 <= xi_floor < xi_ceiling <= 1")
    if config.saturation <= 0:
        raise TableError("Surrogate saturation must be positive")
    if config.mid_db_at_kmin < config.mid_db_at_kmax:
        raise TableError("Surrogate midpoint must not increase with the symbol count")


def surrogate_factor(config: AccuracyConfig, k_values: Sequence[int], grid_db: np.ndarray) -> np.ndarray:
    """Per-user factor in [0, 1], shape (len(k_values), len(grid)).

    Saturating in k, logistic in SINR with a midpoint that moves down
    linearly as k grows.
    """
    ks = np.asarray(k_values, dtype=float)
    k_min, k_max = ks[0], ks[-1]
    span = (ks - k_min) / (k_max - k_min) if k_max > k_min else np.ones_like(ks)
    saturation = 1.0 - np.exp(-config.saturation * ks / k_max)
    mid = config.mid_db_at_kmin - (config.mid_db_at_kmin - config.mid_db_at_kmax) * span
    logistic = expit(config.slope_per_db * (grid_db[None, :] - mid[:, None]))
    return saturation[:, None] * logistic


def build_surrogate_tables(config: AccuracyConfig, constants: SemanticConstants) -> AccuracyTables:
    """Build the surrogate single-modal and bimodal accuracy tables.

    Single-modal: xi = floor + (ceiling - floor) * F(k, sinr).
    Bimodal: xi = floor + (ceiling - floor) * F_t(k_t, sinr_t) * F_i(k_i, sinr_i).
    """
    _check_shape(config)
    grid = _grid(config)
    scale = config.xi_ceiling - config.xi_floor

    k_si = constants.k_set[TaskRole.SINGLE_TEXT]
    single = config.xi_floor + scale * surrogate_factor(config, k_si, grid)

    k_t = constants.k_set[TaskRole.BIMODAL_TEXT]
    k_i = constants.k_set[TaskRole.BIMODAL_IMAGE]
    f_t = surrogate_factor(config, k_t, grid)
    f_i = surrogate_factor(config, k_i, grid)
    bimodal = config.xi_floor + scale * np.einsum('ag,bh->abgh', f_t, f_i)

    logger.debug(f"Built surrogate tables on {grid.size} SINR cells "
                 f"({grid[0]:.1f}..{grid[-1]:.1f} dB)")
    return AccuracyTables(
        single=AccuracyTable(sinr_grid_db=grid, k_values=(tuple(k_si),), entries=single),
        bimodal=AccuracyTable(sinr_grid_db=grid, k_values=(tuple(k_t), tuple(k_i)),
                              entries=bimodal, bimodal=True),
    )


def load_tables(config: AccuracyConfig, constants: SemanticConstants) -> AccuracyTables:
    """Surrogate tables, with any CSV-provided table taking precedence."""
    tables = build_surrogate_tables(config, constants)
    single, bimodal = tables.single, tables.bimodal
    if config.single_csv:
        single = AccuracyTable.from_csv(config.single_csv)
        if single.bimodal:
            raise TableError(f"{config.single_csv} holds a bimodal table")
        logger.info(f"Loaded single-modal accuracy table from {config.single_csv}")
    if config.bimodal_csv:
        bimodal = AccuracyTable.from_csv(config.bimodal_csv)
        if not bimodal.bimodal:
            raise TableError(f"{config.bimodal_csv} holds a single-modal table")
        logger.info(f"Loaded bimodal accuracy table from {config.bimodal_csv}")
    _check_coverage(single, (constants.k_set[TaskRole.SINGLE_TEXT],))
    _check_coverage(bimodal, (constants.k_set[TaskRole.BIMODAL_TEXT],
                              constants.k_set[TaskRole.BIMODAL_IMAGE]))
    return AccuracyTables(single=single, bimodal=bimodal)


def _check_coverage(table: AccuracyTable, k_sets: Sequence[Sequence[int]]) -> None:
    for axis, ks in enumerate(k_sets):
        missing = set(ks) - set(table.k_values[axis])
        if missing:
            raise TableError(f"Accuracy table lacks symbol counts {sorted(missing)}")
