"""
Configuration

Declarative experiment configuration loaded from JSON or TOML.
Every section is a dataclass whose defaults are the single source of truth
for the simulation setup; unknown keys are rejected to catch typos.
"""

import json
import os
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration document or parameter combination."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Network layout, radio constants and QoE parameter distributions."""
    n_cells: int = 3
    n_si: int = 6                      # single-modal users, network-wide
    n_bi: int = 6                      # bimodal user pairs, network-wide
    n_channels: int = 6
    power_levels_dbm: Tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    bandwidth_hz: float = 180e3
    noise_psd_dbm_hz: float = -174.0
    n_rx: int = 2
    cell_radius_m: float = 500.0
    inter_site_distance_m: float = 1000.0
    min_distance_m: float = 10.0
    shadowing_std_db: float = 6.0
    cell_centers_m: Optional[Tuple[Tuple[float, float], ...]] = None
    singles_per_cell: Optional[Tuple[int, ...]] = None
    pairs_per_cell: Optional[Tuple[int, ...]] = None

    # Semantic constants (suts) and admissible symbol counts
    entropy_si: float = 4.0
    entropy_bi_text: float = 4.0
    entropy_bi_image: float = 1600.0
    k_set_si: Tuple[int, ...] = tuple(range(1, 21))
    k_set_bi_text: Tuple[int, ...] = (2, 4, 6, 8, 10)
    k_set_bi_image: Tuple[int, ...] = (394, 788, 1576, 2364, 3152)

    # QoE parameter distributions
    g_th: float = 0.5
    w_range: Tuple[float, float] = (0.0, 1.0)
    xi_req_range: Tuple[float, float] = (0.8, 0.9)
    lambda_mean: float = 55.0
    lambda_std: float = 2.5
    text_phi_req_ksuts: Tuple[float, float] = (50.0, 70.0)
    text_beta_mean: float = 0.2
    text_beta_std: float = 0.05
    image_phi_req_ksuts: Tuple[float, float] = (80.0, 100.0)
    image_beta_mean: float = 0.1
    image_beta_std: float = 0.02
    truncation_sigmas: float = 4.0
    positive_floor: float = 1e-6

    def validate(self) -> None:
        """Raise ConfigError on any inconsistent setting."""
        if self.n_cells < 1:
            raise ConfigError(f"scenario.n_cells must be >= 1, got {self.n_cells}")
        if self.n_si < 0 or self.n_bi < 0:
            raise ConfigError("scenario.n_si and scenario.n_bi must be non-negative")
        if self.n_channels < 1:
            raise ConfigError(f"scenario.n_channels must be >= 1, got {self.n_channels}")
        if self.n_rx < 1:
            raise ConfigError(f"scenario.n_rx must be >= 1, got {self.n_rx}")
        levels = list(self.power_levels_dbm)
        if not levels or levels != sorted(set(levels)):
            raise ConfigError("scenario.power_levels_dbm must be non-empty and strictly increasing")
        if self.bandwidth_hz <= 0:
            raise ConfigError("scenario.bandwidth_hz must be positive")
        if not 0 < self.min_distance_m < self.cell_radius_m:
            raise ConfigError("scenario.min_distance_m must lie in (0, cell_radius_m)")
        if self.shadowing_std_db < 0:
            raise ConfigError("scenario.shadowing_std_db must be non-negative")
        if self.cell_centers_m is not None and len(self.cell_centers_m) != self.n_cells:
            raise ConfigError(
                f"scenario.cell_centers_m lists {len(self.cell_centers_m)} centers for {self.n_cells} cells")
        for name, per_cell, total in (("singles_per_cell", self.singles_per_cell, self.n_si),
                                      ("pairs_per_cell", self.pairs_per_cell, self.n_bi)):
            if per_cell is None:
                continue
            if len(per_cell) != self.n_cells:
                raise ConfigError(f"scenario.{name} needs one entry per cell ({self.n_cells})")
            if any(c < 0 for c in per_cell) or sum(per_cell) != total:
                raise ConfigError(
                    f"scenario.{name}={list(per_cell)} cannot distribute {total} groups over the cells")
        for name in ("entropy_si", "entropy_bi_text", "entropy_bi_image"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"scenario.{name} must be positive")
        for name in ("k_set_si", "k_set_bi_text", "k_set_bi_image"):
            ks = list(getattr(self, name))
            if not ks or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
                raise ConfigError(f"scenario.{name} must be non-empty, positive and strictly increasing")
        if not 0.0 <= self.g_th <= 1.0:
            raise ConfigError(f"scenario.g_th must lie in [0, 1], got {self.g_th}")
        lo, hi = self.w_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError("scenario.w_range must lie inside [0, 1]")
        lo, hi = self.xi_req_range
        if not 0.0 < lo <= hi < 1.0:
            raise ConfigError("scenario.xi_req_range must lie inside (0, 1)")
        if self.truncation_sigmas <= 0 or self.positive_floor <= 0:
            raise ConfigError("scenario.truncation_sigmas and positive_floor must be positive")


@dataclass(frozen=True)
class AccuracyConfig:
    """Grid and shape of the surrogate accuracy tables.

    Externally measured tables can replace the surrogate by pointing
    single_csv / bimodal_csv at exported CSV files.
    """
    sinr_min_db: float = -10.0
    sinr_max_db: float = 30.0
    sinr_step_db: float = 1.0
    xi_floor: float = 0.05
    xi_ceiling: float = 0.98
    slope_per_db: float = 0.5
    saturation: float = 6.0
    mid_db_at_kmin: float = 4.0
    mid_db_at_kmax: float = -4.0
    single_csv: Optional[str] = None
    bimodal_csv: Optional[str] = None


@dataclass(frozen=True)
class MatchingConfig:
    """Sweep cap, utility tolerance and the sum-improving warm-up phase."""
    max_sweeps: int = 10_000
    tolerance: float = 1e-9
    warm_start: bool = True

    def validate(self) -> None:
        if self.max_sweeps < 1:
            raise ConfigError("matching.max_sweeps must be >= 1")
        if self.tolerance < 0:
            raise ConfigError("matching.tolerance must be non-negative")


SWEEP_AXES = ('none', 'g_th', 'n_channels', 'n_si', 'n_bi', 'n_cells')


@dataclass(frozen=True)
class SweepConfig:
    axis: str = 'none'
    values: Tuple[float, ...] = (0.0,)

    def validate(self) -> None:
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep.values must not be empty")
        if self.axis == 'none' and len(self.values) != 1:
            raise ConfigError("sweep.values must hold a single placeholder value when sweep.axis is 'none'")
        if len(set(self.values)) != len(self.values):
            raise ConfigError("sweep.values must not repeat a value")


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    solvers: Tuple[str, ...] = ('qoe_max', 'random', 'upper_bound')
    seeds: Union[int, Tuple[int, ...]] = 10
    master_seed: int = 0
    workers: Optional[int] = None
    save_traces: bool = False
    record_wall_time: bool = False
    oracle_max_leaves: int = 10 ** 7
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    accuracy: AccuracyConfig = field(default_factory=AccuracyConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def seed_list(self) -> List[int]:
        """Concrete per-run seeds: a count expands to master_seed + i."""
        if isinstance(self.seeds, int):
            return [self.master_seed + i for i in range(self.seeds)]
        return [int(s) for s in self.seeds]

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"Unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})")
        if isinstance(self.seeds, int) and self.seeds < 0:
            raise ConfigError("seeds must be a non-negative count or a list of seeds")
        if not self.solvers:
            raise ConfigError("solvers must list at least one solver")
        self.scenario.validate()
        self.matching.validate()
        self.sweep.validate()

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _coerce(value: Any) -> Any:
    """Lists from JSON/TOML become tuples where the dataclass default is a tuple."""
    if isinstance(value, list):
        return tuple(_coerce(v) for v in value)
    return value


def build_section(cls, data: Dict[str, Any], path: str = ''):
    """Instantiate a config dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"Config section '{path or 'root'}' must be a table/object")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"Unknown config key: {path}{key}")
        f = known[key]
        nested = f.default_factory
        if nested is not MISSING and is_dataclass(nested):
            kwargs[key] = build_section(nested, value, f"{path}{key}.")
        else:
            kwargs[key] = _coerce(value)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"Invalid config section '{path or 'root'}': {exc}") from exc


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from an already-parsed document."""
    if 'schema_version' not in data:
        raise ConfigError("Config is missing the required 'schema_version' field")
    config = build_section(ExperimentConfig, data)
    config.validate()
    return config


def load_config(filepath: str) -> ExperimentConfig:
    """Load an experiment config from a .json or .toml file.

    Args:
        filepath: Path to the config document

    Returns:
        Validated ExperimentConfig
    """
    if not os.path.exists(filepath):
        raise ConfigError(f"Config file not found: {filepath}")
    ext = os.path.splitext(filepath)[1].lower()
    try:
        if ext == '.toml':
            with open(filepath, 'rb') as f:
                data = tomllib.load(f)
        elif ext == '.json':
            with open(filepath, 'r', encoding='utf-8') as f:
                data = json.load(f)
        else:
            raise ConfigError(f"Unsupported config format '{ext}' (use .json or .toml)")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"Could not parse {filepath}: {exc}") from exc
    return parse_config(data)
