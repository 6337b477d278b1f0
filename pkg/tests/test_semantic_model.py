import numpy as np
import pandas as pd
import pytest

from core.config import AccuracyConfig, ScenarioConfig
from core.semantic_model import (
    AccuracyTable, SemanticConstants, TableError, TaskRole, accuracy, build_surrogate_tables,
    load_tables, semantic_rate,
)


@pytest.fixture
def constants():
    return SemanticConstants.from_config(ScenarioConfig())


def test_semantic_rate_exact_for_every_single_modal_k(constants):
    for k in range(1, 21):
        assert semantic_rate(constants, TaskRole.SINGLE_TEXT, k) == 4.0 * 180e3 / k


def test_semantic_rate_rejects_inadmissible_k(constants):
    with pytest.raises(ValueError):
        semantic_rate(constants, TaskRole.BIMODAL_TEXT, 3)
    with pytest.raises(ValueError):
        semantic_rate(constants, TaskRole.SINGLE_TEXT, 21)


def test_image_rate(constants):
    assert semantic_rate(constants, TaskRole.BIMODAL_IMAGE, 394) == 1600.0 * 180e3 / 394


def test_surrogate_shape_and_range(default_tables):
    single, bimodal = default_tables.single, default_tables.bimodal
    assert single.entries.shape == (20, 41)
    assert bimodal.entries.shape == (5, 5, 41, 41)
    for table in (single, bimodal):
        assert table.entries.min() >= 0.05
        assert table.entries.max() <= 0.98


def test_surrogate_monotone_in_sinr(default_tables):
    assert np.all(np.diff(default_tables.single.entries, axis=1) >= 0)
    assert np.all(np.diff(default_tables.bimodal.entries, axis=2) >= 0)
    assert np.all(np.diff(default_tables.bimodal.entries, axis=3) >= 0)


def test_sinr_cell_is_nearest_lower_and_clamped(default_tables):
    table = default_tables.single
    assert table.sinr_cell(0.0) == 0
    assert table.sinr_cell(1e-6) == 0
    assert table.sinr_cell(1.0) == 10           # 0 dB
    assert table.sinr_cell(10 ** 0.55) == 15    # 5.5 dB
    assert table.sinr_cell(1e9) == 40


def test_accuracy_lookup(default_tables):
    table = default_tables.single
    assert accuracy(table, [5], [10.0]) == table.entries[4, 20]
    low = accuracy(default_tables.bimodal, [2, 394], [1.0, 1.0])
    high = accuracy(default_tables.bimodal, [2, 394], [100.0, 1.0])
    assert high >= low


def test_csv_roundtrip(default_tables, tmp_path):
    path = tmp_path / 'single.csv'
    default_tables.single.to_csv(str(path))
    loaded = AccuracyTable.from_csv(str(path))
    assert loaded.k_values == default_tables.single.k_values
    np.testing.assert_allclose(loaded.entries, default_tables.single.entries, rtol=1e-12)


def test_non_monotone_table_rejected():
    entries = np.array([[0.2, 0.5, 0.4]])
    with pytest.raises(TableError, match="non-decreasing"):
        AccuracyTable(sinr_grid_db=np.array([0.0, 1.0, 2.0]), k_values=((1,),), entries=entries)


def test_missing_entries_rejected():
    entries = np.array([[0.2, np.nan, 0.4]])
    with pytest.raises(TableError, match="missing"):
        AccuracyTable(sinr_grid_db=np.array([0.0, 1.0, 2.0]), k_values=((1,),), entries=entries)


def test_incomplete_csv_rejected():
    frame = pd.DataFrame({'k': [1, 1, 2], 'sinr_db': [0.0, 1.0, 0.0], 'xi': [0.1, 0.2, 0.3]})
    with pytest.raises(TableError, match="full grid"):
        AccuracyTable.from_frame(frame)


def test_csv_override_must_cover_k_set(tmp_path, constants):
    frame = pd.DataFrame({'k': [1, 1], 'sinr_db': [0.0, 1.0], 'xi': [0.3, 0.4]})
    path = tmp_path / 'single.csv'
    frame.to_csv(path, index=False)
    with pytest.raises(TableError, match="lacks symbol counts"):
        load_tables(AccuracyConfig(single_csv=str(path)), constants)


def test_surrogate_rejects_flat_slope(constants):
    with pytest.raises(TableError, match="slope"):
        build_surrogate_tables(AccuracyConfig(slope_per_db=0.0), constants)


def test_default_surrogate_reaches_requirement_at_moderate_sinr(default_tables):
    # grid index 20 is 10 dB; accuracy requirements are drawn from [0.8, 0.9]
    assert default_tables.single.entries[-1, 20] >= 0.9
    assert default_tables.bimodal.entries[-1, -1, 20, 20] >= 0.9
    assert default_tables.single.entries[0, 20] < default_tables.single.entries[-1, 20]
