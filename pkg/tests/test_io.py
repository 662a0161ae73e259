import math
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest

from src.components.ground_state import ground_state
from src.components.modulation import track
from src.components.spectral_core import Field, Grid
from src.models.errors import InputError, ScenarioValidationError
from src.utils.field_io import load_field, read_field_csv, save_field
from src.utils.scenario_loader import (
    build_grid,
    discover_scenarios,
    load_scenario,
    read_config_file,
    validate_scenario,
)
from src.utils.series_io import (
    MODULATION_COLUMNS,
    format_value,
    modulation_rows,
    read_series_csv,
    write_series_csv,
)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def field(small_grid):
    return Field.from_function(small_grid, lambda x: np.exp(-x ** 2) * (1.0 + 0.25j * np.sin(x)))


# ---------------------------------------------------------------------------
# Field files
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["u0.csv", "u0.nlsf"])
def test_field_files_reproduce_the_samples(tmp_path, field, name):
    path = save_field(tmp_path / name, field)
    loaded = load_field(path)
    assert loaded.grid == field.grid
    npt.assert_array_equal(loaded.values, field.values)


def test_binary_is_sniffed_regardless_of_suffix(tmp_path, field):
    path = save_field(tmp_path / "u0.bin", field)
    renamed = path.rename(tmp_path / "u0.dat")
    npt.assert_array_equal(load_field(renamed).values, field.values)


def test_field_csv_rejects_other_versions(tmp_path, field):
    path = save_field(tmp_path / "u0.csv", field)
    text = path.read_text().replace("# nls-field v1", "# nls-field v99", 1)
    path.write_text(text)
    with pytest.raises(InputError, match="version 99"):
        load_field(path)


def test_field_csv_needs_the_grid_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# nls-field v1\n# n_points=16\nx,re,im\n0,0,0\n")
    with pytest.raises(InputError):
        read_field_csv(path)


def test_truncated_binary_is_rejected(tmp_path, field):
    path = save_field(tmp_path / "u0.nlsf", field)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(InputError, match="bytes"):
        load_field(path)


def test_missing_field_file(tmp_path):
    with pytest.raises(InputError):
        load_field(tmp_path / "nowhere.csv")


# ---------------------------------------------------------------------------
# Series files
# ---------------------------------------------------------------------------


def test_series_file_layout(tmp_path):
    path = write_series_csv(
        tmp_path / "trajectory.csv",
        "trajectory",
        ["t", "step", "mass"],
        [[0.0, 0, 1.5], [0.1, 10, None]],
        metadata={"n_points": 512, "half_length": 16.0},
    )
    lines = path.read_text().splitlines()
    assert lines[:4] == ["# nls-series v1", "# kind=trajectory", "# half_length=16.0", "# n_points=512"]
    assert lines[4] == "t,step,mass"
    assert lines[6] == "0.10000000000000001,10,nan"

    table = read_series_csv(path)
    assert table.kind == "trajectory"
    assert table.metadata == {"half_length": "16.0", "n_points": "512"}
    assert len(table) == 2
    npt.assert_array_equal(table.column("step"), [0.0, 10.0])
    assert math.isnan(table.column("mass")[1])
    with pytest.raises(InputError):
        table.column("energy")


def test_series_rows_must_match_the_columns(tmp_path):
    with pytest.raises(InputError):
        write_series_csv(tmp_path / "x.csv", "trajectory", ["t", "mass"], [[0.0]])


def test_series_schema_version_is_checked(tmp_path):
    path = tmp_path / "old.csv"
    path.write_text("# nls-series v0\n# kind=trajectory\nt\n0\n")
    with pytest.raises(InputError, match="schema version 0"):
        read_series_csv(path)
    path.write_text("t,mass\n0,1\n")
    with pytest.raises(InputError):
        read_series_csv(path)


def test_format_value():
    assert format_value(None) == "nan"
    assert format_value(np.int64(3)) == "3"
    assert format_value(0.1) == "0.10000000000000001"


def test_short_modulation_series_has_nan_residuals(tracking_grid):
    q = ground_state(tracking_grid)
    series = track([(0.0, q), (0.1, q * np.exp(0.1j))])
    rows = modulation_rows(series)
    assert len(rows) == 2
    assert len(rows[0]) == len(MODULATION_COLUMNS)
    assert all(math.isnan(v) for v in rows[1][7:])


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


def test_bundled_scenarios_are_valid():
    paths = discover_scenarios(SCENARIO_DIR)
    assert [p.name for p in paths] == ["perturbed_soliton.yaml", "pseudoconformal.toml", "soliton.yaml"]
    for path in paths:
        if path.suffix == ".toml":
            pytest.importorskip("tomllib")
        cfg = load_scenario(path)
        assert cfg.name == path.stem


def test_soliton_scenario_defaults():
    cfg = load_scenario(SCENARIO_DIR / "soliton.yaml")
    assert cfg.initial_data.kind == "soliton"
    assert cfg.initial_data.params.lam == 1.0
    assert build_grid(cfg) == Grid(16.0, 2048)
    assert cfg.modulation_mode == "full4"
    assert cfg.solver.dt_init == 1.25e-4
    assert not cfg.dechirp


def test_pseudoconformal_scenario_tracks_without_the_chirp():
    pytest.importorskip("tomllib")
    cfg = load_scenario(SCENARIO_DIR / "pseudoconformal.toml")
    assert cfg.dechirp
    assert cfg.modulation_mode == "symmetric2"


def _raw(**overrides):
    data = {
        "name": "sample",
        "initial_data": {"kind": "soliton"},
        "t_final": 0.5,
    }
    data.update(overrides)
    return data


def test_every_violation_is_reported():
    with pytest.raises(ScenarioValidationError) as excinfo:
        validate_scenario(_raw(grid={"half_length": 4.0, "n_points": 1000}))
    violations = excinfo.value.violations
    assert len(violations) == 2
    assert any("power of two" in v for v in violations)
    assert any("too small" in v for v in violations)


def test_field_level_errors_are_collected():
    raw = _raw(initial_data={"kind": "perturbed_soliton", "noise_amp": -1.0}, t_final="soon")
    with pytest.raises(ScenarioValidationError) as excinfo:
        validate_scenario(raw)
    violations = excinfo.value.violations
    assert any("noise_amp" in v for v in violations)
    assert any(v.startswith("t_final") for v in violations)


def test_pseudoconformal_run_must_stop_before_blowup():
    raw = _raw(
        initial_data={"kind": "pseudoconformal", "T": 0.0, "t0": -1.0},
        grid={"half_length": 64.0, "n_points": 8192},
        t_final=1.0,
    )
    with pytest.raises(ScenarioValidationError, match="blowup time"):
        validate_scenario(raw)


def test_under_resolved_scale_is_rejected():
    raw = _raw(initial_data={"kind": "soliton", "params": {"lambda": 4.0}}, grid={"n_points": 64})
    with pytest.raises(ScenarioValidationError, match="do not resolve"):
        validate_scenario(raw)


def test_bilinear_levels_are_checked():
    raw = _raw(diagnostics={"enabled": ["mass", "bilinear"], "bilinear_levels": [2]})
    with pytest.raises(ScenarioValidationError, match="bilinear_levels"):
        validate_scenario(raw)


def test_config_file_errors(tmp_path):
    with pytest.raises(InputError):
        read_config_file(tmp_path / "missing.yaml")
    ini = tmp_path / "scenario.ini"
    ini.write_text("[x]\n")
    with pytest.raises(InputError):
        read_config_file(ini)
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ScenarioValidationError):
        read_config_file(listing)


def test_json_scenario_takes_its_name_from_the_file(tmp_path):
    path = tmp_path / "from_json.json"
    path.write_text('{"initial_data": {"kind": "soliton"}, "t_final": 0.25}')
    assert load_scenario(path).name == "from_json"
