"""
Scenario config loading.

Scenarios are hand-written YAML, TOML or JSON files mapped onto ScenarioConfig.
Validation collects every violated constraint (pydantic field errors plus
cross-field checks) into a single ScenarioValidationError.
"""

import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Union

import yaml
from pydantic import ValidationError

from ..components.spectral_core import Grid
from ..components.ground_state import eval_Q
from ..models.errors import InputError, ScenarioValidationError
from ..models.lab_models import ScenarioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    tomllib = None

logger = logging.getLogger(__name__)

CONFIG_SUFFIXES = (".yaml", ".yml", ".toml", ".json")

# Q decays like e^{-|x|}; the default box leaves about 2e-7 at the edge
_EDGE_TOL = 1e-6
# Points per unit length needed for Q's profile at scale 1
_MIN_POINTS_PER_UNIT = 4.0


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"Scenario file not found: {path}")
    suffix = path.suffix.lower()
    text = path.read_text(encoding="utf-8")
    try:
        if suffix in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        elif suffix == ".toml":
            if tomllib is None:
                raise InputError("TOML scenarios need Python 3.11 or newer")
            data = tomllib.loads(text)
        elif suffix == ".json":
            data = json.loads(text)
        else:
            raise InputError(f"Unsupported scenario format {suffix!r}; use one of {CONFIG_SUFFIXES}")
    except (yaml.YAMLError, json.JSONDecodeError, ValueError) as e:
        if isinstance(e, InputError):
            raise
        raise ScenarioValidationError([f"{path.name}: not parseable as {suffix[1:]}: {e}"]) from e
    if not isinstance(data, dict):
        raise ScenarioValidationError([f"{path.name}: top level must be a mapping"])
    return data


def _format_pydantic_errors(error: ValidationError) -> List[str]:
    violations = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        violations.append(f"{location}: {item['msg']}")
    return violations


def _cross_field_violations(cfg: ScenarioConfig) -> List[str]:
    violations = []
    grid_cfg = cfg.grid
    n = grid_cfg.n_points
    if n & (n - 1):
        violations.append(f"grid.n_points: must be a power of two, got {n}")

    data = cfg.initial_data
    if data.kind in ("soliton", "perturbed_soliton", "pseudoconformal"):
        lam = data.params.lam
        if data.kind == "pseudoconformal":
            if data.t0 >= data.T:
                violations.append(f"initial_data.t0: must be before the blowup time T={data.T}")
            elif data.t0 + cfg.t_final >= data.T:
                violations.append(
                    f"t_final: the run reaches the blowup time T={data.T} (t0 + t_final = {data.t0 + cfg.t_final})"
                )
            else:
                lam = data.params.lam / (data.T - data.t0)
        # soliton width ~ 1/lam must fit in the box and be resolved by the grid
        edge = float(eval_Q(lam * (grid_cfg.half_length - abs(data.params.x0) / lam)))
        if edge > _EDGE_TOL:
            violations.append(
                f"grid.half_length: {grid_cfg.half_length} is too small for scale {lam:.3g} "
                f"(profile is {edge:.1e} at the edge)"
            )
        spacing = 2.0 * grid_cfg.half_length / n
        if spacing * lam * _MIN_POINTS_PER_UNIT > 1.0:
            violations.append(
                f"grid.n_points: {n} points do not resolve scale {lam:.3g} (dx={spacing:.3g})"
            )

    solver = cfg.solver
    if solver.dt_init > abs(cfg.t_final) > 0:
        violations.append(f"solver.dt_init: {solver.dt_init} exceeds |t_final|={abs(cfg.t_final)}")
    if not math.isfinite(cfg.t_final):
        violations.append("t_final: must be finite")
    if data.kind == "file" and not Path(data.path).exists():
        violations.append(f"initial_data.path: {data.path} does not exist")
    if "bilinear" in cfg.diagnostics.enabled and any(i < 3 for i in cfg.diagnostics.bilinear_levels):
        violations.append("diagnostics.bilinear_levels: levels must be >= 3")
    return violations


def validate_scenario(data: Dict[str, Any]) -> ScenarioConfig:
    """
    Build a ScenarioConfig from a raw mapping.

    Raises:
        ScenarioValidationError: listing every violated constraint
    """
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ScenarioValidationError(_format_pydantic_errors(e)) from e

    violations = _cross_field_violations(cfg)
    if violations:
        raise ScenarioValidationError(violations)
    return cfg


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    data = read_config_file(path)
    data.setdefault("name", path.stem)
    cfg = validate_scenario(data)
    logger.info(f"Loaded scenario '{cfg.name}' from {path}")
    return cfg


def discover_scenarios(directory: Union[str, Path]) -> List[Path]:
    """Config files directly inside a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"Not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in CONFIG_SUFFIXES)


def build_grid(cfg: ScenarioConfig) -> Grid:
    return Grid(cfg.grid.half_length, cfg.grid.n_points)
