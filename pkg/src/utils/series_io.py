"""
Time-series CSV files written into run directories.

Every file starts with a comment block::

    # nls-series v<schema_version>
    # kind=<trajectory|modulation|diagnostics>
    # <key>=<value>        grid and solver metadata, sorted by key

followed by one header row and one row per recorded time. Floats use 17
significant digits so that a fixed seed reproduces the file byte for byte.
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from ..config.settings import settings
from ..models.errors import InputError

logger = logging.getLogger(__name__)

_TAG = "# nls-series v"

TRAJECTORY_COLUMNS = [
    "t", "step", "dt", "mass", "energy", "mass_drift", "energy_drift", "grad_norm", "lambda_proxy",
]
MODULATION_COLUMNS = [
    "t", "s", "lambda", "gamma", "x0", "xi", "eps_l2",
    "r_lambda", "r_gamma", "r_x", "r_xi", "virial_residual",
]
DIAGNOSTIC_BASE_COLUMNS = ["t", "mass", "energy", "gn_ratio", "variance", "morawetz"]


class SeriesTable(BaseModel):
    """Parsed contents of a series CSV."""

    kind: str
    schema_version: int
    metadata: Dict[str, str]
    columns: List[str]
    rows: List[List[float]]

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise InputError(f"column {name!r} not in {self.columns}")
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows], dtype=float)

    def __len__(self) -> int:
        return len(self.rows)


def format_value(value: Optional[float]) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return f"{float(value):.17g}"


def write_series_csv(
    path: Union[str, Path],
    kind: str,
    columns: Sequence[str],
    rows: Sequence[Sequence[Any]],
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    lines = [f"{_TAG}{settings.CSV_SCHEMA_VERSION}", f"# kind={kind}"]
    for key in sorted(metadata or {}):
        lines.append(f"# {key}={metadata[key]}")
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise InputError(f"row has {len(row)} values for {len(columns)} columns")
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {len(rows)} {kind} rows to {path}")
    return path


def read_series_csv(path: Union[str, Path]) -> SeriesTable:
    """Parse a series CSV, rejecting schema versions this build does not know."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(_TAG):
        raise InputError(f"{path} is not a series CSV (missing '{_TAG}' header)")
    try:
        version = int(lines[0][len(_TAG):])
    except ValueError:
        raise InputError(f"{path}: unreadable schema version in {lines[0]!r}")
    if version != settings.CSV_SCHEMA_VERSION:
        raise InputError(
            f"{path}: schema version {version} is not supported "
            f"(this build reads version {settings.CSV_SCHEMA_VERSION})"
        )

    metadata = {}
    index = 1
    while index < len(lines) and lines[index].startswith("#"):
        key, _, value = lines[index][1:].strip().partition("=")
        metadata[key.strip()] = value.strip()
        index += 1
    if index >= len(lines):
        raise InputError(f"{path}: missing column header")

    columns = lines[index].split(",")
    rows = [[float(v) for v in line.split(",")] for line in lines[index + 1:] if line]
    return SeriesTable(
        kind=metadata.pop("kind", "unknown"),
        schema_version=version,
        metadata=metadata,
        columns=columns,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# Row builders
# ---------------------------------------------------------------------------


def trajectory_rows(results) -> List[List[Any]]:
    return [
        [r.t, r.step, r.dt, r.mass, r.energy, r.mass_drift, r.energy_drift, r.grad_norm, r.lambda_proxy]
        for r in results
    ]


def modulation_rows(series) -> List[List[Any]]:
    """One row per tracked time; residual columns are NaN when fewer than three samples exist."""
    nan4 = [math.nan] * 4
    rows = []
    for j, p in enumerate(series.params):
        ode = series.ode_residuals[j] if j < len(series.ode_residuals) else nan4
        virial = series.virial_residuals[j] if j < len(series.virial_residuals) else math.nan
        rows.append(
            [
                series.times[j],
                series.s_values[j],
                p.lam,
                series.gamma_unwrapped[j],
                p.x0,
                p.xi,
                series.eps_l2[j],
                *ode,
                virial,
            ]
        )
    return rows


def diagnostic_columns(truncation_levels: Sequence[int]) -> List[str]:
    return DIAGNOSTIC_BASE_COLUMNS + [f"truncated_energy_{k}" for k in truncation_levels] + ["eps_l2"]


def diagnostic_rows(samples, truncation_levels: Sequence[int]) -> List[List[Any]]:
    return [
        [s.t, s.mass, s.energy, s.gn_ratio, s.variance, s.morawetz]
        + [s.truncated_energy.get(str(k)) for k in truncation_levels]
        + [s.eps_l2]
        for s in samples
    ]
