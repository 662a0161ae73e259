"""
Field files: versioned CSV or binary snapshots of one Field with its grid.

CSV layout::

    # nls-field v1
    # half_length=<L>
    # n_points=<n>
    x,re,im
    <x_0>,<Re u_0>,<Im u_0>
    ...

Binary layout (little-endian)::

    offset  size  content
    0       4     magic b"NLSF"
    4       2     format version (uint16)
    6       4     n_points (uint32)
    10      8     half_length (float64)
    18      16n   samples as complex128 (real, imag pairs)
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..components.spectral_core import Field, Grid
from ..config.settings import settings
from ..models.errors import InputError

logger = logging.getLogger(__name__)

MAGIC = b"NLSF"
_HEADER = struct.Struct("<4sHId")
_CSV_TAG = "# nls-field v"
BINARY_SUFFIXES = (".nlsf", ".bin")

PathLike = Union[str, Path]


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_field_csv(path: PathLike, field: Field) -> Path:
    path = Path(path)
    grid = field.grid
    lines = [
        f"{_CSV_TAG}{settings.FIELD_FORMAT_VERSION}",
        f"# half_length={_fmt(grid.half_length)}",
        f"# n_points={grid.n_points}",
        "x,re,im",
    ]
    for x, v in zip(grid.x, field.values):
        lines.append(f"{_fmt(x)},{_fmt(v.real)},{_fmt(v.imag)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_field_csv(path: PathLike) -> Field:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        first = handle.readline().strip()
        if not first.startswith(_CSV_TAG):
            raise InputError(f"{path} is not a field CSV (missing '{_CSV_TAG}' header)")
        _check_version(first[len(_CSV_TAG):], path)

        meta = {}
        line = handle.readline().strip()
        while line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            line = handle.readline().strip()
        if line != "x,re,im":
            raise InputError(f"{path}: expected column header 'x,re,im', got {line!r}")
        data = np.loadtxt(handle, delimiter=",", ndmin=2)

    try:
        grid = Grid(float(meta["half_length"]), int(meta["n_points"]))
    except KeyError as e:
        raise InputError(f"{path}: grid header is missing {e}") from e
    if data.shape != (grid.n_points, 3):
        raise InputError(f"{path}: expected {grid.n_points} rows of 3 columns, got {data.shape}")
    return Field(grid, data[:, 1] + 1j * data[:, 2])


def write_field_binary(path: PathLike, field: Field) -> Path:
    path = Path(path)
    grid = field.grid
    header = _HEADER.pack(MAGIC, settings.FIELD_FORMAT_VERSION, grid.n_points, grid.half_length)
    payload = np.ascontiguousarray(field.values, dtype="<c16").tobytes()
    path.write_bytes(header + payload)
    return path


def read_field_binary(path: PathLike) -> Field:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise InputError(f"{path}: truncated header")
    magic, version, n_points, half_length = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise InputError(f"{path}: bad magic {magic!r}")
    _check_version(str(version), path)
    expected = _HEADER.size + 16 * n_points
    if len(blob) != expected:
        raise InputError(f"{path}: expected {expected} bytes, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<c16", offset=_HEADER.size, count=n_points)
    return Field(Grid(half_length, n_points), values.astype(np.complex128))


def _check_version(text: str, path: Path) -> None:
    try:
        version = int(text)
    except ValueError:
        raise InputError(f"{path}: unreadable format version {text!r}")
    if version != settings.FIELD_FORMAT_VERSION:
        raise InputError(
            f"{path}: field format version {version} is not supported "
            f"(this build reads version {settings.FIELD_FORMAT_VERSION})"
        )


def save_field(path: PathLike, field: Field) -> Path:
    """Write binary for .nlsf/.bin suffixes, CSV otherwise."""
    path = Path(path)
    if path.suffix.lower() in BINARY_SUFFIXES:
        return write_field_binary(path, field)
    return write_field_csv(path, field)


def load_field(path: PathLike) -> Field:
    """Read a field file of either form, sniffing the magic bytes."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"Field file not found: {path}")
    with path.open("rb") as handle:
        head = handle.read(len(MAGIC))
    field = read_field_binary(path) if head == MAGIC else read_field_csv(path)
    logger.info(f"Loaded field from {path} on {field.grid!r}")
    return field
