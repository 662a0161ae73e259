"""
Discretization substrate: periodic grid, Fourier pair, spectral differentiation,
quadrature, inner products and dyadic frequency projections.

Conventions
-----------
Grid points are x_j = -L + j*dx for j = 0..n-1 on the box [-L, L).

Fourier coefficients use numpy's unnormalized forward FFT and the standard
wrapped ordering: index j < n/2 holds wavenumber 2*pi*j/(2L), index j >= n/2
holds the negative wavenumber 2*pi*(j - n)/(2L). The Nyquist mode (index n/2)
is stored as the negative wavenumber; differentiation of odd order zeroes it
and off-grid interpolation treats it as a cosine.

Reflection x -> -x maps index j to (n - j) mod n.
"""

import logging
from typing import Callable, Iterable, Union

import numpy as np

from ..models.errors import GridMismatchError, InputError
from ..models.lab_models import ProjectionSpec

logger = logging.getLogger(__name__)

Scalar = Union[int, float, complex]

SUPPORTED_EXPONENTS = (1, 2, 4, 6, 8)

# Rows of the direct interpolation sum evaluated per block
_RESAMPLE_CHUNK = 512
# Modes with |c_k| below this fraction of the largest coefficient are skipped
_RESAMPLE_MODE_CUTOFF = 1e-18


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


class Grid:
    """
    Periodic computational box standing in for the real line.

    Attributes:
        half_length: L, the box is [-L, L)
        n_points: number of samples (power of two, at least 16)
        spacing: 2L / n
        x: sample positions
        wavenumbers: k_j in radians/length, wrapped FFT ordering
    """

    __slots__ = ("half_length", "n_points", "spacing", "x", "wavenumbers")

    def __init__(self, half_length: float, n_points: int):
        if not half_length > 0:
            raise InputError(f"half_length must be positive, got {half_length}")
        if int(n_points) != n_points or not _is_power_of_two(int(n_points)) or n_points < 16:
            raise InputError(f"n_points must be a power of two >= 16, got {n_points}")

        n = int(n_points)
        spacing = 2.0 * half_length / n
        x = -half_length + spacing * np.arange(n)
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=spacing)
        x.flags.writeable = False
        k.flags.writeable = False

        object.__setattr__(self, "half_length", float(half_length))
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "wavenumbers", k)

    def __setattr__(self, name, value):
        raise AttributeError("Grid is immutable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.half_length == other.half_length and self.n_points == other.n_points

    def __hash__(self) -> int:
        return hash((self.half_length, self.n_points))

    def __repr__(self) -> str:
        return f"Grid(half_length={self.half_length}, n_points={self.n_points})"

    def __reduce__(self):
        return (Grid, (self.half_length, self.n_points))

    @property
    def nyquist(self) -> float:
        """Largest resolved wavenumber pi / dx."""
        return np.pi / self.spacing

    @property
    def fundamental(self) -> float:
        """Lowest positive wavenumber pi / L."""
        return np.pi / self.half_length

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.half_length, self.n_points * factor)

    def reflection_indices(self) -> np.ndarray:
        return (-np.arange(self.n_points)) % self.n_points


class Field:
    """Complex samples of a function on a Grid."""

    __slots__ = ("grid", "values")

    # numpy scalars defer to the reflected Field operators
    __array_ufunc__ = None

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=np.complex128)
        if arr.ndim == 0:
            arr = np.full(grid.n_points, arr, dtype=np.complex128)
        if arr.shape != (grid.n_points,):
            raise GridMismatchError(
                f"Field needs {grid.n_points} samples, got shape {arr.shape}"
            )
        self.grid = grid
        self.values = arr

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return cls(grid, func(grid.x))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.n_points, dtype=np.complex128))

    @classmethod
    def from_coefficients(cls, grid: Grid, coefficients: np.ndarray) -> "Field":
        return cls(grid, np.fft.ifft(coefficients))

    def coefficients(self) -> np.ndarray:
        return np.fft.fft(self.values)

    @property
    def real(self) -> "Field":
        return Field(self.grid, self.values.real)

    @property
    def imag(self) -> "Field":
        return Field(self.grid, self.values.imag)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))

    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    def reflect(self) -> "Field":
        """Samples of u(-x)."""
        return Field(self.grid, np.roll(self.values[::-1], 1))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def _other_values(self, other):
        if isinstance(other, Field):
            check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other_values(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other_values(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other_values(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other_values(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __repr__(self) -> str:
        return f"Field({self.grid!r}, l2={lp_norm(self, 2):.6g})"


def check_same_grid(*fields: Field) -> Grid:
    """Return the common grid or raise GridMismatchError."""
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridMismatchError(f"Fields live on different grids: {grid!r} vs {other.grid!r}")
    return grid


def integrate(grid: Grid, values: np.ndarray) -> Scalar:
    """Rectangle rule over the periodic box."""
    return np.sum(values) * grid.spacing


def inner_product(f: Field, g: Field) -> float:
    """
    Real L2 pairing (f, g) = Re int f conj(g) dx.

    Evaluated as Re f . Re g + Im f . Im g so that swapping the arguments gives
    the identical float.
    """
    grid = check_same_grid(f, g)
    total = np.dot(f.values.real, g.values.real) + np.dot(f.values.imag, g.values.imag)
    return float(total * grid.spacing)


def derivative(f: Field, order: int = 1) -> Field:
    """Spectral derivative of order 1 or 2."""
    if order not in (1, 2):
        raise InputError(f"derivative order must be 1 or 2, got {order}")
    grid = f.grid
    k = grid.wavenumbers
    if order == 1:
        multiplier = 1j * k
        multiplier[grid.n_points // 2] = 0.0
    else:
        multiplier = -(k ** 2)
    return Field(grid, np.fft.ifft(multiplier * np.fft.fft(f.values)))


def _smooth_step(abs_k: np.ndarray, edge: float) -> np.ndarray:
    """1 on |k| <= edge, cos^2 taper over (edge, 2 edge), 0 beyond."""
    out = np.zeros_like(abs_k)
    out[abs_k <= edge] = 1.0
    taper = (abs_k > edge) & (abs_k < 2.0 * edge)
    out[taper] = np.cos(0.5 * np.pi * (abs_k[taper] - edge) / edge) ** 2
    return out


def _low_profile(abs_k: np.ndarray, level: int, smooth: bool) -> np.ndarray:
    if level < 0:
        return np.zeros_like(abs_k)
    edge = 2.0 ** level
    if smooth:
        return _smooth_step(abs_k, edge)
    return (abs_k <= edge).astype(float)


def projection_multiplier(grid: Grid, spec: ProjectionSpec) -> np.ndarray:
    """Fourier multiplier of a dyadic projection (see module conventions)."""
    abs_k = np.abs(grid.wavenumbers)
    smooth = spec.sharpness == "smooth"
    i = spec.level

    if spec.kind == "low_pass":
        return _low_profile(abs_k, i, smooth)
    if spec.kind == "high_pass":
        if i <= 0:
            return np.ones_like(abs_k)
        return 1.0 - _low_profile(abs_k, i - 1, smooth)
    # band
    if i < 0:
        return np.zeros_like(abs_k)
    if i == 0:
        return _low_profile(abs_k, 0, smooth)
    return _low_profile(abs_k, i, smooth) - _low_profile(abs_k, i - 1, smooth)


def project_coefficients(grid: Grid, coefficients: np.ndarray, spec: ProjectionSpec) -> np.ndarray:
    return coefficients * projection_multiplier(grid, spec)


def project(f: Field, spec: ProjectionSpec) -> Field:
    """Apply a Littlewood-Paley style cutoff P to f."""
    return Field.from_coefficients(f.grid, project_coefficients(f.grid, f.coefficients(), spec))


def low_pass(f: Field, level: int, sharpness: str = "sharp") -> Field:
    return project(f, ProjectionSpec(kind="low_pass", level=level, sharpness=sharpness))


def high_pass(f: Field, level: int, sharpness: str = "sharp") -> Field:
    return project(f, ProjectionSpec(kind="high_pass", level=level, sharpness=sharpness))


def lp_norm(f: Field, p: Union[int, float] = 2) -> float:
    """L^p norm by quadrature; p = inf gives the max modulus."""
    modulus = np.abs(f.values)
    if p == np.inf or p == "inf":
        return float(modulus.max(initial=0.0))
    if p not in SUPPORTED_EXPONENTS:
        raise InputError(f"Unsupported exponent p={p}; expected one of {SUPPORTED_EXPONENTS} or inf")
    return float(integrate(f.grid, modulus ** p) ** (1.0 / p))


def dealias_mask(grid: Grid) -> np.ndarray:
    """
    Smooth 2/3-rule mask: 1 for |k| <= k_N/2, cos^2 taper to 0 at (2/3) k_N.
    """
    abs_k = np.abs(grid.wavenumbers)
    k_lo = 0.5 * grid.nyquist
    k_hi = (2.0 / 3.0) * grid.nyquist
    mask = np.zeros_like(abs_k)
    mask[abs_k <= k_lo] = 1.0
    taper = (abs_k > k_lo) & (abs_k < k_hi)
    mask[taper] = np.cos(0.5 * np.pi * (abs_k[taper] - k_lo) / (k_hi - k_lo)) ** 2
    return mask


def fourier_resample(f: Field, points: Iterable[float]) -> np.ndarray:
    """
    Evaluate the trigonometric interpolant of f at arbitrary positions.

    Points outside [-L, L) are read periodically. The sum runs over the modes
    carrying non-negligible weight, in row blocks to bound memory.
    """
    grid = f.grid
    y = np.asarray(points, dtype=float) + grid.half_length
    coeffs = np.fft.fft(f.values) / grid.n_points
    k = grid.wavenumbers
    nyq = grid.n_points // 2

    c_nyq = coeffs[nyq]
    coeffs = coeffs.copy()
    coeffs[nyq] = 0.0
    scale = np.abs(coeffs).max(initial=0.0)
    active = np.nonzero(np.abs(coeffs) > _RESAMPLE_MODE_CUTOFF * scale)[0] if scale > 0 else np.array([], dtype=int)
    k_active = k[active]
    c_active = coeffs[active]

    out = np.empty(y.shape, dtype=np.complex128)
    flat_y = y.reshape(-1)
    flat_out = out.reshape(-1)
    for start in range(0, flat_y.size, _RESAMPLE_CHUNK):
        block = flat_y[start:start + _RESAMPLE_CHUNK]
        phases = np.exp(1j * np.outer(block, k_active))
        flat_out[start:start + _RESAMPLE_CHUNK] = phases @ c_active
    if c_nyq != 0.0:
        flat_out += c_nyq * np.cos(grid.nyquist * flat_y)
    return out


def translate(f: Field, shift: float) -> Field:
    """Samples of f(x + shift), exact for the trigonometric interpolant."""
    grid = f.grid
    coeffs = np.fft.fft(f.values)
    phase = np.exp(1j * grid.wavenumbers * shift)
    nyq = grid.n_points // 2
    # Nyquist mode is a cosine; its shift is not a pure phase
    phase[nyq] = np.cos(grid.nyquist * shift)
    return Field(grid, np.fft.ifft(coeffs * phase))
