"""
Linearized operators around the ground state

    L_plus  f = -f_xx + f - 5 Q^4 f
    L_minus f = -f_xx + f -   Q^4 f

with dense assembly, low-lying spectra, constrained coercivity and the
expansion of E(Q + eps) into linear, quadratic and remainder parts.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, eigsh

from ..config.settings import settings
from ..models.errors import GridMismatchError, InputError
from ..models.lab_models import EnergyBreakdown
from ..utils.perturbations import band_limited_noise
from .diagnostics import energy, kinetic
from .ground_state import eval_Q
from .spectral_core import Field, Grid, derivative, inner_product, integrate, lp_norm

logger = logging.getLogger(__name__)

L_PLUS = "L_plus"
L_MINUS = "L_minus"

_ALIASES = {
    "L_plus": L_PLUS,
    "L": L_PLUS,
    "Lplus": L_PLUS,
    "L_minus": L_MINUS,
    "Lminus": L_MINUS,
}

_POTENTIAL_COUPLING = {L_PLUS: 5.0, L_MINUS: 1.0}

MAX_SPECTRUM_COUNT = 10
EXPANSION_LIMIT = 0.5


def resolve_operator(which: str) -> str:
    try:
        return _ALIASES[which]
    except KeyError:
        raise InputError(f"Unknown operator {which!r}; expected one of {sorted(_ALIASES)}")


def potential(which: str, grid: Grid) -> np.ndarray:
    """Multiplication part 1 - c Q^4 of the operator."""
    which = resolve_operator(which)
    return 1.0 - _POTENTIAL_COUPLING[which] * eval_Q(grid.x) ** 4


def apply_operator(which: str, f: Field) -> Field:
    """Spectral -f_xx plus the pointwise potential; acts componentwise on complex input."""
    return Field(f.grid, -derivative(f, 2).values + potential(which, f.grid) * f.values)


class OperatorMatrix:
    """Dense real symmetric discretization of L_plus or L_minus on a grid."""

    def __init__(self, which: str, grid: Grid, entries: np.ndarray):
        self.which = resolve_operator(which)
        self.grid = grid
        self.entries = entries

    @property
    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.T)))

    def matvec(self, f: Field) -> Field:
        if f.grid != self.grid:
            raise GridMismatchError(f"operator lives on {self.grid!r}, field on {f.grid!r}")
        return Field(self.grid, self.entries @ f.values.real + 1j * (self.entries @ f.values.imag))


def second_derivative_matrix(grid: Grid) -> np.ndarray:
    """Circulant matrix of the spectral second derivative."""
    column = np.fft.ifft(-(grid.wavenumbers ** 2)).real
    d2 = linalg.circulant(column)
    return 0.5 * (d2 + d2.T)


def assemble(which: str, grid: Grid, with_potential: bool = True) -> OperatorMatrix:
    """
    Dense matrix whose action agrees with apply_operator.

    Args:
        which: "L_plus" or "L_minus" (aliases "L", "Lminus")
        grid: Grid to discretize on
        with_potential: False drops the Q^4 term, leaving -d_xx + 1
    """
    which = resolve_operator(which)
    if grid.n_points > settings.DENSE_ASSEMBLY_LIMIT:
        raise InputError(
            f"n={grid.n_points} exceeds the dense assembly limit {settings.DENSE_ASSEMBLY_LIMIT}; "
            "use low_spectrum_matrix_free"
        )
    diagonal = potential(which, grid) if with_potential else np.ones(grid.n_points)
    entries = -second_derivative_matrix(grid) + np.diag(diagonal)
    logger.debug(f"Assembled {which} on {grid!r}")
    return OperatorMatrix(which, grid, entries)


class LowSpectrum(BaseModel):
    """Lowest eigenpairs, eigenvectors normalized in L2."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    which: str
    eigenvalues: List[float]
    eigenvectors: List[Field]
    residuals: List[float]

    def as_report(self) -> dict:
        return {"operator": self.which, "eigenvalues": self.eigenvalues, "residuals": self.residuals}


def _l2_normalized(grid: Grid, columns: np.ndarray) -> List[Field]:
    vectors = []
    for col in columns.T:
        v = col / np.sqrt(np.sum(col ** 2) * grid.spacing)
        # fix the sign so the largest entry is positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        vectors.append(Field(grid, v))
    return vectors


def low_spectrum(op: OperatorMatrix, count: int = 3) -> LowSpectrum:
    """Lowest `count` eigenpairs by a dense symmetric eigen-solve."""
    if not 1 <= count <= MAX_SPECTRUM_COUNT:
        raise InputError(f"count must be between 1 and {MAX_SPECTRUM_COUNT}, got {count}")
    values, vectors = linalg.eigh(op.entries, subset_by_index=[0, count - 1])
    fields = _l2_normalized(op.grid, vectors)
    residuals = [
        lp_norm(apply_operator(op.which, v) - mu * v, 2) for mu, v in zip(values, fields)
    ]
    logger.info(f"{op.which} lowest eigenvalues: {', '.join(f'{v:.8f}' for v in values)}")
    return LowSpectrum(
        which=op.which,
        eigenvalues=[float(v) for v in values],
        eigenvectors=fields,
        residuals=residuals,
    )


def low_spectrum_matrix_free(which: str, grid: Grid, count: int = 3, tol: float = 1e-10) -> LowSpectrum:
    """Lanczos alternative to low_spectrum for grids beyond the dense limit."""
    which = resolve_operator(which)
    if not 1 <= count <= MAX_SPECTRUM_COUNT:
        raise InputError(f"count must be between 1 and {MAX_SPECTRUM_COUNT}, got {count}")
    k_sq = grid.wavenumbers ** 2
    pot = potential(which, grid)

    def matvec(v):
        v = np.asarray(v).ravel()
        return np.fft.ifft(k_sq * np.fft.fft(v)).real + pot * v

    operator = LinearOperator((grid.n_points, grid.n_points), matvec=matvec, dtype=float)
    values, vectors = eigsh(operator, k=count, which="SA", tol=tol)
    order = np.argsort(values)
    values, vectors = values[order], vectors[:, order]
    fields = _l2_normalized(grid, vectors)
    residuals = [lp_norm(apply_operator(which, v) - mu * v, 2) for mu, v in zip(values, fields)]
    return LowSpectrum(
        which=which,
        eigenvalues=[float(v) for v in values],
        eigenvectors=fields,
        residuals=residuals,
    )


def alignment(f: Field, g: Field) -> float:
    """|cos| of the angle between two fields in L2."""
    return abs(inner_product(f, g)) / (lp_norm(f, 2) * lp_norm(g, 2))


# ---------------------------------------------------------------------------
# Coercivity
# ---------------------------------------------------------------------------


class CoercivityReport(BaseModel):
    which: str
    constant: float  # min of (op u, u) / ||u||^2 over the constrained subspace
    norm: str
    trial_min: Optional[float] = None
    l2_margin_min: Optional[float] = None  # min over trials of ((op u, u) - ||u||^2) / ||u||^2
    trials: int = 0
    even: bool = False


def _even_basis(n: int) -> np.ndarray:
    """Orthonormal basis of index-reflection-even vectors."""
    half = n // 2
    basis = np.zeros((n, half + 1))
    basis[0, 0] = 1.0
    basis[half, half] = 1.0
    for j in range(1, half):
        basis[j, j] = basis[n - j, j] = 1.0 / np.sqrt(2.0)
    return basis


def _constrained_basis(grid: Grid, constraints: Sequence[Field], even: bool) -> np.ndarray:
    n = grid.n_points
    basis = _even_basis(n) if even else np.eye(n)
    if not constraints:
        return basis
    rows = np.array([np.asarray(c.values.real, dtype=float) for c in constraints])
    kernel = linalg.null_space(rows @ basis)
    return basis @ kernel


def _project(vectors: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return basis @ (basis.T @ vectors)


def coercivity_analysis(
    which: str,
    grid: Grid,
    constraints: Sequence[Field] = (),
    trials: int = 0,
    rng: Optional[np.random.Generator] = None,
    even: bool = False,
    norm: str = "H1",
    max_wavenumber: float = 8.0,
) -> CoercivityReport:
    """
    Smallest value of (op u, u) / ||u||^2 over u orthogonal to the constraints,
    from a projected generalized eigen-solve, plus a random-trial sweep.

    Args:
        which: Operator name
        grid: Grid to work on
        constraints: Directions u must be L2-orthogonal to
        trials: Number of random admissible fields to test as well
        rng: Random generator for the trials
        even: Restrict to even functions
        norm: "H1" (||u||^2 + ||u_x||^2) or "L2"
        max_wavenumber: Band limit of the random trials
    """
    if norm not in ("H1", "L2"):
        raise InputError(f"norm must be 'H1' or 'L2', got {norm!r}")
    op = assemble(which, grid)
    basis = _constrained_basis(grid, constraints, even)

    gram = np.eye(grid.n_points)
    if norm == "H1":
        gram = gram - second_derivative_matrix(grid)

    reduced_op = basis.T @ op.entries @ basis
    reduced_gram = basis.T @ gram @ basis
    reduced_op = 0.5 * (reduced_op + reduced_op.T)
    reduced_gram = 0.5 * (reduced_gram + reduced_gram.T)
    lowest = linalg.eigh(reduced_op, reduced_gram, eigvals_only=True, subset_by_index=[0, 0])
    constant = float(lowest[0])

    trial_min = None
    margin_min = None
    if trials > 0:
        rng = rng or np.random.default_rng(0)
        ratios, margins = [], []
        for _ in range(trials):
            raw = band_limited_noise(grid, rng, amplitude=1.0, max_wavenumber=max_wavenumber, real=True)
            u = _project(raw.values.real[:, None], basis)[:, 0]
            u_field = Field(grid, u)
            quad = inner_product(apply_operator(which, u_field), u_field)
            l2_sq = lp_norm(u_field, 2) ** 2
            denominator = l2_sq + (kinetic(u_field) if norm == "H1" else 0.0)
            ratios.append(quad / denominator)
            margins.append((quad - l2_sq) / l2_sq)
        trial_min = float(min(ratios))
        margin_min = float(min(margins))

    logger.info(
        f"Coercivity of {resolve_operator(which)} ({len(constraints)} constraints, even={even}, "
        f"{norm}): c={constant:.6f}, trial min={trial_min}"
    )
    return CoercivityReport(
        which=resolve_operator(which),
        constant=constant,
        norm=norm,
        trial_min=trial_min,
        l2_margin_min=margin_min,
        trials=trials,
        even=even,
    )


def constrained_coercivity(
    which: str,
    constraints: Sequence[Field],
    trials: int,
    grid: Optional[Grid] = None,
    rng: Optional[np.random.Generator] = None,
    even: bool = False,
    norm: str = "H1",
) -> float:
    """Empirical coercivity constant: min over the projected solve and the trials."""
    if grid is None:
        if not constraints:
            raise InputError("pass a grid when no constraints are given")
        grid = constraints[0].grid
    report = coercivity_analysis(which, grid, constraints, trials, rng=rng, even=even, norm=norm)
    if report.trial_min is None:
        return report.constant
    return min(report.constant, report.trial_min)


# ---------------------------------------------------------------------------
# Energy expansion about Q
# ---------------------------------------------------------------------------


def energy_expansion(epsilon: Field) -> EnergyBreakdown:
    """
    E(Q + eps) directly and as
    E(Q) - (Q, eps) - 1/2 ||eps||^2 + 1/2 (L eps_1, eps_1) + 1/2 (L_- eps_2, eps_2) + remainder,
    where the remainder collects the cubic and higher terms of the potential energy.
    Under the mass constraint ||Q + eps|| = ||Q||, -(Q, eps) equals 1/2 ||eps||^2 (`mass_linear`).
    """
    grid = epsilon.grid
    eps_l2 = lp_norm(epsilon, 2)
    if eps_l2 > EXPANSION_LIMIT:
        raise InputError(f"||eps||_2 = {eps_l2:.3g} is outside the expansion regime (<= {EXPANSION_LIMIT})")

    q = eval_Q(grid.x)
    q_field = Field(grid, q)
    eps_1 = Field(grid, epsilon.values.real)
    eps_2 = Field(grid, epsilon.values.imag)

    direct = energy(q_field + epsilon)
    ground_energy = energy(q_field)
    linear = -inner_product(q_field, epsilon)
    eps_sq = eps_l2 ** 2
    quadratic_real = 0.5 * inner_product(apply_operator(L_PLUS, eps_1), eps_1)
    quadratic_imag = 0.5 * inner_product(apply_operator(L_MINUS, eps_2), eps_2)

    e1, e2 = eps_1.values.real, eps_2.values.real
    full = np.abs(q + epsilon.values) ** 6
    expansion = q ** 6 + 6.0 * q ** 5 * e1 + 15.0 * q ** 4 * e1 ** 2 + 3.0 * q ** 4 * e2 ** 2
    remainder = -float(integrate(grid, full - expansion)) / 6.0

    decomposed = ground_energy + linear - 0.5 * eps_sq + quadratic_real + quadratic_imag + remainder
    return EnergyBreakdown(
        direct=direct,
        ground_energy=ground_energy,
        linear=linear,
        mass_linear=0.5 * eps_sq,
        quadratic_real=quadratic_real,
        quadratic_imag=quadratic_imag,
        mass_shift=-0.5 * eps_sq,
        remainder=remainder,
        decomposed=decomposed,
        discrepancy=direct - decomposed,
        eps_h1_sq=eps_sq + kinetic(epsilon),
    )
