"""
Symmetry group of the quintic NLS acting on fields, the pseudoconformal map,
and closed-form evaluators for the soliton and pseudoconformal-soliton families.

The composite action is

    apply(p, u)(x) = e^{i gamma} e^{i x xi} lambda^{1/2} u(lambda x + x0)

taken literally; every cross term of the group law lives in compose/invert.
"""

import logging
from typing import Callable

import numpy as np

from ..config.settings import settings
from ..models.errors import LabDomainError, ScaleRangeError
from ..models.lab_models import ModulationParams
from .ground_state import eval_Q
from .spectral_core import Field, Grid, fourier_resample, translate

logger = logging.getLogger(__name__)


def check_scale(lam: float) -> None:
    if not (settings.MIN_RESAMPLE_SCALE <= lam <= settings.MAX_RESAMPLE_SCALE):
        raise ScaleRangeError(
            f"lambda={lam:.6g} outside the resampling window "
            f"[{settings.MIN_RESAMPLE_SCALE}, {settings.MAX_RESAMPLE_SCALE}]; re-grid first"
        )


def apply(params: ModulationParams, u: Field) -> Field:
    """Sample e^{i gamma} e^{i x xi} lambda^{1/2} u(lambda x + x0) on u's grid."""
    grid = u.grid
    lam = params.lam
    check_scale(lam)

    if lam == 1.0:
        moved = translate(u, params.x0).values
    else:
        moved = np.sqrt(lam) * fourier_resample(u, lam * grid.x + params.x0)

    phase = np.exp(1j * (params.gamma + grid.x * params.xi))
    return Field(grid, phase * moved)


def apply_closed_form(
    params: ModulationParams, profile: Callable[[np.ndarray], np.ndarray], grid: Grid
) -> Field:
    """The action on a function known in closed form, evaluated pointwise."""
    x = grid.x
    values = np.exp(1j * (params.gamma + x * params.xi)) * np.sqrt(params.lam) * profile(
        params.lam * x + params.x0
    )
    return Field(grid, values)


def compose(a: ModulationParams, b: ModulationParams) -> ModulationParams:
    """Parameters c with apply(c, u) = apply(a, apply(b, u))."""
    return ModulationParams(
        lam=a.lam * b.lam,
        gamma=a.gamma + b.gamma + a.x0 * b.xi,
        x0=b.lam * a.x0 + b.x0,
        xi=a.xi + a.lam * b.xi,
    )


def invert(params: ModulationParams) -> ModulationParams:
    """Group inverse, including the translation-boost phase cross term."""
    lam = params.lam
    return ModulationParams(
        lam=1.0 / lam,
        gamma=-params.gamma + params.x0 * params.xi / lam,
        x0=-params.x0 / lam,
        xi=-params.xi / lam,
    )


def scale(u: Field, lam: float) -> Field:
    return apply(ModulationParams(lam=lam), u)


def boost(u: Field, xi: float) -> Field:
    """Galilean boost at t = 0: e^{i x xi} u(x)."""
    return Field(u.grid, np.exp(1j * xi * u.grid.x) * u.values)


def galilean(u: Field, xi: float, t: float) -> Field:
    """Time-t Galilean image e^{i x xi - i t xi^2} u(x - 2 t xi) of a solution snapshot."""
    moved = translate(u, -2.0 * t * xi)
    phase = np.exp(1j * (xi * u.grid.x - t * xi ** 2))
    return Field(u.grid, phase * moved.values)


def soliton(
    t: float,
    lam: float,
    theta: float,
    x0: float,
    xi0: float,
    grid: Grid,
) -> Field:
    """
    Moving soliton
    e^{-i theta - i t xi0^2} e^{i lam^2 t} e^{i x xi0} lam^{1/2} Q(lam (x - 2 t xi0) + x0).
    """
    x = grid.x
    phase = -theta - t * xi0 ** 2 + lam ** 2 * t + x * xi0
    values = np.exp(1j * phase) * np.sqrt(lam) * eval_Q(lam * (x - 2.0 * t * xi0) + x0)
    return Field(grid, values)


def pseudoconformal_soliton(
    t: float,
    T: float,
    lam: float,
    theta: float,
    x0: float,
    xi0: float,
    grid: Grid,
) -> Field:
    """
    Pseudoconformal transform of the soliton family, blowing up at time T.

    (lam/(T-t))^{1/2} e^{i theta} e^{i (x - xi0)^2 / (4(t - T))} e^{i lam^2/(T-t)}
        Q(lam (x - xi0)/(T - t) - x0)

    This is the exact image of `soliton` under `pseudoconformal_conjugate`
    (shifted to blowup time T), so the mass is ||Q||_2^2 for every lam.
    """
    if t >= T:
        raise LabDomainError(f"pseudoconformal soliton needs t < T (t={t}, T={T})")
    tau = T - t
    y = grid.x - xi0
    phase = theta + y ** 2 / (4.0 * (t - T)) + lam ** 2 / tau
    values = np.sqrt(lam / tau) * np.exp(1j * phase) * eval_Q(lam * y / tau - x0)
    return Field(grid, values)


def support_leak(u: Field) -> float:
    """Largest modulus in the outer quarter of the box."""
    outer = np.abs(u.grid.x) >= 0.75 * u.grid.half_length
    return float(np.abs(u.values[outer]).max(initial=0.0))


def pseudoconformal_conjugate(u: Field, t: float) -> Field:
    """
    v(x) = |t|^{-1/2} conj(u(x/t)) e^{i x^2 / 4t}, with u the field at time 1/t.

    Points x/t that fall outside the box read u as zero. Applying the map at
    t and then at 1/t returns the input.
    """
    if t == 0:
        raise LabDomainError("pseudoconformal conjugation is undefined at t = 0")

    leak = support_leak(u)
    if leak >= settings.SUPPORT_TOL:
        raise LabDomainError(
            f"field reaches {leak:.3e} in the outer quarter of the box; "
            "the pseudoconformal map needs compactly supported data"
        )
    if abs(t) < 1.0:
        logger.warning(f"pseudoconformal map at |t|={abs(t):.3g} < 1 samples x/t beyond the box")

    grid = u.grid
    points = grid.x / t
    inside = np.abs(points) < grid.half_length
    sampled = np.zeros(grid.n_points, dtype=np.complex128)
    sampled[inside] = fourier_resample(u, points[inside])

    values = np.conj(sampled) * np.exp(1j * grid.x ** 2 / (4.0 * t)) / np.sqrt(abs(t))
    return Field(grid, values)
