"""
Perturbation generator for near-soliton initial data and coercivity ensembles.

Noise is band-limited complex Gaussian with a prescribed L2 amplitude. It can
be symmetrized, projected onto the admissible subspace (orthogonal to Q^3,
iQ^3, Q_x, iQ_x) and mass-renormalized so that ||Q + eps|| = ||Q||.
"""

import logging
from typing import List, Optional

import numpy as np

from ..models.errors import InputError
from ..models.lab_models import ModulationParams
from ..components.ground_state import eval_Q, eval_Q_x
from ..components.spectral_core import Field, Grid, inner_product, lp_norm
from ..components.symmetries import apply

logger = logging.getLogger(__name__)


def band_limited_noise(
    grid: Grid,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    max_wavenumber: float = 4.0,
    envelope: Optional[np.ndarray] = None,
    symmetric: bool = False,
    real: bool = False,
) -> Field:
    """
    Random field with Fourier support in |k| <= max_wavenumber and L2 norm `amplitude`.

    Args:
        grid: Grid to sample on
        rng: numpy random Generator (the only source of randomness)
        amplitude: Target L2 norm
        max_wavenumber: Band limit in radians/length
        envelope: Optional pointwise weight (e.g. Q samples) applied after synthesis
        symmetric: Keep only the even part
        real: Keep only the real part
    """
    n = grid.n_points
    band = np.abs(grid.wavenumbers) <= max_wavenumber
    coeffs = np.zeros(n, dtype=np.complex128)
    count = int(band.sum())
    coeffs[band] = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    values = np.fft.ifft(coeffs)
    if envelope is not None:
        values = values * envelope
    field = Field(grid, values)
    if symmetric:
        field = 0.5 * (field + field.reflect())
    if real:
        field = field.real
    norm = lp_norm(field, 2)
    if norm == 0.0:
        raise InputError("noise band is empty; raise max_wavenumber")
    return field * (amplitude / norm)


def constraint_directions(grid: Grid, mode: str = "full4") -> List[Field]:
    """Q^3, iQ^3 and, for the full decomposition, Q_x, iQ_x."""
    q3 = Field(grid, eval_Q(grid.x) ** 3)
    directions = [q3, q3 * 1j]
    if mode == "full4":
        q_x = Field(grid, eval_Q_x(grid.x))
        directions += [q_x, q_x * 1j]
    elif mode != "symmetric2":
        raise InputError(f"Unknown decomposition mode {mode!r}")
    return directions


def project_admissible(eps: Field, directions: List[Field]) -> Field:
    """Remove the components of eps along the directions (real L2 pairing)."""
    gram = np.array([[inner_product(a, b) for b in directions] for a in directions])
    rhs = np.array([inner_product(eps, d) for d in directions])
    coeffs = np.linalg.solve(gram, rhs)
    out = eps
    for c, d in zip(coeffs, directions):
        out = out - c * d
    return out


def mass_renormalize(eps: Field) -> Field:
    """
    Add beta h, h = Q - ((Q, Q^3)/(Q^3, Q^3)) Q^3, so that ||Q + eps|| = ||Q||.

    h is real, even and orthogonal to Q^3, so admissibility is kept. The root
    of the quadratic in beta nearest zero is used.
    """
    grid = eps.grid
    q = Field(grid, eval_Q(grid.x))
    q3 = Field(grid, eval_Q(grid.x) ** 3)
    h = q - (inner_product(q, q3) / inner_product(q3, q3)) * q3

    a = lp_norm(h, 2) ** 2
    b = 2.0 * inner_product(q + eps, h)
    c = lp_norm(q + eps, 2) ** 2 - lp_norm(q, 2) ** 2
    disc = b * b - 4.0 * a * c
    if disc < 0:
        raise InputError("perturbation too large to renormalize the mass")
    roots = [(-b + np.sqrt(disc)) / (2.0 * a), (-b - np.sqrt(disc)) / (2.0 * a)]
    beta = min(roots, key=abs)
    return eps + beta * h


def admissible_perturbation(
    grid: Grid,
    rng: np.random.Generator,
    amplitude: float,
    mode: str = "full4",
    symmetric: bool = False,
    renormalize_mass: bool = False,
    max_wavenumber: float = 4.0,
) -> Field:
    """
    Band-limited noise localized by a Q envelope, projected to the admissible
    subspace, scaled to `amplitude` and optionally mass-renormalized.
    """
    noise = band_limited_noise(
        grid, rng, 1.0, max_wavenumber=max_wavenumber, envelope=eval_Q(grid.x), symmetric=symmetric
    )
    eps = project_admissible(noise, constraint_directions(grid, mode))
    eps = eps * (amplitude / lp_norm(eps, 2))
    if renormalize_mass:
        eps = mass_renormalize(eps)
    return eps


def perturbed_soliton(
    grid: Grid,
    rng: np.random.Generator,
    noise_amp: float,
    orbit: Optional[ModulationParams] = None,
    admissible: bool = True,
    renormalize_mass: bool = False,
    symmetric: bool = False,
    max_wavenumber: float = 4.0,
) -> Field:
    """apply(orbit, Q + eps) for a random eps of L2 size noise_amp."""
    q = Field(grid, eval_Q(grid.x))
    if noise_amp == 0.0:
        eps = Field.zeros(grid)
    elif admissible:
        eps = admissible_perturbation(
            grid, rng, noise_amp, symmetric=symmetric,
            renormalize_mass=renormalize_mass, max_wavenumber=max_wavenumber,
        )
    else:
        eps = band_limited_noise(
            grid, rng, noise_amp, max_wavenumber=max_wavenumber,
            envelope=eval_Q(grid.x), symmetric=symmetric,
        )
        if renormalize_mass:
            eps = mass_renormalize(eps)
    u = q + eps
    if orbit is not None and not orbit.is_identity():
        u = apply(orbit, u)
    logger.debug(f"Perturbed soliton with ||eps||={lp_norm(eps, 2):.3e}")
    return u
