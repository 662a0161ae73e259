"""
Scalar functionals on fields and trajectories: mass, energy, the
Gagliardo-Nirenberg ratio, variance/virial identities, the Morawetz potential,
frequency-truncated energy, the bilinear interaction size and epsilon-series
integrals.

Trajectories are sequences of evolution records (anything with `.t` and
`.field`) or plain (t, Field) pairs. Nothing here feeds back into the solver.
"""

import logging
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from ..models.errors import InputError, LabDomainError
from ..models.lab_models import (
    DiagnosticSample,
    MorawetzConfig,
    MorawetzSample,
    TruncatedEnergyReport,
    VarianceSample,
)
from .ground_state import cached_constants, scaling_generator
from .spectral_core import Field, derivative, integrate, low_pass, high_pass, lp_norm
from .symmetries import support_leak

logger = logging.getLogger(__name__)

# Offset between the cutoff parameter k and the projection level P_{<= k + 9}
TRUNCATION_OFFSET = 9
LEAK_FLAG_TOL = 1e-8


def mass(u: Field) -> float:
    """M(u) = int |u|^2 dx."""
    return float(integrate(u.grid, np.abs(u.values) ** 2))


def kinetic(u: Field) -> float:
    """||u_x||_2^2."""
    return float(integrate(u.grid, np.abs(derivative(u, 1).values) ** 2))


def energy(u: Field) -> float:
    """E(u) = 1/2 ||u_x||_2^2 - 1/6 ||u||_6^6."""
    potential = float(integrate(u.grid, np.abs(u.values) ** 6))
    return 0.5 * kinetic(u) - potential / 6.0


def gn_ratio(u: Field) -> float:
    """||u||_6^6 / [3 (||u||_2^2 / ||Q||_2^2)^2 ||u_x||_2^2]; at most 1, equal on the Q orbit."""
    q_mass = cached_constants(u.grid).mass_sq
    denominator = 3.0 * (mass(u) / q_mass) ** 2 * kinetic(u)
    if denominator <= 0.0:
        raise LabDomainError("gn_ratio is undefined for zero or constant fields")
    return float(integrate(u.grid, np.abs(u.values) ** 6)) / denominator


def variance(u: Field) -> float:
    return float(integrate(u.grid, u.grid.x ** 2 * np.abs(u.values) ** 2))


def variance_rate(u: Field) -> float:
    """4 Im int x conj(u) u_x dx, the exact time derivative of the variance."""
    u_x = derivative(u, 1).values
    return 4.0 * float(np.imag(integrate(u.grid, u.grid.x * np.conj(u.values) * u_x)))


def _snapshots(trajectory) -> Tuple[np.ndarray, List[Field]]:
    times, fields = [], []
    for item in trajectory:
        if isinstance(item, tuple):
            t, field = item
        else:
            t, field = item.t, item.field
        times.append(float(t))
        fields.append(field)
    return np.asarray(times), fields


def _time_derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    edge = 2 if times.size >= 3 else 1
    return np.gradient(values, times, edge_order=edge)


def variance_and_virial(trajectory) -> List[VarianceSample]:
    """
    V(t) = int x^2 |u|^2 with the residuals of dV/dt = 4 Im int x conj(u) u_x
    and d^2V/dt^2 = 16 E, derivatives by centered differences in t.
    """
    times, fields = _snapshots(trajectory)
    if times.size < 3:
        raise InputError("variance_and_virial needs at least three snapshots")

    v = np.array([variance(f) for f in fields])
    rate = np.array([variance_rate(f) for f in fields])
    sixteen_e = np.array([16.0 * energy(f) for f in fields])
    dv = _time_derivative(v, times)
    d2v = _time_derivative(dv, times)

    samples = []
    for j, f in enumerate(fields):
        leak = support_leak(f) > LEAK_FLAG_TOL
        samples.append(
            VarianceSample(
                t=float(times[j]),
                variance=float(v[j]),
                dv_dt=float(dv[j]),
                d2v_dt2=float(d2v[j]),
                momentum_term=float(rate[j]),
                sixteen_energy=float(sixteen_e[j]),
                first_residual=float(abs(dv[j] - rate[j])),
                second_residual=float(abs(d2v[j] - sixteen_e[j])),
                support_leak=leak,
            )
        )
    if any(s.support_leak for s in samples):
        logger.warning("Field reaches the outer quarter of the box; variance identities are unreliable")
    return samples


# ---------------------------------------------------------------------------
# Morawetz potential
# ---------------------------------------------------------------------------


def psi_profile(r: np.ndarray, profile: str = "c2_polynomial") -> np.ndarray:
    """Even cutoff: 1 on |r| <= 1, tapering to 0 on 1 < |r| < 2, zero beyond."""
    s = np.clip(np.abs(np.asarray(r, dtype=float)) - 1.0, 0.0, 1.0)
    if profile == "c2_polynomial":
        return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)
    if profile == "cosine":
        return np.cos(0.5 * np.pi * s) ** 2
    raise InputError(f"Unknown psi profile {profile!r}")


@lru_cache(maxsize=8)
def _taper_integral_table(profile: str):
    r = np.linspace(1.0, 2.0, 20001)
    return r, cumulative_trapezoid(psi_profile(r, profile) ** 2, r, initial=0.0)


def morawetz_weight(x: np.ndarray, cfg: MorawetzConfig, half_length: float) -> np.ndarray:
    """
    phi(x) = int_0^x psi^2(eta1 y / R) dy: odd, equal to x on |x| <= R/eta1,
    constant beyond 2R/eta1.
    """
    R = cfg.R if cfg.R is not None else half_length / 4.0
    plateau = R / cfg.eta1
    r_table, g_table = _taper_integral_table(cfg.psi_profile)
    ax = np.abs(x)
    r = np.clip(ax / plateau, 1.0, 2.0)
    tail = plateau * np.interp(r, r_table, g_table)
    phi = np.where(ax <= plateau, ax, plateau + tail)
    return np.sign(x) * phi


def _cutoff(u: Field, cfg: MorawetzConfig) -> Field:
    if cfg.cutoff_level is None:
        return u
    return low_pass(u, cfg.cutoff_level + TRUNCATION_OFFSET)


def morawetz_potential(u: Field, cfg: Optional[MorawetzConfig] = None) -> float:
    """M = int phi Im[conj(Pu) d_x Pu] dx with P = P_{<= k+9} (or no cutoff)."""
    cfg = cfg or MorawetzConfig()
    w = _cutoff(u, cfg)
    phi = morawetz_weight(u.grid.x, cfg, u.grid.half_length)
    density = np.imag(np.conj(w.values) * derivative(w, 1).values)
    return float(integrate(u.grid, phi * density))


def morawetz_series(trajectory, cfg: Optional[MorawetzConfig] = None, series=None) -> List[MorawetzSample]:
    """
    M(t) along a trajectory with its centered time derivative. When a
    modulation series with stored epsilons is supplied, each sample also gets
    the leading-order value -2 (eps_2, Q/2 + y Q_y).

    With phi(x) = x on the plateau, M is unchanged by u -> lambda^{-1/2} v(x / lambda),
    so the value carries no lambda factor while the rescaled profile stays on
    the plateau. Translation and boost add terms of order x0 and xi.
    """
    cfg = cfg or MorawetzConfig()
    times, fields = _snapshots(trajectory)
    values = np.array([morawetz_potential(f, cfg) for f in fields])
    rates = _time_derivative(values, times) if times.size >= 2 else np.full(times.size, np.nan)

    predictions = [None] * times.size
    epsilons = getattr(series, "epsilons", None) if series is not None else None
    if epsilons and not getattr(series, "dechirped", False):
        generator = scaling_generator(epsilons[0].grid)
        for j, eps in enumerate(epsilons[: times.size]):
            predictions[j] = -2.0 * float(integrate(eps.grid, eps.values.imag * generator.values.real))

    return [
        MorawetzSample(
            t=float(times[j]),
            value=float(values[j]),
            derivative=None if np.isnan(rates[j]) else float(rates[j]),
            prediction=predictions[j],
        )
        for j in range(times.size)
    ]


# ---------------------------------------------------------------------------
# Frequency-localized quantities
# ---------------------------------------------------------------------------


def truncated_energy(u: Field, k: int) -> float:
    """E(P_{<= k+9} u) with the sharp cutoff."""
    return energy(low_pass(u, k + TRUNCATION_OFFSET))


def epsilon_integral(series) -> float:
    """int ||eps||_2^2 lambda^{-2} dt over a modulation series."""
    times = np.asarray(series.times, dtype=float)
    if times.size < 2:
        return 0.0
    eps_sq = np.asarray(series.eps_l2, dtype=float) ** 2
    lam = np.array([p.lam for p in series.params])
    return float(trapezoid(eps_sq / lam ** 2, times))


def truncated_energy_drift(trajectory, k: int, series=None) -> TruncatedEnergyReport:
    """Per-time E(P_{<= k+9} u(t)) with drift and sup over the window."""
    times, fields = _snapshots(trajectory)
    if times.size == 0:
        raise InputError("truncated_energy_drift needs at least one snapshot")
    values = np.array([truncated_energy(f, k) for f in fields])
    report = TruncatedEnergyReport(
        k=k,
        times=times.tolist(),
        values=values.tolist(),
        drift=float(np.max(np.abs(values - values[0]))),
        sup_abs=float(np.max(np.abs(values))),
        epsilon_integral=epsilon_integral(series) if series is not None else None,
    )
    logger.debug(f"Truncated energy k={k}: drift {report.drift:.3e}, sup {report.sup_abs:.3e}")
    return report


def bilinear_interaction(u: Field, i: int) -> float:
    """Fixed-time factor 2^{i/2} ||(P_{>= i} u)(P_{<= i-3} u)||_2."""
    if i < 3:
        raise InputError(f"bilinear_interaction needs level i >= 3, got {i}")
    high = high_pass(u, i)
    low = low_pass(u, i - 3)
    return float(2.0 ** (0.5 * i) * lp_norm(high * low, 2))


def diagnostic_sample(
    u: Field,
    t: float,
    morawetz_cfg: Optional[MorawetzConfig] = None,
    truncation_levels: Sequence[int] = (),
    eps_l2: Optional[float] = None,
) -> DiagnosticSample:
    """Every scalar functional of one snapshot."""
    try:
        ratio = gn_ratio(u)
    except LabDomainError:
        ratio = float("nan")
    return DiagnosticSample(
        t=t,
        mass=mass(u),
        energy=energy(u),
        gn_ratio=ratio,
        variance=variance(u),
        morawetz=morawetz_potential(u, morawetz_cfg),
        truncated_energy={str(k): truncated_energy(u, k) for k in truncation_levels},
        eps_l2=eps_l2,
    )


def sample_trajectory(trajectory, **kwargs) -> Iterable[DiagnosticSample]:
    times, fields = _snapshots(trajectory)
    return [diagnostic_sample(f, float(t), **kwargs) for t, f in zip(times, fields)]
