"""
Time integration of i u_t + u_xx + |u|^4 u = 0 by Strang split-step Fourier.

Each step is half a free propagation, the exact nonlinear phase rotation, and
another half free propagation. The step size follows
dt = min(dt_init, dt_safety / (1 + ||u||_inf^4)) unless adaptivity is off.
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import optimize

from ..models.errors import InputError, NumericalFailure
from ..models.lab_models import ConvergenceReport, SolverConfig
from .diagnostics import energy, mass
from .ground_state import cached_constants
from .spectral_core import Field, dealias_mask, derivative, lp_norm

logger = logging.getLogger(__name__)

HALT_GRADIENT = "gradient_threshold"
HALT_LAMBDA_FLOOR = "lambda_floor"
HALT_MAX_STEPS = "max_steps"
HALT_NUMERICAL = "numerical_failure"

# Below this, the three self-convergence errors are roundoff
_EXACT_PROPAGATOR_TOL = 1e-12
_ORDER_BRACKET = (0.05, 12.0)


class StepResult(BaseModel):
    """One recorded state of an evolution run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: float
    field: Field
    step: int = 0
    dt: float = 0.0
    mass: float
    energy: float
    mass_drift: float
    energy_drift: float
    grad_norm: float
    lambda_proxy: float
    halted: Optional[str] = None
    warning: Optional[str] = None


def linear_step(u: Field, dt: float) -> Field:
    """Exact free propagator e^{i dt d_xx}: coefficient j picks up e^{-i k_j^2 dt}."""
    k = u.grid.wavenumbers
    return Field(u.grid, np.fft.ifft(np.exp(-1j * k ** 2 * dt) * np.fft.fft(u.values)))


def nonlinear_step(u: Field, dt: float) -> Field:
    """Exact flow of i u_t + |u|^4 u = 0: pointwise u e^{i |u|^4 dt}."""
    modulus4 = np.abs(u.values) ** 4
    return Field(u.grid, u.values * np.exp(1j * modulus4 * dt))


class SplitStepIntegrator:
    """Strang splitting on a fixed grid with an optional smooth dealiasing mask."""

    def __init__(self, grid, dealias: bool = True, nonlinear: bool = True):
        self.grid = grid
        self.k_sq = grid.wavenumbers ** 2
        self.mask = dealias_mask(grid) if dealias else None
        self.nonlinear = nonlinear
        self._cached_dt = None
        self._half = None

    def _half_propagator(self, dt: float) -> np.ndarray:
        if dt != self._cached_dt:
            self._half = np.exp(-0.5j * self.k_sq * dt)
            self._cached_dt = dt
        return self._half

    def step(self, values: np.ndarray, dt: float) -> np.ndarray:
        """Advance samples by dt; returns the Fourier coefficients of the result."""
        half = self._half_propagator(dt)
        v = np.fft.ifft(half * np.fft.fft(values))
        if self.nonlinear:
            v = v * np.exp(1j * np.abs(v) ** 4 * dt)
        coeffs = half * np.fft.fft(v)
        if self.mask is not None:
            coeffs *= self.mask
        return coeffs

    def grad_norm_from_coefficients(self, coeffs: np.ndarray) -> float:
        # Parseval: ||u_x||^2 = (dx / n) sum k^2 |c_k|^2
        total = np.sum(self.k_sq * np.abs(coeffs) ** 2) * self.grid.spacing / self.grid.n_points
        return float(np.sqrt(total))


def _uniform_step_count(duration: float, dt: float) -> int:
    """Smallest number of equal steps of size <= dt covering the duration."""
    return max(1, math.ceil(duration / dt - 1e-9))


def evolve(
    u0: Field,
    t_final: float,
    cfg: Optional[SolverConfig] = None,
    t0: float = 0.0,
    nonlinear: bool = True,
    raise_on_failure: bool = False,
) -> List[StepResult]:
    """
    Integrate from t0 to t0 + t_final (t_final may be negative).

    Args:
        u0: Initial field
        t_final: Signed duration of the run
        cfg: Solver settings
        t0: Time label of u0
        nonlinear: Disable to run the free flow only
        raise_on_failure: Raise NumericalFailure instead of returning a halted record

    Returns:
        Recorded states, first at t0; the last one carries `halted` if the run stopped early
    """
    cfg = cfg or SolverConfig()
    grid = u0.grid
    integrator = SplitStepIntegrator(grid, dealias=cfg.dealias, nonlinear=nonlinear)
    direction = 1.0 if t_final >= 0 else -1.0
    grad_q = math.sqrt(cached_constants(grid).grad_sq)

    mass0 = mass(u0)
    energy0 = energy(u0)
    grad0 = lp_norm(derivative(u0, 1), 2)
    energy_scale = max(abs(energy0), 0.5 * grad0 ** 2, np.finfo(float).tiny)
    mass_scale = max(mass0, np.finfo(float).tiny)

    def record(t, values, step, dt, grad, halted=None):
        field = Field(grid, values)
        m = mass(field)
        e = energy(field)
        return StepResult(
            t=t,
            field=field,
            step=step,
            dt=dt,
            mass=m,
            energy=e,
            mass_drift=abs(m - mass0) / mass_scale,
            energy_drift=abs(e - energy0) / energy_scale,
            grad_norm=grad,
            lambda_proxy=grad_q / grad if grad > 0 else math.inf,
            halted=halted,
        )

    results = [record(t0, u0.values, 0, 0.0, grad0)]
    target = abs(t_final)
    n_fixed = None if cfg.adaptive else _uniform_step_count(target, cfg.dt_init)
    tail_tol = 1e-14 * max(1.0, target)

    values = u0.values.copy()
    elapsed = 0.0
    step = 0
    last_dt = 0.0
    grad = grad0
    halted = None

    logger.info(
        f"Evolving on {grid!r} for t_final={t_final:g} "
        f"(adaptive={cfg.adaptive}, dealias={cfg.dealias}, nonlinear={nonlinear})"
    )

    def finished() -> bool:
        if n_fixed is not None:
            return step >= n_fixed
        return elapsed >= target - tail_tol

    while not finished():
        if step >= cfg.max_steps:
            halted = HALT_MAX_STEPS
            break

        if n_fixed is not None:
            dt = target / n_fixed
        else:
            sup4 = float(np.max(np.abs(values))) ** 4
            dt = min(cfg.dt_init, cfg.dt_safety / (1.0 + sup4), target - elapsed)
        signed_dt = direction * dt

        coeffs = integrator.step(values, signed_dt)
        new_values = np.fft.ifft(coeffs)
        if not np.all(np.isfinite(new_values)):
            halted = HALT_NUMERICAL
            break

        values = new_values
        grad = integrator.grad_norm_from_coefficients(coeffs)
        step += 1
        last_dt = signed_dt
        if n_fixed is not None:
            elapsed = target if step == n_fixed else step * dt
        else:
            elapsed += dt
        t_now = t0 + direction * elapsed

        if grad > cfg.blowup_grad_threshold:
            halted = HALT_GRADIENT
        elif grad_q / grad < cfg.blowup_lambda_floor:
            halted = HALT_LAMBDA_FLOOR

        if halted or finished() or step % cfg.output_every == 0:
            results.append(record(t_now, values, step, last_dt, grad, halted=halted))
        if halted:
            break

    if halted == HALT_NUMERICAL:
        last = results[-1]
        if last.step != step:
            last = record(t0 + direction * elapsed, values, step, last_dt, grad)
            results.append(last)
        last.halted = HALT_NUMERICAL
        logger.error(f"Non-finite samples after step {step} at t={last.t:g}; returning last good state")
        if raise_on_failure:
            raise NumericalFailure(f"non-finite samples after step {step}", last_good=last)
    elif halted == HALT_MAX_STEPS:
        if results[-1].step != step:
            results.append(record(t0 + direction * elapsed, values, step, last_dt, grad))
        results[-1].halted = HALT_MAX_STEPS
        logger.warning(f"Stopped after max_steps={cfg.max_steps} at t={results[-1].t:g}")
    elif halted:
        logger.info(f"Run halted ({halted}) at t={results[-1].t:g}, ||u_x||={grad:.3e}")

    worst_mass = max(r.mass_drift for r in results)
    if worst_mass > cfg.conservation_tol:
        results[-1].warning = (
            f"mass drift {worst_mass:.3e} exceeds conservation_tol {cfg.conservation_tol:.1e}"
        )
        logger.warning(results[-1].warning)

    logger.info(
        f"Evolution finished after {step} steps: mass drift {results[-1].mass_drift:.2e}, "
        f"energy drift {results[-1].energy_drift:.2e}"
    )
    return results


def final_field(results: List[StepResult]) -> Field:
    return results[-1].field


def observed_order(steps: Sequence[float], errors: Sequence[float]) -> Optional[float]:
    """
    Order p of a scheme with f(h) = f* + C h^p, given the differences between
    runs at three decreasing steps. Geometric sequences have the closed form
    log(e0/e1)/log(h0/h1); other sequences are solved by bracketing, and a
    ratio with no root in the bracket gives None.
    """
    h0, h1, h2 = steps
    ratio = errors[0] / errors[1]
    if math.isclose(h0 / h1, h1 / h2, rel_tol=1e-12):
        return math.log(ratio) / math.log(h0 / h1)

    def mismatch(p: float) -> float:
        return math.log((h0 ** p - h1 ** p) / (h1 ** p - h2 ** p)) - math.log(ratio)

    low, high = _ORDER_BRACKET
    if mismatch(low) * mismatch(high) > 0:
        logger.warning(f"Difference ratio {ratio:.4g} gives no order in [{low}, {high}] for steps {list(steps)}")
        return None
    return float(optimize.brentq(mismatch, low, high, xtol=1e-10))


def convergence_order(
    u0: Field,
    t_final: float,
    dt: float = 1e-2,
    dts: Optional[Sequence[float]] = None,
    nonlinear: bool = True,
    dealias: bool = False,
) -> ConvergenceReport:
    """
    Observed order of the fixed-step scheme from three runs (dt, dt/2, dt/4 by default).

    The order comes from the ratio of successive differences and the actual
    step ratios (observed_order). When every difference is at roundoff the
    scheme is exact for the problem and the order is left undefined.
    """
    steps = list(dts) if dts is not None else [dt, dt / 2.0, dt / 4.0]
    if len(steps) != 3:
        raise InputError(f"convergence_order needs three step sizes, got {len(steps)}")
    if any(s <= 0 for s in steps):
        raise InputError("step sizes must be positive")
    if not (steps[0] > steps[1] > steps[2]):
        raise InputError(f"step sizes must be distinct and strictly decreasing, got {steps}")

    finals = []
    for step_size in steps:
        cfg = SolverConfig(
            dt_init=step_size,
            adaptive=False,
            dealias=dealias,
            blowup_grad_threshold=1e12,
            blowup_lambda_floor=1e-12,
        )
        finals.append(evolve(u0, t_final, cfg, nonlinear=nonlinear)[-1].field)

    errors = [lp_norm(finals[0] - finals[1], 2), lp_norm(finals[1] - finals[2], 2)]
    scale = max(lp_norm(u0, 2), 1.0)
    if max(errors) <= _EXACT_PROPAGATOR_TOL * scale:
        logger.info(f"Self-convergence differences at roundoff ({max(errors):.2e}); exact propagator")
        return ConvergenceReport(dts=steps, errors=errors, order=None, exact_propagator=True)

    if errors[1] == 0.0:
        raise InputError("finest runs agree exactly; the ratio is undefined")
    order = observed_order(steps, errors)
    if order is not None:
        logger.info(f"Observed order {order:.3f} from differences {errors[0]:.3e}, {errors[1]:.3e}")
    return ConvergenceReport(dts=steps, errors=errors, order=order, exact_propagator=False)
