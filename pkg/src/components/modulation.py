"""
Modulation decomposition of near-soliton fields.

Parameters are frame parameters: apply(params, u) = Q + eps with eps orthogonal
to Q^3, iQ^3 (and Q_x, iQ_x in the full mode). For u = e^{it} Q the fitted
phase is -t and lambda is the length scale of u; orbit_params = invert(params)
rebuilds u = apply(orbit_params, Q + eps).

The Newton solve never resamples: by unitarity of the action,
(apply(p, u), f) = (u, apply(p^{-1}, f)), and the constraint directions are
known in closed form. Updates are left compositions p <- delta o p, whose
Jacobian at delta = identity is the matrix of jacobian_at_identity up to O(eps).
"""

import logging
import math
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.integrate import cumulative_trapezoid

from ..config.settings import settings
from ..models.errors import BasinError, InputError, LabDomainError, ScaleRangeError
from ..models.lab_models import ModulationParams, StabilityPoint
from .ground_state import cached_constants, eval_Q, eval_Q_x
from .linearized_ops import L_MINUS, apply_operator
from .spectral_core import Field, Grid, derivative, inner_product, integrate, lp_norm
from .symmetries import apply, apply_closed_form, compose, invert

logger = logging.getLogger(__name__)

Mode = Literal["symmetric2", "full4"]

_MODE_SIZE = {"symmetric2": 2, "full4": 4}
_SEED_SCALES = [2.0 ** (j / 4.0) for j in range(-12, 13)]
_MAX_BACKTRACK = 12


def _check_mode(mode: str) -> int:
    if mode not in _MODE_SIZE:
        raise InputError(f"Unknown decomposition mode {mode!r}; expected 'symmetric2' or 'full4'")
    return _MODE_SIZE[mode]


def _q_cubed(y):
    return eval_Q(y) ** 3


class DecompositionResult(BaseModel):
    """Outcome of one decomposition u -> (params, eps)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    params: ModulationParams
    epsilon: Field
    ortho_residuals: List[float]
    eps_l2: float
    newton_iters: int
    mode: str = "full4"

    @property
    def orbit_params(self) -> ModulationParams:
        return invert(self.params)


class ModulationSeries(BaseModel):
    """Decompositions along a trajectory, with rescaled time s."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    mode: str
    times: List[float]
    s_values: List[float]
    params: List[ModulationParams]
    gamma_unwrapped: List[float]
    eps_l2: List[float]
    newton_iters: List[int]
    ode_residuals: List[List[float]] = []
    virial_residuals: List[float] = []
    log_lambda_drift: List[float] = []  # ln lambda(s) - ln lambda(0)
    phase_drift: List[float] = []  # gamma(s) - gamma(0) + s
    epsilons: List[Field] = []
    chirps: List[float] = []  # b per sample when tracked with dechirp
    dechirped: bool = False
    halted: Optional[str] = None

    def __len__(self) -> int:
        return len(self.times)


# ---------------------------------------------------------------------------
# Residual map
# ---------------------------------------------------------------------------


class _ResidualMap:
    """F(p) = [(eps, Q^3), (eps, iQ^3), (eps, Q_x), (eps, iQ_x)] with eps = apply(p, u) - Q."""

    def __init__(self, u: Field, mode: str):
        self.u = u
        self.size = _check_mode(mode)
        self.offset = cached_constants(u.grid).l4_fourth  # (Q, Q^3)

    def __call__(self, params: ModulationParams) -> np.ndarray:
        pinv = invert(params)
        grid = self.u.grid
        g3 = apply_closed_form(pinv, _q_cubed, grid).values
        z3 = integrate(grid, self.u.values * np.conj(g3))
        out = [z3.real - self.offset, z3.imag]
        if self.size == 4:
            gx = apply_closed_form(pinv, eval_Q_x, grid).values
            zx = integrate(grid, self.u.values * np.conj(gx))
            out += [zx.real, zx.imag]
        return np.array(out)


def _delta(step: np.ndarray, size: int) -> ModulationParams:
    lam = 1.0 + step[0]
    if lam <= 0.0:
        raise LabDomainError(f"Newton iterate produced lambda factor {lam:.3g} <= 0")
    x0 = step[2] if size == 4 else 0.0
    xi = step[3] if size == 4 else 0.0
    return ModulationParams(lam=lam, gamma=step[1], x0=x0, xi=xi)


def _left_update(params: ModulationParams, step: np.ndarray, size: int) -> ModulationParams:
    return compose(_delta(step, size), params)


def jacobian_at_identity(mode: str = "full4", grid: Optional[Grid] = None) -> np.ndarray:
    """
    Derivative of the residual map at identity parameters and u = Q.

    Rows are the constraints (Q^3, iQ^3, Q_x, iQ_x), columns the parameters
    (lambda, gamma, x0, xi); entries are quadratures of the generators
    Q/2 + xQ_x, iQ, Q_x, ixQ against the constraint directions.
    """
    size = _check_mode(mode)
    grid = grid or Grid(settings.DEFAULT_HALF_LENGTH, settings.DEFAULT_N_POINTS)
    x = grid.x
    q = eval_Q(x)
    q_x = eval_Q_x(x)
    generators = [
        Field(grid, 0.5 * q + x * q_x),
        Field(grid, 1j * q),
        Field(grid, q_x),
        Field(grid, 1j * x * q),
    ][:size]
    constraints = [
        Field(grid, q ** 3),
        Field(grid, 1j * q ** 3),
        Field(grid, q_x),
        Field(grid, 1j * q_x),
    ][:size]
    return np.array([[inner_product(g, c) for g in generators] for c in constraints])


def _finite_difference_jacobian(
    residual: _ResidualMap, params: ModulationParams, h: float
) -> np.ndarray:
    size = residual.size
    jac = np.empty((size, size))
    for j in range(size):
        e = np.zeros(size)
        e[j] = h
        forward = residual(_left_update(params, e, size))
        backward = residual(_left_update(params, -e, size))
        jac[:, j] = (forward - backward) / (2.0 * h)
    return jac


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------


def seed_params(u: Field, mode: str = "full4") -> ModulationParams:
    """
    First-frame guess: x0 at the |u|^2 centroid, xi from the mean Fourier
    frequency, lambda by a dyadic grid search on |(apply(p, u), Q)|, and gamma
    from the phase of that overlap.
    """
    size = _check_mode(mode)
    grid = u.grid
    density = np.abs(u.values) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        raise InputError("cannot seed a decomposition of the zero field")

    if size == 4:
        x0 = float(np.sum(grid.x * density) / total)
        spectrum = np.abs(np.fft.fft(u.values)) ** 2
        eta = float(np.sum(grid.wavenumbers * spectrum) / np.sum(spectrum))
    else:
        x0, eta = 0.0, 0.0

    best = None
    for lam in _SEED_SCALES:
        trial = ModulationParams(lam=lam, gamma=0.0, x0=x0, xi=-eta * lam)
        g = apply_closed_form(invert(trial), eval_Q, grid).values
        overlap = integrate(grid, u.values * np.conj(g))
        if best is None or abs(overlap) > abs(best[1]):
            best = (trial, overlap)

    trial, overlap = best
    gamma = -float(np.angle(overlap))
    return ModulationParams(lam=trial.lam, gamma=gamma, x0=trial.x0, xi=trial.xi)


def chirp_rate(u: Field) -> Tuple[float, float]:
    """
    Quadratic phase e^{-i b (x - c)^2 / 4} of u about its |u|^2 centroid c.

    From Im (x - c) conj(u) u_x = -(b/2) (x - c)^2 |u|^2 integrated; returns (b, c).
    The pseudoconformal soliton with blowup time T has b = 1/(T - t).
    """
    grid = u.grid
    density = np.abs(u.values) ** 2
    total = float(integrate(grid, density))
    if total == 0.0:
        raise InputError("cannot estimate the chirp of the zero field")
    center = float(integrate(grid, grid.x * density)) / total
    offset = grid.x - center
    current = float(integrate(grid, offset * np.imag(np.conj(u.values) * derivative(u).values)))
    spread = float(integrate(grid, offset ** 2 * density))
    return -2.0 * current / spread, center


def remove_chirp(u: Field, b: float, center: float = 0.0) -> Field:
    """u e^{i b (x - center)^2 / 4}."""
    return Field(u.grid, u.values * np.exp(0.25j * b * (u.grid.x - center) ** 2))


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------


def decompose(
    u: Field,
    mode: str = "full4",
    seed: Optional[ModulationParams] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    jacobian: Literal["refresh", "analytic"] = "refresh",
) -> DecompositionResult:
    """
    Solve the orthogonality conditions for the frame parameters by damped Newton.

    Args:
        u: Near-soliton field
        mode: "symmetric2" (lambda, gamma) or "full4" (lambda, gamma, x0, xi)
        seed: Starting parameters inside the basin; seeded automatically if omitted
        tol: Convergence threshold on max |residual|
        max_iter: Iteration cap before BasinError
        jacobian: "refresh" recomputes it by central differences every iteration,
            "analytic" keeps the matrix at identity

    Returns:
        DecompositionResult with eps = apply(params, u) - Q
    """
    size = _check_mode(mode)
    tol = settings.NEWTON_TOL if tol is None else tol
    max_iter = settings.NEWTON_MAX_ITER if max_iter is None else max_iter
    residual = _ResidualMap(u, mode)

    params = seed if seed is not None else seed_params(u, mode)
    jac_identity = jacobian_at_identity(mode, u.grid)

    current = residual(params)
    norm = float(np.max(np.abs(current)))
    iterations = 0
    while norm > tol:
        if iterations >= max_iter:
            raise BasinError(
                f"Newton did not converge in {max_iter} iterations (|F|={norm:.3e}); "
                "the field is too far from the soliton orbit for this seed",
                last_params=params,
                iterations=iterations,
            )
        jac = jac_identity
        if jacobian == "refresh":
            jac = _finite_difference_jacobian(residual, params, settings.NEWTON_FD_STEP)
        try:
            step = -np.linalg.solve(jac, current)
        except np.linalg.LinAlgError as e:
            raise BasinError(f"Singular modulation Jacobian: {e}", last_params=params, iterations=iterations)

        damping = 1.0
        for _ in range(_MAX_BACKTRACK):
            candidate = _left_update(params, damping * step, size)
            trial = residual(candidate)
            trial_norm = float(np.max(np.abs(trial)))
            if trial_norm < norm:
                break
            damping *= 0.5
        else:
            raise BasinError(
                f"Line search stalled at |F|={norm:.3e}", last_params=params, iterations=iterations
            )
        params, current, norm = candidate, trial, trial_norm
        iterations += 1
        logger.debug(f"Newton iteration {iterations}: |F|={norm:.3e}, damping={damping}")

    epsilon = apply(params, u) - Field(u.grid, eval_Q(u.grid.x))
    ortho = [inner_product(epsilon, d) for d in _directions(u.grid, size)]
    if max(abs(r) for r in ortho) > 10.0 * tol:
        logger.warning(
            f"Orthogonality on the resampled eps is {max(abs(r) for r in ortho):.2e}; "
            "the field may be under-resolved at this scale"
        )
    return DecompositionResult(
        params=params,
        epsilon=epsilon,
        ortho_residuals=ortho,
        eps_l2=lp_norm(epsilon, 2),
        newton_iters=iterations,
        mode=mode,
    )


def _directions(grid: Grid, size: int) -> List[Field]:
    q3 = Field(grid, eval_Q(grid.x) ** 3)
    out = [q3, q3 * 1j]
    if size == 4:
        q_x = Field(grid, eval_Q_x(grid.x))
        out += [q_x, q_x * 1j]
    return out


def stability_sweep(
    params: ModulationParams,
    amplitudes: Sequence[float],
    rng: np.random.Generator,
    grid: Optional[Grid] = None,
    mode: str = "full4",
    max_wavenumber: float = 4.0,
) -> List[StabilityPoint]:
    """
    Recovered-parameter error and ||eps|| for u = apply(invert(params), Q + w),
    ||w||_2 = amplitude, one random direction per amplitude.
    """
    from ..utils.perturbations import band_limited_noise

    grid = grid or Grid(settings.DEFAULT_HALF_LENGTH, settings.DEFAULT_N_POINTS)
    q = Field(grid, eval_Q(grid.x))
    direction = band_limited_noise(grid, rng, 1.0, max_wavenumber=max_wavenumber, envelope=q.values.real)
    orbit = invert(params)
    points = []
    for amplitude in amplitudes:
        u = apply(orbit, q + amplitude * direction)
        result = decompose(u, mode, seed=params)
        p = result.params
        dgamma = abs(math.remainder(p.gamma - params.gamma, 2.0 * math.pi))
        lam_err = abs(p.lam / params.lam - 1.0)
        error = max(lam_err, dgamma, abs(p.x0 - params.x0), abs(p.xi - params.xi))
        points.append(
            StabilityPoint(
                amplitude=amplitude,
                eps_l2=result.eps_l2,
                param_error=error,
                lambda_rel_error=lam_err,
                newton_iters=result.newton_iters,
            )
        )
    return points


# ---------------------------------------------------------------------------
# Tracking and modulation laws
# ---------------------------------------------------------------------------


def _trajectory_items(trajectory) -> List[Tuple[float, Field]]:
    items = []
    for item in trajectory:
        if isinstance(item, tuple):
            items.append((float(item[0]), item[1]))
        else:
            items.append((float(item.t), item.field))
    return items


def rescaled_time(times: Sequence[float], lambdas: Sequence[float]) -> np.ndarray:
    """s(t) = int_{t_0}^{t} lambda^{-2} dtau by the cumulative trapezoid rule."""
    t = np.asarray(times, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    if t.size < 2:
        return np.zeros_like(t)
    return cumulative_trapezoid(lam ** -2, t, initial=0.0)


def track(
    trajectory,
    mode: str = "full4",
    seed: Optional[ModulationParams] = None,
    keep_epsilons: bool = True,
    dechirp: bool = False,
) -> ModulationSeries:
    """
    Decompose each snapshot, seeding from the previous one, unwrap gamma and
    build s. A basin loss truncates the series and records the reason.

    With dechirp, each snapshot first loses its quadratic phase (chirp_rate,
    remove_chirp), so lambda follows the amplitude profile of chirped data such
    as the pseudoconformal soliton. The modulation laws are not evaluated for
    such a series.
    """
    _check_mode(mode)
    items = _trajectory_items(trajectory)
    times, params, gammas, eps_l2, iters, epsilons, chirps = [], [], [], [], [], [], []
    halted = None
    previous = seed
    for t, field in items:
        try:
            if dechirp:
                b, center = chirp_rate(field)
                field = remove_chirp(field, b, center)
            result = decompose(field, mode, seed=previous)
        except (BasinError, LabDomainError, ScaleRangeError) as e:
            halted = f"basin_loss at t={t:g}: {e}"
            logger.warning(f"Modulation tracking stopped: {halted}")
            break
        p = result.params
        if gammas:
            # branch of gamma + 2 pi k nearest the previous value
            gamma = gammas[-1] + math.remainder(p.gamma - gammas[-1], 2.0 * math.pi)
        else:
            gamma = p.gamma if p.gamma <= math.pi else p.gamma - 2.0 * math.pi
        times.append(t)
        params.append(p)
        gammas.append(gamma)
        eps_l2.append(result.eps_l2)
        iters.append(result.newton_iters)
        if dechirp:
            chirps.append(b)
        if keep_epsilons:
            epsilons.append(result.epsilon)
        previous = p

    s = rescaled_time(times, [p.lam for p in params])
    lam0 = params[0].lam if params else 1.0
    series = ModulationSeries(
        mode=mode,
        times=times,
        s_values=s.tolist(),
        params=params,
        gamma_unwrapped=gammas,
        eps_l2=eps_l2,
        newton_iters=iters,
        log_lambda_drift=[math.log(p.lam / lam0) for p in params],
        phase_drift=[g - gammas[0] + sv for g, sv in zip(gammas, s)] if gammas else [],
        epsilons=epsilons,
        chirps=chirps,
        dechirped=dechirp,
        halted=halted,
    )
    if len(series) >= 3 and keep_epsilons and not dechirp:
        series.ode_residuals = ode_residuals(series)
        series.virial_residuals = virial_in_s(series)
    logger.info(
        f"Tracked {len(series)}/{len(items)} snapshots ({mode}); "
        f"max ||eps||={max(eps_l2) if eps_l2 else float('nan'):.3e}"
    )
    return series


def _s_derivative(values: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.gradient(values, s, edge_order=2)


class _LawConstants:
    """Q-dependent inner products shared by the modulation laws on one grid."""

    def __init__(self, grid: Grid):
        x = grid.x
        q = eval_Q(x)
        q_x = eval_Q_x(x)
        consts = cached_constants(grid)
        self.l4 = consts.l4_fourth
        self.mass = consts.mass_sq
        self.grad = consts.grad_sq
        self.lminus_q3 = apply_operator(L_MINUS, Field(grid, q ** 3)).values.real
        self.lminus_qx = apply_operator(L_MINUS, Field(grid, q_x)).values.real
        self.y2q = x ** 2 * q
        self.generator = 0.5 * q + x * q_x
        self.yq_sq = float(integrate(grid, (x * q) ** 2))
        self.grid = grid


def _require_epsilons(series: ModulationSeries) -> None:
    if series.dechirped:
        raise InputError("modulation laws need the plain decomposition; series was dechirped")
    if len(series) < 3:
        raise InputError(f"modulation laws need at least 3 samples, got {len(series)}")
    if len(series.epsilons) != len(series):
        raise InputError("series was tracked without stored epsilons")
    s = np.asarray(series.s_values)
    if np.any(np.diff(s) == 0.0):
        raise InputError("rescaled time must be strictly monotone")


def ode_residuals(series: ModulationSeries) -> List[List[float]]:
    """
    Per-time leading-order residuals [r_lambda, r_gamma, r_x, r_xi] of

        (||Q||_4^4/4) lambda_s/lambda       = -(eps_2, L_- Q^3)
        ||Q||_4^4 (gamma_s + 1 - (x_s/lambda) xi - xi^2) = 0
        (x_s/lambda + 2 xi) ||Q_x||_2^2     = -(eps_2, L_- Q_x)
        (xi_s - (lambda_s/lambda) xi) ||Q||_2^2/2 = 0

    with s-derivatives by second-order differences. In symmetric2 mode the
    translation laws are reported as zero.
    """
    _require_epsilons(series)
    c = _LawConstants(series.epsilons[0].grid)
    s = np.asarray(series.s_values)
    lam = np.array([p.lam for p in series.params])
    gamma = np.asarray(series.gamma_unwrapped)
    x0 = np.array([p.x0 for p in series.params])
    xi = np.array([p.xi for p in series.params])

    log_lam_s = _s_derivative(np.log(lam), s)
    gamma_s = _s_derivative(gamma, s)
    x_s = _s_derivative(x0, s)
    xi_s = _s_derivative(xi, s)

    rows = []
    for j, eps in enumerate(series.epsilons):
        eps_2 = eps.values.imag
        proj_q3 = float(integrate(c.grid, eps_2 * c.lminus_q3))
        proj_qx = float(integrate(c.grid, eps_2 * c.lminus_qx))
        r_lambda = 0.25 * c.l4 * log_lam_s[j] + proj_q3
        r_gamma = c.l4 * (gamma_s[j] + 1.0 - (x_s[j] / lam[j]) * xi[j] - xi[j] ** 2)
        if series.mode == "full4":
            r_x = (x_s[j] / lam[j] + 2.0 * xi[j]) * c.grad + proj_qx
            r_xi = (xi_s[j] - log_lam_s[j] * xi[j]) * 0.5 * c.mass
        else:
            r_x = r_xi = 0.0
        rows.append([float(r_lambda), float(r_gamma), float(r_x), float(r_xi)])
    return rows


def virial_in_s(series: ModulationSeries) -> List[float]:
    """d/ds (eps, y^2 Q) + (lambda_s/lambda) ||yQ||_2^2 + 4 (eps_2, Q/2 + y Q_y) per time."""
    _require_epsilons(series)
    c = _LawConstants(series.epsilons[0].grid)
    s = np.asarray(series.s_values)
    lam = np.array([p.lam for p in series.params])
    moment = np.array([float(integrate(c.grid, eps.values.real * c.y2q)) for eps in series.epsilons])
    moment_s = _s_derivative(moment, s)
    log_lam_s = _s_derivative(np.log(lam), s)
    out = []
    for j, eps in enumerate(series.epsilons):
        coupling = 4.0 * float(integrate(c.grid, eps.values.imag * c.generator))
        out.append(float(moment_s[j] + log_lam_s[j] * c.yq_sq + coupling))
    return out


def weighted_variance_constant(grid: Grid) -> float:
    """||yQ||_2^2 as used inside virial_in_s."""
    return _LawConstants(grid).yq_sq


def lminus_projection_two_ways(eps: Field) -> Tuple[float, float]:
    """(eps_2, L_- Q^3) by operator application and by the assembled matrix."""
    from .linearized_ops import assemble

    grid = eps.grid
    q3 = Field(grid, eval_Q(grid.x) ** 3)
    eps_2 = Field(grid, eps.values.imag)
    via_operator = inner_product(eps_2, apply_operator(L_MINUS, q3))
    via_matrix = inner_product(eps_2, assemble(L_MINUS, grid).matvec(q3))
    return via_operator, via_matrix
