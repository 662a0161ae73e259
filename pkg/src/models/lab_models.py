"""
Data models for the NLS laboratory.
Uses Pydantic for validation and serialization of every record that is not a
sample buffer.
"""

import math
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..config.settings import settings

TWO_PI = 2.0 * math.pi


class ProjectionSpec(BaseModel):
    """A dyadic frequency cutoff (levels in wavenumber units, radians/length)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["low_pass", "band", "high_pass"]
    level: int
    sharpness: Literal["sharp", "smooth"] = "sharp"


class ModulationParams(BaseModel):
    """
    Symmetry coordinates of the action
    u -> e^{i gamma} e^{i x xi} lambda^{1/2} u(lambda x + x0).
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(1.0, gt=0.0, alias="lambda")
    gamma: float = 0.0
    x0: float = 0.0
    xi: float = 0.0

    @field_validator("gamma")
    @classmethod
    def _reduce_phase(cls, value: float) -> float:
        reduced = math.fmod(value, TWO_PI)
        if reduced < 0.0:
            reduced += TWO_PI
        # fmod of a tiny negative can round up to exactly 2 pi
        return 0.0 if reduced >= TWO_PI else reduced

    @classmethod
    def identity(cls) -> "ModulationParams":
        return cls(lam=1.0, gamma=0.0, x0=0.0, xi=0.0)

    def is_identity(self, tol: float = 0.0) -> bool:
        phase = min(self.gamma, TWO_PI - self.gamma)
        return (
            abs(self.lam - 1.0) <= tol
            and phase <= tol
            and abs(self.x0) <= tol
            and abs(self.xi) <= tol
        )

    def as_tuple(self) -> tuple:
        return (self.lam, self.gamma, self.x0, self.xi)


class GroundStateConstants(BaseModel):
    """Functional constants of Q measured by quadrature."""

    model_config = ConfigDict(frozen=True)

    mass_sq: float = Field(..., gt=0.0)
    l4_fourth: float = Field(..., gt=0.0)
    l6_sixth: float = Field(..., gt=0.0)
    grad_sq: float = Field(..., gt=0.0)
    pohozaev_gap: float = 0.0  # |grad_sq - l6_sixth / 3|


class SolverConfig(BaseModel):
    """Split-step integrator settings."""

    dt_init: float = Field(1.25e-4, gt=0.0)
    dt_safety: float = Field(0.05, gt=0.0)
    adaptive: bool = True
    dealias: bool = True
    max_steps: int = Field(1_000_000, gt=0)
    blowup_grad_threshold: float = Field(1e3, gt=0.0)
    # compared against the gradient proxy ||Q_x|| / ||u_x||, not a fitted lambda
    blowup_lambda_floor: float = Field(1e-2, gt=0.0)
    conservation_tol: float = Field(1e-8, gt=0.0)
    output_every: int = Field(1, gt=0)


class ConvergenceReport(BaseModel):
    """Self-convergence measurement of the time integrator."""

    dts: List[float]
    errors: List[float]
    order: Optional[float] = None
    exact_propagator: bool = False


class MorawetzConfig(BaseModel):
    """Weight and cutoff of the Morawetz potential."""

    R: Optional[float] = Field(None, gt=0.0)  # None: a quarter of the box
    eta1: float = Field(default_factory=lambda: settings.MORAWETZ_ETA1, gt=0.0, le=1.0)
    cutoff_level: Optional[int] = None  # k; the projection is P_{<= k + 9}
    psi_profile: Literal["c2_polynomial", "cosine"] = "c2_polynomial"


class DiagnosticSample(BaseModel):
    """Scalar functionals of one field snapshot."""

    t: float
    mass: float
    energy: float
    gn_ratio: float
    variance: float
    morawetz: float
    truncated_energy: Dict[str, float] = {}
    eps_l2: Optional[float] = None


class VarianceSample(BaseModel):
    t: float
    variance: float
    dv_dt: float
    d2v_dt2: float
    momentum_term: float  # 4 Im int x conj(u) u_x
    sixteen_energy: float
    first_residual: float
    second_residual: float
    support_leak: bool = False


class TruncatedEnergyReport(BaseModel):
    """Frequency-truncated energy E(P_{<= k+9} u(t)) along a trajectory."""

    k: int
    times: List[float]
    values: List[float]
    drift: float
    sup_abs: float
    epsilon_integral: Optional[float] = None


class MorawetzSample(BaseModel):
    t: float
    value: float
    derivative: Optional[float] = None
    prediction: Optional[float] = None


class EnergyBreakdown(BaseModel):
    """E(Q + eps) evaluated directly and through its expansion about Q."""

    direct: float
    ground_energy: float
    linear: float
    mass_linear: float
    quadratic_real: float
    quadratic_imag: float
    mass_shift: float
    remainder: float
    decomposed: float
    discrepancy: float
    eps_h1_sq: float


class StabilityPoint(BaseModel):
    amplitude: float
    eps_l2: float
    param_error: float
    lambda_rel_error: float
    newton_iters: int


# ---------------------------------------------------------------------------
# Harness records
# ---------------------------------------------------------------------------


class GridConfig(BaseModel):
    half_length: float = Field(16.0, gt=0.0)
    n_points: int = Field(2048, ge=16)


class SolitonParams(BaseModel):
    """Parameters of the soliton families (lambda, theta, x0, xi0)."""

    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(1.0, gt=0.0, alias="lambda")
    theta: float = 0.0
    x0: float = 0.0
    xi0: float = 0.0


class SolitonData(BaseModel):
    kind: Literal["soliton"] = "soliton"
    params: SolitonParams = SolitonParams()
    t0: float = 0.0


class PseudoconformalData(BaseModel):
    kind: Literal["pseudoconformal"] = "pseudoconformal"
    T: float
    t0: float
    params: SolitonParams = SolitonParams()


class PerturbedSolitonData(BaseModel):
    kind: Literal["perturbed_soliton"] = "perturbed_soliton"
    noise_amp: float = Field(..., ge=0.0)
    seed: Optional[int] = None  # falls back to the scenario rng_seed
    mass_renormalize: bool = False
    admissible: bool = True
    symmetric: bool = False
    max_wavenumber: float = Field(4.0, gt=0.0)
    params: SolitonParams = SolitonParams()


class FileData(BaseModel):
    kind: Literal["file"] = "file"
    path: str


InitialData = Union[SolitonData, PseudoconformalData, PerturbedSolitonData, FileData]


class DiagnosticsConfig(BaseModel):
    enabled: List[
        Literal["mass", "energy", "gn_ratio", "variance", "morawetz", "truncated_energy", "bilinear"]
    ] = ["mass", "energy", "gn_ratio", "variance", "morawetz", "truncated_energy"]
    morawetz: MorawetzConfig = MorawetzConfig()
    truncation_levels: List[int] = [0]
    bilinear_levels: List[int] = []


class ScenarioConfig(BaseModel):
    """A single hand-written simulation scenario."""

    name: str = Field(..., pattern=r"^[A-Za-z0-9_.-]+$")
    initial_data: InitialData = Field(..., discriminator="kind")
    grid: GridConfig = GridConfig()
    solver: SolverConfig = SolverConfig()
    t_final: float
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    modulation_mode: Literal["off", "symmetric2", "full4"] = "full4"
    dechirp: bool = False  # strip the quadratic phase before each decomposition
    rng_seed: int = 0


class RunSummary(BaseModel):
    passes: int = 0
    warnings: int = 0
    statistics: Dict[str, float] = {}
    messages: List[str] = []


class RunManifest(BaseModel):
    """Written last in a run directory; its presence marks the run complete."""

    scenario: Dict[str, Any]
    run_tag: str
    code_version: str
    started: str
    finished: str
    output_files: List[str]
    summary: RunSummary
    halted: Optional[str] = None
    status: Literal["completed", "halted", "numerical_failure"] = "completed"
    environment: Dict[str, Any] = {}
    run_dir: Optional[str] = None


class IdentityCheck(BaseModel):
    """One measured identity against its oracle."""

    name: str
    n_points: int
    measured: float
    expected: float
    error: float
    tolerance: float
    status: Literal["pass", "degraded", "fail"]
    oracle: str


class IdentityReport(BaseModel):
    resolutions: List[int]
    half_length: float
    checks: List[IdentityCheck]

    @property
    def all_passed(self) -> bool:
        return all(check.status == "pass" for check in self.checks)

    def failures(self) -> List[IdentityCheck]:
        return [check for check in self.checks if check.status != "pass"]


class BatchFailure(BaseModel):
    name: str
    error: str


class BatchSummary(BaseModel):
    manifests: List[RunManifest] = []
    failures: List[BatchFailure] = []

    @property
    def ok(self) -> bool:
        return not self.failures
