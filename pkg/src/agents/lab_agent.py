"""
Laboratory agent that orchestrates scenario runs.
Handles initial data, evolution, modulation tracking, diagnostics, persistence
of run directories, the static identity suite and concurrent batches.
"""

import asyncio
import hashlib
import json
import logging
import math
import os
import platform
import subprocess
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import psutil
import pytz
import scipy

from ..components import diagnostics
from ..components.evolution import HALT_NUMERICAL, StepResult, evolve
from ..components.ground_state import cached_constants, ground_state, ground_state_x, ode_residual
from ..components.linearized_ops import (
    L_MINUS,
    L_PLUS,
    alignment,
    apply_operator,
    assemble,
    low_spectrum,
    low_spectrum_matrix_free,
)
from ..components.modulation import ModulationSeries, jacobian_at_identity, track
from ..components.spectral_core import Grid, lp_norm
from ..components.symmetries import pseudoconformal_soliton, soliton
from ..config.logging_config import attach_run_log, detach_run_log
from ..config.settings import settings
from ..models.errors import ScenarioValidationError
from ..models.lab_models import (
    BatchFailure,
    BatchSummary,
    IdentityCheck,
    IdentityReport,
    ModulationParams,
    RunManifest,
    RunSummary,
    ScenarioConfig,
)
from ..templates.plot_script import render_plot_script
from ..utils import series_io
from ..utils.field_io import load_field, save_field
from ..utils.perturbations import perturbed_soliton
from ..utils.scenario_loader import build_grid, validate_scenario

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
EVENTS_NAME = "events.jsonl"
REPORT_NAME = "report.json"

_SQRT3 = math.sqrt(3.0)

# Closed-form values of the ground-state constants
GROUND_STATE_ORACLES = {
    "mass_sq": _SQRT3 * math.pi / 2.0,
    "l4_fourth": 3.0,
    "l6_sixth": 3.0 * _SQRT3 * math.pi / 4.0,
    "grad_sq": _SQRT3 * math.pi / 4.0,
}


def utc_now() -> str:
    return datetime.now(pytz.utc).isoformat()


def code_version() -> str:
    """Git commit of the working tree, or the release tag outside a checkout."""
    try:
        commit = subprocess.check_output(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            stderr=subprocess.DEVNULL,
        )
        return commit.decode().strip()
    except Exception:
        return settings.APP_VERSION


def environment_info() -> Dict[str, Any]:
    process = psutil.Process()
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "cpu_count": psutil.cpu_count(logical=True),
        "rss_bytes": process.memory_info().rss,
        "timezone": str(pytz.utc),
    }


def config_digest(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(cfg.model_dump_json(by_alias=True).encode("utf-8")).hexdigest()


def write_manifest(run_dir: Path, manifest: RunManifest) -> Path:
    """Write the manifest through a temporary file so it appears atomically."""
    target = run_dir / MANIFEST_NAME
    tmp = run_dir / f".{MANIFEST_NAME}.tmp"
    tmp.write_text(manifest.model_dump_json(indent=2, by_alias=True), encoding="utf-8")
    os.replace(tmp, target)
    return target


def _grade(error: float, tolerance: float) -> str:
    if error <= tolerance:
        return "pass"
    if error <= settings.IDENTITY_DEGRADED_FACTOR * tolerance:
        return "degraded"
    return "fail"


def _max_abs(values) -> Optional[float]:
    finite = [abs(v) for v in values if v is not None and math.isfinite(v)]
    return max(finite) if finite else None


class LabAgent:
    """Main agent that runs scenarios and the identity suite."""

    def __init__(self, output_root: Optional[Union[str, Path]] = None):
        """Initialize the agent; the output root defaults to NLS_LAB_OUTPUT_ROOT."""
        self._output_root = Path(output_root) if output_root is not None else None

    @property
    def output_root(self) -> Path:
        root = self._output_root if self._output_root is not None else settings.output_root()
        root.mkdir(parents=True, exist_ok=True)
        return root

    # ------------------------------------------------------------------
    # Scenario runs
    # ------------------------------------------------------------------

    def run_scenario(self, cfg: Union[ScenarioConfig, Dict[str, Any]]) -> RunManifest:
        """
        Run one scenario end to end:
        1. Build the initial field
        2. Evolve it, halting on blowup criteria
        3. Track modulation parameters (unless disabled)
        4. Evaluate the enabled diagnostics
        5. Write CSV series, the JSON report and the final field
        6. Write the manifest last

        Raises:
            ScenarioValidationError: when a raw mapping does not validate
        """
        if not isinstance(cfg, ScenarioConfig):
            cfg = validate_scenario(cfg)

        started = utc_now()
        run_dir = self._make_run_dir(cfg)
        handler = attach_run_log(run_dir / EVENTS_NAME)
        try:
            logger.info(f"Starting scenario '{cfg.name}' in {run_dir}")

            grid = build_grid(cfg)
            u0, t0 = self._initial_field(cfg, grid)
            results = evolve(u0, cfg.t_final, cfg.solver, t0=t0)
            halted = results[-1].halted

            series = None
            if cfg.modulation_mode != "off":
                series = self._track_modulation(results, cfg)

            report = self._evaluate_diagnostics(results, series, cfg)
            summary = self._summarize(results, series, report, cfg)

            output_files = self._write_series(run_dir, results, series, report, cfg)
            output_files.append(self._write_report(run_dir, report, summary).name)
            save_field(run_dir / "final_field.nlsf", results[-1].field)
            output_files.append("final_field.nlsf")
            output_files.append(EVENTS_NAME)

            status = "completed"
            if halted == HALT_NUMERICAL:
                status = "numerical_failure"
            elif halted:
                status = "halted"

            manifest = RunManifest(
                scenario=cfg.model_dump(mode="json", by_alias=True),
                run_tag=run_dir.name,
                code_version=code_version(),
                started=started,
                finished=utc_now(),
                output_files=sorted(output_files),
                summary=summary,
                halted=halted,
                status=status,
                environment=environment_info(),
                run_dir=str(run_dir),
            )
            write_manifest(run_dir, manifest)
            logger.info(
                f"Finished scenario '{cfg.name}' ({status}): "
                f"{summary.passes} checks passed, {summary.warnings} warnings"
            )
            return manifest

        except Exception as e:
            logger.error(f"Error running scenario '{cfg.name}': {e}")
            raise
        finally:
            detach_run_log(handler)

    def _make_run_dir(self, cfg: ScenarioConfig) -> Path:
        """<name>-<UTC timestamp>-<config hash>, with a numeric suffix on collision."""
        stamp = datetime.now(pytz.utc).strftime("%Y%m%dT%H%M%S")
        base = f"{cfg.name}-{stamp}-{config_digest(cfg)[:8]}"
        root = self.output_root
        candidate = root / base
        suffix = 0
        while True:
            try:
                candidate.mkdir(parents=True, exist_ok=False)
                return candidate
            except FileExistsError:
                suffix += 1
                candidate = root / f"{base}-{suffix}"

    def _initial_field(self, cfg: ScenarioConfig, grid: Grid):
        data = cfg.initial_data
        if data.kind == "soliton":
            p = data.params
            return soliton(data.t0, p.lam, p.theta, p.x0, p.xi0, grid), data.t0
        if data.kind == "pseudoconformal":
            p = data.params
            return pseudoconformal_soliton(data.t0, data.T, p.lam, p.theta, p.x0, p.xi0, grid), data.t0
        if data.kind == "perturbed_soliton":
            p = data.params
            seed = data.seed if data.seed is not None else cfg.rng_seed
            rng = np.random.default_rng(seed)
            orbit = ModulationParams(lam=p.lam, gamma=-p.theta, x0=p.x0, xi=p.xi0)
            u0 = perturbed_soliton(
                grid,
                rng,
                data.noise_amp,
                orbit=orbit,
                admissible=data.admissible,
                renormalize_mass=data.mass_renormalize,
                symmetric=data.symmetric,
                max_wavenumber=data.max_wavenumber,
            )
            return u0, 0.0

        field = load_field(data.path)
        if field.grid != grid:
            raise ScenarioValidationError(
                [f"initial_data.path: field file grid {field.grid!r} differs from the scenario grid {grid!r}"]
            )
        return field, 0.0

    def _track_modulation(self, results: List[StepResult], cfg: ScenarioConfig) -> ModulationSeries:
        try:
            return track(results, cfg.modulation_mode, dechirp=cfg.dechirp)
        except Exception as e:
            logger.error(f"Error tracking modulation parameters: {e}")
            return ModulationSeries(
                mode=cfg.modulation_mode,
                times=[],
                s_values=[],
                params=[],
                gamma_unwrapped=[],
                eps_l2=[],
                newton_iters=[],
                halted=f"tracking error: {e}",
            )

    def _evaluate_diagnostics(
        self, results: List[StepResult], series: Optional[ModulationSeries], cfg: ScenarioConfig
    ) -> Dict[str, Any]:
        """Per-time samples plus the trajectory-level diagnostics that are enabled."""
        enabled = set(cfg.diagnostics.enabled)
        levels = cfg.diagnostics.truncation_levels if "truncated_energy" in enabled else []
        eps_by_time = {}
        if series is not None:
            eps_by_time = dict(zip(series.times, series.eps_l2))

        samples = [
            diagnostics.diagnostic_sample(
                r.field,
                r.t,
                morawetz_cfg=cfg.diagnostics.morawetz,
                truncation_levels=levels,
                eps_l2=eps_by_time.get(r.t),
            )
            for r in results
        ]
        report: Dict[str, Any] = {"samples": samples, "truncation_levels": list(levels)}

        if "variance" in enabled and len(results) >= 3:
            report["variance"] = diagnostics.variance_and_virial(results)
        if "morawetz" in enabled:
            report["morawetz"] = diagnostics.morawetz_series(results, cfg.diagnostics.morawetz, series)
        if levels:
            report["truncated_energy"] = [
                diagnostics.truncated_energy_drift(results, k, series) for k in levels
            ]
        if "bilinear" in enabled:
            final = results[-1].field
            report["bilinear"] = {
                str(i): diagnostics.bilinear_interaction(final, i) for i in cfg.diagnostics.bilinear_levels
            }
        return report

    def _summarize(
        self,
        results: List[StepResult],
        series: Optional[ModulationSeries],
        report: Dict[str, Any],
        cfg: ScenarioConfig,
    ) -> RunSummary:
        summary = RunSummary()
        stats = summary.statistics

        def put(key: str, value: Optional[float]) -> None:
            # the manifest only carries finite statistics
            if value is not None and math.isfinite(value):
                stats[key] = float(value)

        def check(ok: bool, message: str) -> None:
            if ok:
                summary.passes += 1
            else:
                summary.warnings += 1
                summary.messages.append(message)

        final = results[-1]
        stats["final_t"] = final.t
        stats["steps"] = float(final.step)
        mass_drift = max(r.mass_drift for r in results)
        energy_drift = max(r.energy_drift for r in results)
        put("max_mass_drift", mass_drift)
        put("max_energy_drift", energy_drift)
        put("final_lambda_proxy", final.lambda_proxy)

        # NaN drifts fail both comparisons
        check(
            mass_drift <= cfg.solver.conservation_tol,
            f"mass drift {mass_drift:.3e} above {cfg.solver.conservation_tol:.1e}",
        )
        check(
            energy_drift <= settings.ENERGY_DRIFT_WARN,
            f"energy drift {energy_drift:.3e} above {settings.ENERGY_DRIFT_WARN:.1e}",
        )
        check(final.halted is None, f"evolution halted: {final.halted} at t={final.t:g}")

        if series is not None:
            stats["tracked_samples"] = float(len(series))
            put("max_eps_l2", _max_abs(series.eps_l2))
            for j, name in enumerate(("r_lambda", "r_gamma", "r_x", "r_xi")):
                put(f"max_abs_{name}", _max_abs([row[j] for row in series.ode_residuals]))
            put("max_abs_virial_residual", _max_abs(series.virial_residuals))
            if len(series):
                put("epsilon_integral", diagnostics.epsilon_integral(series))
            check(series.halted is None, f"modulation tracking stopped: {series.halted}")

        if "variance" in report:
            samples = report["variance"]
            scale = max(abs(s.sixteen_energy) for s in samples) or 1.0
            interior = samples[1:-1] or samples
            put("max_virial_rel_residual", max(s.second_residual for s in interior) / scale)
            check(
                not any(s.support_leak for s in samples),
                "field reaches the outer quarter of the box; variance identities unreliable",
            )
        for item in report.get("truncated_energy", []):
            put(f"truncated_energy_drift_{item.k}", item.drift)
        for level, value in report.get("bilinear", {}).items():
            put(f"bilinear_{level}", value)

        if final.warning:
            summary.messages.append(final.warning)
        return summary

    def _write_series(
        self,
        run_dir: Path,
        results: List[StepResult],
        series: Optional[ModulationSeries],
        report: Dict[str, Any],
        cfg: ScenarioConfig,
    ) -> List[str]:
        metadata = {
            "scenario": cfg.name,
            "half_length": repr(cfg.grid.half_length),
            "n_points": cfg.grid.n_points,
            "dt_init": repr(cfg.solver.dt_init),
            "dt_safety": repr(cfg.solver.dt_safety),
            "adaptive": cfg.solver.adaptive,
            "dealias": cfg.solver.dealias,
            "rng_seed": cfg.rng_seed,
            "config_sha256": config_digest(cfg),
        }
        files = []
        series_io.write_series_csv(
            run_dir / "trajectory.csv",
            "trajectory",
            series_io.TRAJECTORY_COLUMNS,
            series_io.trajectory_rows(results),
            metadata,
        )
        files.append("trajectory.csv")

        if series is not None:
            series_io.write_series_csv(
                run_dir / "modulation.csv",
                "modulation",
                series_io.MODULATION_COLUMNS,
                series_io.modulation_rows(series),
                {**metadata, "mode": series.mode, "dechirped": str(series.dechirped).lower()},
            )
            files.append("modulation.csv")

        levels = report["truncation_levels"]
        series_io.write_series_csv(
            run_dir / "diagnostics.csv",
            "diagnostics",
            series_io.diagnostic_columns(levels),
            series_io.diagnostic_rows(report["samples"], levels),
            metadata,
        )
        files.append("diagnostics.csv")

        script = run_dir / "plot_series.py"
        script.write_text(render_plot_script(run_dir.name, files), encoding="utf-8")
        files.append(script.name)
        return files

    def _write_report(self, run_dir: Path, report: Dict[str, Any], summary: RunSummary) -> Path:
        payload = {
            "summary": summary.model_dump(),
            "variance": [s.model_dump() for s in report.get("variance", [])],
            "morawetz": [s.model_dump() for s in report.get("morawetz", [])],
            "truncated_energy": [s.model_dump() for s in report.get("truncated_energy", [])],
            "bilinear": report.get("bilinear", {}),
        }
        path = run_dir / REPORT_NAME
        path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        return path

    # ------------------------------------------------------------------
    # Static identity suite
    # ------------------------------------------------------------------

    def check_identities(
        self,
        resolutions: Optional[Sequence[int]] = None,
        half_length: Optional[float] = None,
    ) -> IdentityReport:
        """
        Evaluate every static identity at each resolution.

        Each check passes when its error is within tolerance, is degraded when
        within IDENTITY_DEGRADED_FACTOR times the tolerance, and fails otherwise.
        """
        resolutions = list(resolutions or settings.IDENTITY_RESOLUTIONS)
        half_length = half_length or settings.IDENTITY_HALF_LENGTH
        checks: List[IdentityCheck] = []
        for n in resolutions:
            grid = Grid(half_length, n)
            try:
                checks.extend(self._identity_checks(grid))
            except Exception as e:
                logger.error(f"Error evaluating identities on {grid!r}: {e}")
                checks.append(
                    IdentityCheck(
                        name="suite_error",
                        n_points=n,
                        measured=math.nan,
                        expected=0.0,
                        error=math.inf,
                        tolerance=0.0,
                        status="fail",
                        oracle=f"exception: {e}",
                    )
                )

        report = IdentityReport(resolutions=resolutions, half_length=half_length, checks=checks)
        failed = report.failures()
        if failed:
            logger.warning(f"{len(failed)} of {len(checks)} identity checks did not pass")
        else:
            logger.info(f"All {len(checks)} identity checks passed")
        return report

    def _identity_checks(self, grid: Grid) -> List[IdentityCheck]:
        n = grid.n_points
        checks = []

        def add(name, measured, expected, tolerance, oracle, relative=False):
            error = abs(measured - expected)
            if relative and expected != 0:
                error /= abs(expected)
            checks.append(
                IdentityCheck(
                    name=name,
                    n_points=n,
                    measured=float(measured),
                    expected=float(expected),
                    error=float(error),
                    tolerance=tolerance,
                    status=_grade(error, tolerance),
                    oracle=oracle,
                )
            )

        q = ground_state(grid)
        q_x = ground_state_x(grid)
        consts = cached_constants(grid)

        add("ground_state_ode", ode_residual(grid), 0.0, 1e-9, "closed form: Q_xx + Q^5 - Q = 0")
        add("pohozaev_energy", diagnostics.energy(q), 0.0, 1e-9, "closed form: E(Q) = 0")
        add("pohozaev_relation", consts.grad_sq - consts.l6_sixth / 3.0, 0.0, 1e-9,
            "closed form: ||Q_x||^2 = ||Q||_6^6 / 3")
        for key, expected in GROUND_STATE_ORACLES.items():
            add(key, getattr(consts, key), expected, 1e-8, "closed-form integral of sech powers", relative=True)
        add("gn_ratio", diagnostics.gn_ratio(q), 1.0, 1e-9, "sharp Gagliardo-Nirenberg equality at Q")

        if n <= settings.DENSE_ASSEMBLY_LIMIT:
            spectrum = low_spectrum(assemble(L_PLUS, grid), count=2)
        else:
            spectrum = low_spectrum_matrix_free(L_PLUS, grid, count=2)
        q3 = q * np.abs(q.values) ** 2
        add("L_lowest_eigenvalue", spectrum.eigenvalues[0], -8.0, 1e-6, "Poschl-Teller well: -8")
        add("L_ground_alignment_Q3", alignment(spectrum.eigenvectors[0], q3), 1.0, 1e-8,
            "ground state of L is proportional to Q^3")
        add("L_kernel_Qx", lp_norm(apply_operator(L_PLUS, q_x), 2), 0.0, 1e-9, "L Q_x = 0")
        add("Lminus_kernel_Q", lp_norm(apply_operator(L_MINUS, q), 2), 0.0, 1e-9, "L_- Q = 0")

        jac = jacobian_at_identity("full4", grid)
        add("jacobian_lambda_Q3", jac[0, 0], GROUND_STATE_ORACLES["l4_fourth"] / 4.0, 1e-9,
            "||Q||_4^4 / 4")
        add("jacobian_gamma_iQ3", jac[1, 1], GROUND_STATE_ORACLES["l4_fourth"], 1e-9, "||Q||_4^4")
        add("jacobian_x_Qx", jac[2, 2], GROUND_STATE_ORACLES["grad_sq"], 1e-9, "||Q_x||_2^2")
        add("jacobian_xi_iQx", jac[3, 3], -GROUND_STATE_ORACLES["mass_sq"] / 2.0, 1e-9, "-||Q||_2^2 / 2")
        return checks

    # ------------------------------------------------------------------
    # Batches
    # ------------------------------------------------------------------

    async def run_batch(
        self, configs: Sequence[Union[ScenarioConfig, Dict[str, Any]]], parallelism: int = 1
    ) -> BatchSummary:
        """
        Run scenarios concurrently in worker processes.

        A failing run is logged and listed in the summary; the others continue.
        """
        summary = BatchSummary()
        if not configs:
            logger.info("Empty batch, nothing to run")
            return summary

        parallelism = max(1, int(parallelism))
        semaphore = asyncio.Semaphore(parallelism)
        loop = asyncio.get_running_loop()
        root = str(self.output_root)

        def name_of(cfg) -> str:
            if isinstance(cfg, ScenarioConfig):
                return cfg.name
            return str(cfg.get("name", "<unnamed>"))

        with ProcessPoolExecutor(max_workers=parallelism) as pool:

            async def run_one(cfg):
                payload = cfg.model_dump(by_alias=True) if isinstance(cfg, ScenarioConfig) else cfg
                async with semaphore:
                    try:
                        data = await loop.run_in_executor(pool, _run_scenario_worker, payload, root)
                        return RunManifest.model_validate(data)
                    except Exception as e:
                        logger.error(f"Error in batch run '{name_of(cfg)}': {e}")
                        return BatchFailure(name=name_of(cfg), error=str(e))

            outcomes = await asyncio.gather(*(run_one(cfg) for cfg in configs))

        for outcome in outcomes:
            if isinstance(outcome, BatchFailure):
                summary.failures.append(outcome)
            else:
                summary.manifests.append(outcome)
        logger.info(
            f"Batch finished: {len(summary.manifests)} completed, {len(summary.failures)} failed"
        )
        return summary

    def batch(
        self, configs: Sequence[Union[ScenarioConfig, Dict[str, Any]]], parallelism: int = 1
    ) -> BatchSummary:
        return asyncio.run(self.run_batch(configs, parallelism))


def _run_scenario_worker(payload: Dict[str, Any], output_root: str) -> Dict[str, Any]:
    """Process-pool entry point; returns the manifest as plain data."""
    agent = LabAgent(output_root=output_root)
    return agent.run_scenario(payload).model_dump(mode="json", by_alias=True)


# Global instance
lab_agent = LabAgent()
