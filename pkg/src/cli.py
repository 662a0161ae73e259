"""
Command-line entry point for the NLS laboratory.

Usage (from repo root):
  python -m src.cli check-identities [--resolutions 1024 2048]
  python -m src.cli simulate scenarios/soliton.yaml
  python -m src.cli fit final_field.nlsf --mode full4
  python -m src.cli spectrum L --n-points 1024
  python -m src.cli batch scenarios/ --parallelism 4
  python -m src.cli report runs/<run-tag>

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 identity-suite failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .agents.lab_agent import LabAgent
from .components.linearized_ops import assemble, low_spectrum, low_spectrum_matrix_free, resolve_operator
from .components.modulation import decompose
from .components.spectral_core import Grid
from .config.logging_config import configure_logging
from .config.settings import settings
from .models.errors import BasinError, InputError, LabError, NumericalFailure, ScenarioValidationError
from .stores.run_registry import RunRegistry
from .utils.field_io import load_field
from .utils.scenario_loader import discover_scenarios, load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IDENTITIES = 3


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def cmd_check_identities(args, agent: LabAgent) -> int:
    report = agent.check_identities(args.resolutions, args.half_length)
    _emit(report.model_dump())
    return EXIT_OK if report.all_passed else EXIT_IDENTITIES


def cmd_simulate(args, agent: LabAgent) -> int:
    cfg = load_scenario(args.config)
    manifest = agent.run_scenario(cfg)
    _emit(manifest.model_dump(by_alias=True))
    return EXIT_NUMERICAL if manifest.status == "numerical_failure" else EXIT_OK


def cmd_fit(args, agent: LabAgent) -> int:
    field = load_field(args.field_file)
    result = decompose(field, args.mode, jacobian=args.jacobian)
    _emit(
        {
            "params": result.params.model_dump(by_alias=True),
            "orbit_params": result.orbit_params.model_dump(by_alias=True),
            "eps_l2": result.eps_l2,
            "ortho_residuals": result.ortho_residuals,
            "newton_iters": result.newton_iters,
            "mode": result.mode,
        }
    )
    return EXIT_OK


def cmd_spectrum(args, agent: LabAgent) -> int:
    which = resolve_operator(args.operator)
    grid = Grid(args.half_length, args.n_points)
    if grid.n_points <= settings.DENSE_ASSEMBLY_LIMIT:
        spectrum = low_spectrum(assemble(which, grid), args.count)
    else:
        spectrum = low_spectrum_matrix_free(which, grid, args.count)
    _emit({**spectrum.as_report(), "half_length": grid.half_length, "n_points": grid.n_points})
    return EXIT_OK


def cmd_batch(args, agent: LabAgent) -> int:
    paths = discover_scenarios(args.directory)
    configs, invalid = [], []
    for path in paths:
        try:
            configs.append(load_scenario(path))
        except (ScenarioValidationError, InputError) as e:
            logger.error(f"Skipping {path.name}: {e}")
            invalid.append({"name": path.stem, "error": str(e)})

    summary = agent.batch(configs, args.parallelism)
    payload = summary.model_dump(by_alias=True)
    payload["failures"].extend(invalid)
    _emit(payload)
    if invalid:
        return EXIT_VALIDATION
    if summary.failures or any(m.status == "numerical_failure" for m in summary.manifests):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_report(args, agent: LabAgent) -> int:
    registry = RunRegistry(args.root)
    manifest = registry.load(args.run_dir)
    payload = {
        "run_tag": manifest.run_tag,
        "status": manifest.status,
        "halted": manifest.halted,
        "duration_seconds": registry.duration(manifest).total_seconds(),
        "summary": manifest.summary.model_dump(),
    }
    name = manifest.scenario.get("name")
    baseline = registry.latest(name, before=manifest) if name else None
    if baseline is not None:
        payload["baseline"] = baseline.run_tag
        payload["comparison"] = registry.compare(manifest, baseline)
    _emit(payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nls-lab", description="1D quintic NLS numerical laboratory")
    parser.add_argument("--log-level", default=None, help="override LOG_LEVEL")
    parser.add_argument("--output-root", default=None, help="override NLS_LAB_OUTPUT_ROOT")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-identities", help="run the static identity suite")
    p.add_argument("--resolutions", type=int, nargs="+", default=None)
    p.add_argument("--half-length", type=float, default=None)
    p.set_defaults(handler=cmd_check_identities)

    p = sub.add_parser("simulate", help="run one scenario config")
    p.add_argument("config")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("fit", help="decompose a stored field")
    p.add_argument("field_file")
    p.add_argument("--mode", choices=["symmetric2", "full4"], default="full4")
    p.add_argument("--jacobian", choices=["refresh", "analytic"], default="refresh")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("spectrum", help="lowest eigenvalues of L or L_minus")
    p.add_argument("operator", choices=["L", "Lminus"])
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--half-length", type=float, default=settings.DEFAULT_HALF_LENGTH)
    p.add_argument("--n-points", type=int, default=1024)
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("batch", help="run every scenario config in a directory")
    p.add_argument("directory")
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(handler=cmd_batch)

    p = sub.add_parser("report", help="summarize a run and compare it with the previous one")
    p.add_argument("run_dir")
    p.add_argument("--root", default=None, help="registry root (defaults to the run's parent)")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    if getattr(args, "root", "unset") is None:
        args.root = Path(args.run_dir).resolve().parent
    agent = LabAgent(output_root=args.output_root)

    try:
        return args.handler(args, agent)
    except (ScenarioValidationError, InputError) as e:
        logger.error(f"Validation error: {e}")
        return EXIT_VALIDATION
    except (BasinError, NumericalFailure) as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except LabError as e:
        logger.error(f"Error: {e}")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
