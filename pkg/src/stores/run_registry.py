"""
Flat-directory registry of run outputs.
Handles listing completed runs, loading manifests, regression comparison
against earlier runs of the same scenario, and pruning interrupted runs.
"""

import logging
import shutil
from datetime import timedelta
from pathlib import Path
from typing import Dict, List, Optional, Union

from dateutil import parser as date_parser
from pydantic import ValidationError

from ..config.settings import settings
from ..models.errors import InputError
from ..models.lab_models import RunManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunRegistry:
    """Read-only view of a run output root, plus pruning of incomplete runs."""

    def __init__(self, root: Optional[Union[str, Path]] = None):
        """Initialize the registry; the root defaults to NLS_LAB_OUTPUT_ROOT."""
        self._root = Path(root) if root is not None else None

    @property
    def root(self) -> Path:
        return self._root if self._root is not None else settings.output_root()

    def _run_dirs(self) -> List[Path]:
        if not self.root.is_dir():
            return []
        return sorted(p for p in self.root.iterdir() if p.is_dir())

    def load(self, run_dir: Union[str, Path]) -> RunManifest:
        """Load the manifest of one run directory."""
        run_dir = Path(run_dir)
        path = run_dir / MANIFEST_NAME
        if not path.exists():
            raise InputError(f"{run_dir} has no manifest; the run is incomplete")
        try:
            manifest = RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise InputError(f"{path} is not a valid run manifest: {e}") from e
        manifest.run_dir = str(run_dir)
        return manifest

    def list_runs(self, scenario: Optional[str] = None) -> List[RunManifest]:
        """Completed runs, oldest first."""
        manifests = []
        for run_dir in self._run_dirs():
            if not (run_dir / MANIFEST_NAME).exists():
                continue
            try:
                manifest = self.load(run_dir)
            except InputError as e:
                logger.warning(f"Skipping unreadable run {run_dir.name}: {e}")
                continue
            if scenario is None or manifest.scenario.get("name") == scenario:
                manifests.append(manifest)
        manifests.sort(key=lambda m: (date_parser.isoparse(m.started), m.run_tag))
        return manifests

    def latest(self, scenario: str, before: Optional[RunManifest] = None) -> Optional[RunManifest]:
        """Most recent completed run of a scenario, optionally strictly earlier than `before`."""
        runs = self.list_runs(scenario)
        if before is not None:
            cutoff = date_parser.isoparse(before.started)
            runs = [
                m for m in runs
                if m.run_tag != before.run_tag and date_parser.isoparse(m.started) <= cutoff
            ]
        return runs[-1] if runs else None

    @staticmethod
    def duration(manifest: RunManifest) -> timedelta:
        return date_parser.isoparse(manifest.finished) - date_parser.isoparse(manifest.started)

    @staticmethod
    def compare(current: RunManifest, baseline: RunManifest) -> Dict[str, Dict[str, float]]:
        """Per-statistic values of both runs with their relative change."""
        comparison = {}
        shared = set(current.summary.statistics) & set(baseline.summary.statistics)
        for key in sorted(shared):
            now = current.summary.statistics[key]
            before = baseline.summary.statistics[key]
            scale = max(abs(before), 1e-300)
            comparison[key] = {
                "current": now,
                "baseline": before,
                "relative_change": (now - before) / scale,
            }
        return comparison

    def incomplete_runs(self) -> List[Path]:
        return [p for p in self._run_dirs() if not (p / MANIFEST_NAME).exists()]

    def prune_incomplete(self) -> List[Path]:
        """Delete run directories without a manifest; they hold no finished results."""
        removed = []
        for run_dir in self.incomplete_runs():
            try:
                shutil.rmtree(run_dir)
                removed.append(run_dir)
                logger.info(f"Pruned incomplete run {run_dir.name}")
            except OSError as e:
                logger.error(f"Error pruning {run_dir}: {e}")
        return removed


# Global instance
run_registry = RunRegistry()
