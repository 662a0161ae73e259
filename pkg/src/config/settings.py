"""
Configuration settings for the NLS laboratory.
Manages environment variables and numerical defaults.
"""

import os
from pathlib import Path
from typing import Tuple
from dotenv import load_dotenv

# Load environment variables from .env file (for local development)
load_dotenv()


class Settings:
    """Application settings and configuration."""

    # Output location; the only environment override the harness reads
    OUTPUT_ROOT: str = os.getenv("NLS_LAB_OUTPUT_ROOT", "runs")

    # Application Settings
    DEBUG: bool = os.getenv("DEBUG", "false").lower() == "true"
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Grid defaults: the box [-L, L) stands in for the real line
    DEFAULT_HALF_LENGTH: float = 16.0
    DEFAULT_N_POINTS: int = 2048
    MIN_N_POINTS: int = 16

    # Modulation solver
    NEWTON_TOL: float = 1e-11
    NEWTON_MAX_ITER: int = 50
    NEWTON_FD_STEP: float = 1e-6

    # Resampling window for the scaling action
    MIN_RESAMPLE_SCALE: float = 1.0 / 8.0
    MAX_RESAMPLE_SCALE: float = 8.0

    # Pseudoconformal support check
    SUPPORT_TOL: float = 1e-12

    # Linearized operators
    DENSE_ASSEMBLY_LIMIT: int = 4096

    # Release tag recorded in manifests when git metadata is unavailable
    APP_VERSION: str = "1.0.0"

    # Run summaries flag energy drift above this as a warning
    ENERGY_DRIFT_WARN: float = 1e-6

    # File formats
    CSV_SCHEMA_VERSION: int = 1
    FIELD_FORMAT_VERSION: int = 1

    # Static identity suite
    IDENTITY_RESOLUTIONS: Tuple[int, ...] = (1024, 2048)
    IDENTITY_DEGRADED_FACTOR: float = 1e6
    # Q ~ e^{-|x|}; pointwise derivative identities need Q(L) below roundoff
    IDENTITY_HALF_LENGTH: float = 40.0

    # Morawetz defaults (R = L/4, eta1 = 1/2)
    MORAWETZ_ETA1: float = 0.5

    @classmethod
    def output_root(cls) -> Path:
        """Resolve the output root directory."""
        return Path(os.getenv("NLS_LAB_OUTPUT_ROOT", cls.OUTPUT_ROOT)).expanduser()

    @classmethod
    def validate_output_root(cls) -> Path:
        """Make sure the output root exists and is writable."""
        root = cls.output_root()
        try:
            root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ValueError(f"Output root {root} cannot be created: {e}") from e

        if not os.access(root, os.W_OK):
            raise ValueError(f"Output root {root} is not writable")
        return root


# Initialize settings instance
settings = Settings()
