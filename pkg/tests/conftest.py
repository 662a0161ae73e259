import numpy as np
import pytest

from src.components.spectral_core import Grid
from src.config.settings import settings


@pytest.fixture
def grid():
    """Default box for quadrature identities."""
    return Grid(16.0, 2048)


@pytest.fixture
def wide_grid():
    """Box on which Q(L) is below roundoff, for pointwise derivative identities."""
    return Grid(settings.IDENTITY_HALF_LENGTH, 2048)


@pytest.fixture
def tracking_grid():
    """Box for modulation runs; pi/L multiples of xi keep e^{ix xi} periodic."""
    return Grid(24.0, 1024)


@pytest.fixture
def small_grid():
    """Grid small enough for dense eigen-solves in a few hundred milliseconds."""
    return Grid(16.0, 512)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    root = tmp_path / "runs"
    monkeypatch.setenv("NLS_LAB_OUTPUT_ROOT", str(root))
    return root
