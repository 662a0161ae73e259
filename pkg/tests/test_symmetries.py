import numpy as np
import numpy.testing as npt
import pytest

from src.components.diagnostics import mass
from src.components.ground_state import eval_Q, ground_state
from src.components.spectral_core import Field, Grid, lp_norm
from src.components.symmetries import (
    apply,
    apply_closed_form,
    boost,
    compose,
    galilean,
    invert,
    pseudoconformal_conjugate,
    pseudoconformal_soliton,
    scale,
    soliton,
    support_leak,
)
from src.models.errors import LabDomainError, ScaleRangeError
from src.models.lab_models import ModulationParams

A = ModulationParams(lam=1.2, gamma=0.3, x0=0.5, xi=0.4)
B = ModulationParams(lam=0.9, gamma=-1.0, x0=-0.3, xi=0.2)


@pytest.fixture
def bump():
    grid = Grid(16.0, 1024)
    return Field.from_function(grid, lambda x: np.exp(-x ** 2) * (1.0 + 0.5j * np.sin(x)))


def test_identity_action_is_exact(bump):
    npt.assert_allclose(apply(ModulationParams.identity(), bump).values, bump.values, atol=1e-14)


def test_apply_matches_closed_form(wide_grid):
    grid = wide_grid
    q = ground_state(grid)
    p = ModulationParams(lam=0.8, gamma=2.0, x0=-0.7, xi=0.5)
    npt.assert_allclose(apply(p, q).values, apply_closed_form(p, eval_Q, grid).values, atol=1e-10)


def test_compose_is_the_group_law(bump):
    npt.assert_allclose(apply(compose(A, B), bump).values, apply(A, apply(B, bump)).values, atol=1e-10)


def test_invert_is_a_two_sided_inverse():
    for p in (A, B, ModulationParams(lam=2.5, gamma=6.0, x0=3.0, xi=-1.5)):
        assert compose(p, invert(p)).is_identity(1e-12)
        assert compose(invert(p), p).is_identity(1e-12)


def test_inverse_undoes_the_action(bump):
    back = apply(invert(A), apply(A, bump))
    npt.assert_allclose(back.values, bump.values, atol=1e-10)


def test_action_preserves_mass(bump):
    for p in (A, B):
        npt.assert_allclose(mass(apply(p, bump)), mass(bump), rtol=1e-12)


def test_scale_outside_the_window_is_rejected(bump):
    with pytest.raises(ScaleRangeError):
        scale(bump, 10.0)
    with pytest.raises(ScaleRangeError):
        apply(ModulationParams(lam=0.05), bump)


def test_boost_is_a_phase(bump):
    boosted = boost(bump, 0.7)
    npt.assert_allclose(np.abs(boosted.values), np.abs(bump.values))
    npt.assert_allclose(boosted.values, apply(ModulationParams(xi=0.7), bump).values, atol=1e-13)


def test_soliton_at_time_zero_is_a_group_image_of_q(grid):
    lam, theta, x0, xi0 = 1.4, 0.8, 0.6, -0.3
    expected = apply_closed_form(ModulationParams(lam=lam, gamma=-theta, x0=x0, xi=xi0), eval_Q, grid)
    npt.assert_allclose(soliton(0.0, lam, theta, x0, xi0, grid).values, expected.values, atol=1e-14)


def test_galilean_image_of_a_standing_soliton(wide_grid):
    grid = wide_grid
    t, xi = 0.75, 0.4
    standing = soliton(t, 1.1, 0.2, 0.0, 0.0, grid)
    moving = soliton(t, 1.1, 0.2, 0.0, xi, grid)
    npt.assert_allclose(galilean(standing, xi, t).values, moving.values, atol=1e-10)


def test_soliton_mass_is_scale_invariant(grid):
    q_mass = mass(ground_state(grid))
    for lam in (0.9, 1.0, 1.6):
        npt.assert_allclose(mass(soliton(0.3, lam, 0.0, 0.2, 0.5, grid)), q_mass, rtol=1e-9)


def test_pseudoconformal_soliton_has_the_ground_state_mass():
    grid = Grid(64.0, 8192)
    q_mass = mass(ground_state(grid))
    for t, lam in ((-2.0, 1.0), (-1.0, 0.8), (-0.5, 1.5)):
        u = pseudoconformal_soliton(t, 0.0, lam, 0.3, 0.0, 0.0, grid)
        npt.assert_allclose(mass(u), q_mass, rtol=1e-9)


def test_pseudoconformal_soliton_concentrates_towards_blowup():
    grid = Grid(64.0, 8192)
    heights = [lp_norm(pseudoconformal_soliton(t, 0.0, 1.0, 0.0, 0.0, 0.0, grid), np.inf) for t in (-2.0, -1.0, -0.5)]
    npt.assert_allclose(heights, [3.0 ** 0.25 * np.sqrt(1.0 / tau) for tau in (2.0, 1.0, 0.5)], rtol=1e-6)


def test_pseudoconformal_soliton_after_blowup_is_rejected(grid):
    with pytest.raises(LabDomainError):
        pseudoconformal_soliton(1.0, 1.0, 1.0, 0.0, 0.0, 0.0, grid)


def test_pseudoconformal_conjugate_is_an_involution():
    grid = Grid(16.0, 1024)
    u = Field.from_function(grid, lambda x: np.exp(-x ** 2) * (1.0 + 0.2j * x))
    t = 2.0
    v = pseudoconformal_conjugate(u, t)
    back = pseudoconformal_conjugate(v, 1.0 / t)
    npt.assert_allclose(back.values, u.values, atol=1e-10)
    npt.assert_allclose(mass(v), mass(u), rtol=1e-10)


def test_pseudoconformal_conjugate_needs_compact_support(grid):
    q = ground_state(grid)
    assert support_leak(q) > 1e-12
    with pytest.raises(LabDomainError):
        pseudoconformal_conjugate(q, 2.0)


def test_pseudoconformal_conjugate_is_undefined_at_zero():
    grid = Grid(16.0, 256)
    u = Field.from_function(grid, lambda x: np.exp(-x ** 2))
    with pytest.raises(LabDomainError):
        pseudoconformal_conjugate(u, 0.0)
