import numpy as np
import numpy.testing as npt
import pytest

from src.components.ground_state import (
    ground_state,
    ground_state_cubed,
    ground_state_x,
    scaling_generator,
)
from src.components.linearized_ops import (
    L_MINUS,
    L_PLUS,
    alignment,
    apply_operator,
    assemble,
    coercivity_analysis,
    constrained_coercivity,
    energy_expansion,
    low_spectrum,
    low_spectrum_matrix_free,
    resolve_operator,
)
from src.components.spectral_core import Field, Grid, lp_norm
from src.models.errors import GridMismatchError, InputError
from src.utils.perturbations import admissible_perturbation

SQRT3_PI = np.sqrt(3.0) * np.pi


@pytest.fixture(scope="module")
def spectrum_grid():
    return Grid(20.0, 512)


def test_operator_aliases():
    assert resolve_operator("L") == L_PLUS
    assert resolve_operator("Lminus") == L_MINUS
    with pytest.raises(InputError):
        resolve_operator("L_zero")


def test_kernels(wide_grid):
    assert lp_norm(apply_operator(L_PLUS, ground_state_x(wide_grid)), 2) < 1e-8
    assert lp_norm(apply_operator(L_MINUS, ground_state(wide_grid)), 2) < 1e-8


def test_q_cubed_is_the_negative_direction(wide_grid):
    q3 = ground_state_cubed(wide_grid)
    assert lp_norm(apply_operator(L_PLUS, q3) + 8.0 * q3, 2) < 1e-8


def test_scaling_generator_maps_to_minus_two_q(wide_grid):
    image = apply_operator(L_PLUS, scaling_generator(wide_grid))
    assert lp_norm(image + 2.0 * ground_state(wide_grid), 2) < 1e-8


def test_dense_matrix_matches_operator(small_grid):
    f = Field.from_function(small_grid, lambda x: np.exp(-x ** 2) * (1.0 + 0.5j * x))
    for which in (L_PLUS, L_MINUS):
        op = assemble(which, small_grid)
        assert op.asymmetry == 0.0
        npt.assert_allclose(op.matvec(f).values, apply_operator(which, f).values, atol=1e-8)


def test_dense_matrix_without_potential(small_grid):
    f = Field.from_function(small_grid, lambda x: np.exp(-x ** 2))
    free = assemble("L", small_grid, with_potential=False)
    expected = apply_operator(L_PLUS, f).values + 5.0 * ground_state(small_grid).values ** 4 * f.values
    npt.assert_allclose(free.matvec(f).values, expected, atol=1e-8)


def test_matvec_checks_the_grid(small_grid):
    op = assemble(L_MINUS, small_grid)
    with pytest.raises(GridMismatchError):
        op.matvec(Field.zeros(Grid(16.0, 256)))


def test_dense_assembly_limit():
    with pytest.raises(InputError):
        assemble(L_PLUS, Grid(16.0, 8192))


def test_l_plus_low_spectrum(spectrum_grid):
    spectrum = low_spectrum(assemble(L_PLUS, spectrum_grid), 3)
    npt.assert_allclose(spectrum.eigenvalues[0], -8.0, atol=1e-7)
    npt.assert_allclose(spectrum.eigenvalues[1], 0.0, atol=1e-6)
    assert spectrum.eigenvalues[2] > 0.5
    assert alignment(spectrum.eigenvectors[0], ground_state_cubed(spectrum_grid)) > 1.0 - 1e-10
    assert alignment(spectrum.eigenvectors[1], ground_state_x(spectrum_grid)) > 1.0 - 1e-8
    assert max(spectrum.residuals[:2]) < 1e-6
    for v in spectrum.eigenvectors:
        npt.assert_allclose(lp_norm(v, 2), 1.0)


def test_l_minus_low_spectrum(spectrum_grid):
    spectrum = low_spectrum(assemble(L_MINUS, spectrum_grid), 2)
    npt.assert_allclose(spectrum.eigenvalues[0], 0.0, atol=1e-7)
    assert spectrum.eigenvalues[1] > 0.5
    assert alignment(spectrum.eigenvectors[0], ground_state(spectrum_grid)) > 1.0 - 1e-10
    assert spectrum.as_report()["operator"] == L_MINUS


def test_matrix_free_spectrum_agrees_with_dense(spectrum_grid):
    dense = low_spectrum(assemble(L_PLUS, spectrum_grid), 3)
    lanczos = low_spectrum_matrix_free(L_PLUS, spectrum_grid, 3)
    npt.assert_allclose(lanczos.eigenvalues, dense.eigenvalues, atol=1e-7)
    assert alignment(lanczos.eigenvectors[0], dense.eigenvectors[0]) > 1.0 - 1e-9


@pytest.mark.parametrize("count", [0, 11])
def test_spectrum_count_is_bounded(small_grid, count):
    with pytest.raises(InputError):
        low_spectrum(assemble(L_PLUS, small_grid), count)
    with pytest.raises(InputError):
        low_spectrum_matrix_free(L_PLUS, small_grid, count)


def test_unconstrained_l_plus_is_not_coercive(small_grid):
    assert coercivity_analysis(L_PLUS, small_grid).constant < 0.0


def test_orthogonality_restores_coercivity(small_grid, rng):
    constraints = [ground_state_cubed(small_grid), ground_state_x(small_grid)]
    report = coercivity_analysis(L_PLUS, small_grid, constraints, trials=5, rng=rng)
    assert report.constant > 0.0
    assert report.trials == 5
    assert report.trial_min >= report.constant - 1e-9
    assert constrained_coercivity(L_PLUS, constraints, 0) == report.constant


def test_even_subspace_needs_one_constraint(small_grid):
    report = coercivity_analysis(L_PLUS, small_grid, [ground_state_cubed(small_grid)], even=True)
    assert report.even
    assert report.constant > 0.0
    assert coercivity_analysis(L_PLUS, small_grid, even=True).constant < 0.0


def test_l_minus_is_coercive_away_from_q_cubed(small_grid):
    report = coercivity_analysis(L_MINUS, small_grid, [ground_state_cubed(small_grid)], norm="L2")
    assert report.constant > 0.0
    assert report.norm == "L2"
    unconstrained = coercivity_analysis(L_MINUS, small_grid, norm="L2")
    npt.assert_allclose(unconstrained.constant, 0.0, atol=1e-6)


def test_coercivity_argument_checks(small_grid):
    with pytest.raises(InputError):
        coercivity_analysis(L_PLUS, small_grid, norm="H2")
    with pytest.raises(InputError):
        constrained_coercivity(L_PLUS, [], 3)


def test_energy_expansion_is_exact(wide_grid, rng):
    eps = admissible_perturbation(wide_grid, rng, 0.05)
    breakdown = energy_expansion(eps)
    assert abs(breakdown.discrepancy) < 1e-9
    npt.assert_allclose(breakdown.ground_energy, 0.0, atol=1e-9)
    npt.assert_allclose(breakdown.mass_shift, -0.5 * 0.05 ** 2)


def test_energy_expansion_remainder_of_a_dilated_profile(wide_grid):
    # Q + eps = 1.05 Q: the remainder is the tail of (1.05)^6 beyond second order
    eps = 0.05 * ground_state(wide_grid)
    breakdown = energy_expansion(eps)
    expected = -(1.05 ** 6 - 1.0 - 6.0 * 0.05 - 15.0 * 0.05 ** 2) * (3.0 * SQRT3_PI / 4.0) / 6.0
    npt.assert_allclose(breakdown.remainder, expected, rtol=1e-8)
    assert abs(breakdown.discrepancy) < 1e-9


def test_energy_controls_admissible_mass_preserving_perturbations(small_grid):
    q3 = [ground_state_cubed(small_grid)]
    c_plus = coercivity_analysis(L_PLUS, small_grid, q3, even=True).constant
    c_minus = coercivity_analysis(L_MINUS, small_grid, q3, even=True).constant
    floor = 0.25 * min(c_plus, c_minus)
    assert floor > 0.0

    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(100):
        eps = admissible_perturbation(
            small_grid, rng, 5e-3, mode="symmetric2", symmetric=True, renormalize_mass=True
        )
        breakdown = energy_expansion(eps)
        ratios.append(breakdown.direct / breakdown.eps_h1_sq)
    assert min(ratios) >= floor


@pytest.mark.parametrize("a", [1e-2, 1e-3])
def test_energy_of_a_boost_direction(wide_grid, a):
    # E(Q + i a Q_x) = a^2 ||Q_x||^2 + O(a^4) and ||i a Q_x||_{H^1}^2 = (15 sqrt(3) pi / 16) a^2
    breakdown = energy_expansion(a * 1j * ground_state_x(wide_grid))
    npt.assert_allclose(breakdown.eps_h1_sq, 15.0 * SQRT3_PI / 16.0 * a ** 2, rtol=1e-9)
    npt.assert_allclose(breakdown.direct, SQRT3_PI / 4.0 * a ** 2, rtol=1e-3)
    npt.assert_allclose(breakdown.direct / breakdown.eps_h1_sq, 4.0 / 15.0, rtol=1e-3)


def test_energy_expansion_remainder_is_higher_order(wide_grid):
    q = ground_state(wide_grid)
    q_x = ground_state_x(wide_grid)
    amplitudes = [0.04, 0.02, 0.01]
    real = [energy_expansion(a * q).remainder for a in amplitudes]
    imag = [energy_expansion(a * 1j * q_x).remainder for a in amplitudes]
    for large, small in zip(real, real[1:]):
        assert 7.5 < large / small < 8.5
    for large, small in zip(imag, imag[1:]):
        assert 15.0 < large / small < 17.0


def test_mass_constraint_balances_the_linear_term(wide_grid, rng):
    eps = admissible_perturbation(wide_grid, rng, 0.05, renormalize_mass=True)
    breakdown = energy_expansion(eps)
    npt.assert_allclose(breakdown.linear, breakdown.mass_linear, rtol=1e-8)


def test_energy_expansion_rejects_large_perturbations(wide_grid, rng):
    with pytest.raises(InputError):
        energy_expansion(admissible_perturbation(wide_grid, rng, 0.6))
