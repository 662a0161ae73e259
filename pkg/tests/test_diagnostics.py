from types import SimpleNamespace

import numpy as np
import numpy.testing as npt
import pytest

from src.components.diagnostics import (
    bilinear_interaction,
    diagnostic_sample,
    energy,
    epsilon_integral,
    gn_ratio,
    kinetic,
    mass,
    morawetz_potential,
    morawetz_series,
    morawetz_weight,
    psi_profile,
    sample_trajectory,
    truncated_energy,
    truncated_energy_drift,
    variance,
    variance_and_virial,
    variance_rate,
)
from src.components.evolution import evolve
from src.components.ground_state import eval_Q, ground_state, ground_state_cubed
from src.components.modulation import track
from src.components.spectral_core import Field, Grid
from src.components.symmetries import apply, apply_closed_form, pseudoconformal_soliton, soliton
from src.config.settings import settings
from src.models.errors import InputError, LabDomainError
from src.models.lab_models import ModulationParams, MorawetzConfig, SolverConfig
from src.utils.perturbations import band_limited_noise

SQRT3_PI = np.sqrt(3.0) * np.pi


@pytest.fixture
def travel_grid():
    return Grid(32.0, 2048)


def _moving_trajectory(grid, xi0, times):
    return [(t, soliton(t, 1.0, 0.0, 0.0, xi0, grid)) for t in times]


def test_mass_and_energy_of_q(grid):
    q = ground_state(grid)
    npt.assert_allclose(mass(q), SQRT3_PI / 2.0, rtol=1e-12)
    npt.assert_allclose(kinetic(q), SQRT3_PI / 4.0, rtol=1e-8)
    npt.assert_allclose(energy(q), 0.0, atol=1e-8)


def test_energy_of_a_boosted_ground_state(tracking_grid):
    xi = 3.0 * tracking_grid.fundamental
    boosted = apply(ModulationParams(xi=xi), ground_state(tracking_grid))
    npt.assert_allclose(energy(boosted), 0.5 * xi ** 2 * SQRT3_PI / 2.0, rtol=1e-8)


def test_gn_ratio_is_one_on_the_orbit(grid):
    npt.assert_allclose(gn_ratio(ground_state(grid)), 1.0, rtol=1e-8)
    npt.assert_allclose(gn_ratio(soliton(0.4, 1.3, 0.2, 0.1, 0.0, grid)), 1.0, rtol=1e-7)


def test_gn_ratio_is_below_one_off_the_orbit(grid):
    bump = Field.from_function(grid, lambda x: np.exp(-x ** 2))
    ratio = gn_ratio(bump)
    assert 0.0 < ratio < 1.0
    npt.assert_allclose(gn_ratio(3.0 * bump), ratio, rtol=1e-12)


def test_gn_ratio_is_bounded_by_one_over_random_fields(small_grid):
    rng = np.random.default_rng(4)
    ratios = []
    for _ in range(1000):
        width = rng.uniform(0.3, 3.0)
        u = band_limited_noise(
            small_grid,
            rng,
            amplitude=rng.uniform(0.1, 3.0),
            max_wavenumber=rng.uniform(1.0, 12.0),
            envelope=np.exp(-(small_grid.x / width) ** 2),
        )
        ratios.append(gn_ratio(u))
    assert max(ratios) <= 1.0 + 1e-9
    assert min(ratios) > 0.0


def test_gn_ratio_is_one_across_the_orbit(wide_grid):
    rng = np.random.default_rng(5)
    for _ in range(20):
        params = ModulationParams(
            lam=rng.uniform(0.7, 1.5), gamma=rng.uniform(0.0, 2.0 * np.pi), x0=rng.uniform(-3.0, 3.0)
        )
        npt.assert_allclose(gn_ratio(apply_closed_form(params, eval_Q, wide_grid)), 1.0, rtol=1e-8)


def test_gn_ratio_of_zero_is_undefined(grid):
    with pytest.raises(LabDomainError):
        gn_ratio(Field.zeros(grid))


def test_variance_rate_vanishes_for_real_fields(grid):
    bump = Field.from_function(grid, lambda x: np.exp(-(x - 1.0) ** 2))
    assert abs(variance_rate(bump)) < 1e-12
    npt.assert_allclose(variance(bump), (1.0 + 0.25) * np.sqrt(np.pi / 2.0), rtol=1e-12)


def test_virial_identities_on_a_moving_soliton(travel_grid):
    xi0 = 8.0 * travel_grid.fundamental
    times = np.linspace(0.0, 1.0, 101)
    samples = variance_and_virial(_moving_trajectory(travel_grid, xi0, times))
    assert len(samples) == 101
    d2v = 8.0 * xi0 ** 2 * SQRT3_PI / 2.0
    for s in samples:
        assert not s.support_leak
        assert s.first_residual < 1e-8
        assert s.second_residual < 1e-7
        npt.assert_allclose(s.d2v_dt2, d2v, rtol=1e-7)


def test_virial_identity_on_the_pseudoconformal_window():
    grid = Grid(40.0, 2048)
    u0 = pseudoconformal_soliton(-2.0, 0.0, 1.0, 0.0, 0.0, 0.0, grid)
    results = evolve(u0, 0.5, SolverConfig(dt_init=1e-3, adaptive=False, output_every=10), t0=-2.0)
    samples = variance_and_virial(results)
    assert len(samples) == 51
    # V(t) = (T - t)^2 int y^2 Q^2, so d^2V/dt^2 = 16 E = 2 int y^2 Q^2
    sixteen_e = np.sqrt(3.0) * np.pi ** 3 / 16.0
    for s in samples:
        npt.assert_allclose(s.sixteen_energy, sixteen_e, rtol=1e-4)
        assert s.second_residual <= 0.01 * abs(s.sixteen_energy)


def test_variance_flags_fields_near_the_edge(tracking_grid):
    times = [0.0, 0.1, 0.2]
    samples = variance_and_virial(_moving_trajectory(tracking_grid, 0.0, times))
    assert all(s.support_leak for s in samples)


def test_variance_needs_three_snapshots(grid):
    with pytest.raises(InputError):
        variance_and_virial(_moving_trajectory(grid, 0.0, [0.0, 0.1]))


def test_psi_profiles():
    r = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0, -1.5])
    for profile in ("c2_polynomial", "cosine"):
        psi = psi_profile(r, profile)
        npt.assert_allclose(psi, [1.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.5], atol=1e-14)
    with pytest.raises(InputError):
        psi_profile(r, "gaussian")


def test_morawetz_weight_shape():
    cfg = MorawetzConfig(R=4.0, eta1=0.5)
    x = np.linspace(-30.0, 30.0, 601)
    phi = morawetz_weight(x, cfg, 32.0)
    npt.assert_allclose(phi, -phi[::-1], atol=1e-14)
    plateau = np.abs(x) <= 8.0
    npt.assert_allclose(phi[plateau], x[plateau])
    far = x >= 16.0
    npt.assert_allclose(phi[far], phi[far][0])
    assert np.all(np.diff(phi) >= 0.0)


def test_morawetz_config_reads_the_eta1_default(monkeypatch):
    assert MorawetzConfig().eta1 == settings.MORAWETZ_ETA1
    monkeypatch.setattr(settings, "MORAWETZ_ETA1", 0.25)
    assert MorawetzConfig().eta1 == 0.25
    assert MorawetzConfig(eta1=0.5).eta1 == 0.5


def test_morawetz_potential_of_real_data_vanishes(grid):
    assert morawetz_potential(ground_state(grid)) == pytest.approx(0.0, abs=1e-14)


def test_morawetz_rate_on_a_moving_soliton(travel_grid):
    xi0 = 4.0 * travel_grid.fundamental
    times = np.linspace(0.0, 1.0, 21)
    samples = morawetz_series(_moving_trajectory(travel_grid, xi0, times))
    # M(t) = xi0 * (centre 2 t xi0) * ||Q||^2 while the soliton sits on the plateau
    for s in samples:
        npt.assert_allclose(s.value, 2.0 * s.t * xi0 ** 2 * SQRT3_PI / 2.0, atol=1e-9)
        npt.assert_allclose(s.derivative, 2.0 * xi0 ** 2 * SQRT3_PI / 2.0, rtol=1e-6)
        assert s.prediction is None


def _morawetz_with_prediction(u):
    series = track([(0.0, u)])
    (sample,) = morawetz_series([(0.0, u)], series=series)
    return sample


def test_morawetz_prediction_error_is_quadratic_in_the_amplitude(tracking_grid):
    # M(Q + i a Q^3) = -2 a (Q^3, Q/2 + y Q_y) = -a ||Q||_4^4 / 2 on the plateau
    q = ground_state(tracking_grid)
    q3 = ground_state_cubed(tracking_grid)
    errors = {}
    for a in (0.04, 0.02, 0.01):
        sample = _morawetz_with_prediction(q + 1j * a * q3)
        npt.assert_allclose(sample.value, -1.5 * a, rtol=1e-9)
        errors[a] = abs(sample.value - sample.prediction) / abs(sample.value)
    assert errors[0.01] < 5e-3
    assert 3.0 < errors[0.04] / errors[0.02] < 5.5
    assert 3.0 < errors[0.02] / errors[0.01] < 5.5


@pytest.mark.parametrize("lam", [0.8, 1.25])
def test_morawetz_potential_is_scale_invariant(tracking_grid, lam):
    v = ground_state(tracking_grid) + 0.02j * ground_state_cubed(tracking_grid)
    u = apply(ModulationParams(lam=lam), v)
    npt.assert_allclose(morawetz_potential(u), morawetz_potential(v), rtol=1e-8)
    sample = _morawetz_with_prediction(u)
    npt.assert_allclose(sample.prediction, sample.value, rtol=1e-2)


def test_morawetz_potential_is_odd_under_reflection(tracking_grid):
    rng = np.random.default_rng(9)
    noise = band_limited_noise(tracking_grid, rng, 0.3, envelope=eval_Q(tracking_grid.x))
    u = Field.from_function(tracking_grid, lambda x: eval_Q(x - 1.0) * np.exp(0.4j * x)) + noise
    value = morawetz_potential(u)
    assert abs(value) > 0.1
    npt.assert_allclose(morawetz_potential(u.reflect()), -value, atol=1e-12)
    npt.assert_allclose(morawetz_potential(u * np.exp(1.3j)), value, atol=1e-12)


def test_morawetz_cutoff_level(grid):
    u = soliton(0.0, 1.0, 0.0, 0.5, 2.0 * grid.fundamental, grid)
    full = morawetz_potential(u)
    assert morawetz_potential(u, MorawetzConfig(cutoff_level=3)) == pytest.approx(full, rel=1e-10)


def test_truncated_energy(grid):
    q = ground_state(grid)
    assert truncated_energy(q, 5) == pytest.approx(energy(q), abs=1e-12)
    # P_{<= 8} keeps |k| <= 256 > Nyquist of this grid
    assert truncated_energy(q, -1) == pytest.approx(energy(q), abs=1e-12)


def test_truncated_energy_drift(tracking_grid):
    trajectory = _moving_trajectory(tracking_grid, 0.0, np.linspace(0.0, 1.0, 6))
    report = truncated_energy_drift(trajectory, k=-7)
    assert report.k == -7
    assert len(report.values) == 6
    assert report.drift < 1e-12
    assert report.epsilon_integral is None
    with pytest.raises(InputError):
        truncated_energy_drift([], k=0)


def test_epsilon_integral():
    series = SimpleNamespace(
        times=[0.0, 0.5, 1.0],
        eps_l2=[0.1, 0.1, 0.1],
        params=[ModulationParams(lam=2.0)] * 3,
    )
    npt.assert_allclose(epsilon_integral(series), 0.0025)
    assert epsilon_integral(SimpleNamespace(times=[0.0], eps_l2=[0.1], params=[])) == 0.0


def test_bilinear_interaction_decays_with_frequency(grid):
    q = ground_state(grid)
    with pytest.raises(InputError):
        bilinear_interaction(q, 2)
    values = [bilinear_interaction(q, i) for i in (3, 4, 6)]
    assert values[0] > values[1] > values[2] >= 0.0


def test_diagnostic_sample_and_trajectory(grid):
    q = ground_state(grid)
    sample = diagnostic_sample(q, 0.5, truncation_levels=(0, 2), eps_l2=1e-3)
    assert sample.t == 0.5
    assert set(sample.truncated_energy) == {"0", "2"}
    npt.assert_allclose(sample.gn_ratio, 1.0, rtol=1e-8)
    zero = diagnostic_sample(Field.zeros(grid), 0.0)
    assert np.isnan(zero.gn_ratio)
    samples = sample_trajectory([(0.0, q), (0.1, q)])
    assert [s.t for s in samples] == [0.0, 0.1]
