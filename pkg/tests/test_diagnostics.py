"""Relative entropy, dissipations, transport distance and the inequality checks."""

import logging

import numpy as np
import pytest

from svgd_limit.dynamics_pde import TrajectoryLog
from svgd_limit.errors import GridMismatchError, InsufficientSamplesError, SupportViolationError
from svgd_limit.grid import Field, Grid, cutoff
from svgd_limit.kernels import KernelSpec
from svgd_limit.potentials import initial_density, make_potential, rho_infinity
from svgd_limit.diagnostics import (
    abs_entropy_bound_check,
    commutator_norm,
    commutator_ratio,
    diagnostic_row,
    dissipation_local,
    dissipation_plain,
    dissipation_quadratic_form,
    dissipation_weighted,
    entropy_identity_residual,
    fit_decay_rate,
    inputs_digest,
    kl_divergence,
    kl_monotonicity_violation,
    moment_norm_check,
    neg_log_bound_check,
    slsi_ratio,
    stein_force,
    transport_distance,
    w1_distance_1d,
)

pytestmark = pytest.mark.diagnostics

BESSEL = KernelSpec("bessel", 1.0, 1)


@pytest.fixture(scope="module")
def gaussian_setup():
    pot = make_potential("gaussian")
    grid = Grid(1, 8.0, 1024)
    return pot, grid, rho_infinity(pot, grid)


@pytest.fixture(scope="module")
def quartic_setup():
    pot = make_potential("quartic")
    grid = Grid(1, 4.0, 256)
    return pot, grid, rho_infinity(pot, grid)


def _shifted_normal(grid, mu):
    return Field.from_function(grid, lambda p: np.exp(-0.5 * (p[..., 0] - mu) ** 2)).normalized()


def _log(times, kl, diss):
    log = TrajectoryLog("synthetic")
    log.times, log.kl, log.dissipation = list(times), list(kl), list(diss)
    return log


class TestRelativeEntropy:
    def test_zero_at_equilibrium(self, gaussian_setup):
        _, _, rho_inf = gaussian_setup
        assert kl_divergence(rho_inf, rho_inf) == 0.0

    @pytest.mark.parametrize("mu", [0.25, 0.5, 1.0])
    def test_gaussian_shift_closed_form(self, gaussian_setup, mu):
        _, grid, rho_inf = gaussian_setup
        assert kl_divergence(_shifted_normal(grid, mu), rho_inf) == pytest.approx(mu * mu / 2, abs=1e-4)

    def test_negative_sum_is_clamped_and_logged(self, gaussian_setup, caplog):
        _, _, rho_inf = gaussian_setup
        caplog.set_level(logging.DEBUG, logger="svgd_limit.diagnostics")
        assert kl_divergence(rho_inf.like(0.5 * rho_inf.values), rho_inf) == 0.0
        assert any("below zero" in r.getMessage() for r in caplog.records)

    def test_support_violation(self, gaussian_setup):
        _, grid, rho_inf = gaussian_setup
        hollow = rho_inf.values.copy()
        hollow[10] = 0.0
        with pytest.raises(SupportViolationError):
            kl_divergence(rho_inf, rho_inf.like(hollow))


class TestDissipation:
    def test_stein_force_vanishes_at_equilibrium(self, quartic_setup):
        pot, _, rho_inf = quartic_setup
        assert np.max(np.abs(stein_force(rho_inf, pot))) <= 1e-12

    def test_all_dissipations_vanish_at_equilibrium(self, quartic_setup):
        pot, _, rho_inf = quartic_setup
        assert dissipation_local(rho_inf, pot) <= 1e-20
        assert dissipation_plain(rho_inf, 0.2, BESSEL, pot) <= 1e-20

    def test_positive_away_from_equilibrium(self, quartic_setup):
        pot, grid, _ = quartic_setup
        rho = initial_density("bump", grid, pot)
        assert dissipation_local(rho, pot) > 0
        assert dissipation_plain(rho, 0.2, BESSEL, pot) > 0

    def test_mollified_dissipation_approaches_local(self, quartic_setup):
        pot, grid, _ = quartic_setup
        rho = initial_density("bump", grid, pot)
        local = dissipation_local(rho, pot)
        gaps = [abs(dissipation_plain(rho, s, BESSEL, pot) - local) for s in (0.4, 0.2, 0.1)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_quadratic_form_matches_factorised_plain(self, quartic_setup):
        pot, grid, _ = quartic_setup
        rho = initial_density("bump", grid, pot)
        factorised = dissipation_plain(rho, 0.2, BESSEL, pot)
        composed = dissipation_quadratic_form(rho, 0.2, BESSEL, pot, weighted=False)
        assert composed == pytest.approx(factorised, rel=1e-6)

    def test_quadratic_form_matches_factorised_weighted(self):
        pot = make_potential("cosine")
        grid = Grid(1, 8.0, 256)
        rho = initial_density("tilted", grid, pot)
        factorised = dissipation_weighted(rho, 0.2, BESSEL, pot)
        composed = dissipation_quadratic_form(rho, 0.2, BESSEL, pot, weighted=True)
        assert composed == pytest.approx(factorised, rel=1e-6)

    def test_slsi_ratio(self, quartic_setup):
        pot, grid, rho_inf = quartic_setup
        rho = initial_density("bump", grid, pot)
        assert slsi_ratio(rho, rho_inf, None, None, pot) > 0
        with pytest.raises(ValueError):
            slsi_ratio(rho_inf, rho_inf, None, None, pot)


class TestTransport:
    def test_w1_of_a_translation(self, gaussian_setup):
        _, grid, _ = gaussian_setup
        a, b = _shifted_normal(grid, 0.0), _shifted_normal(grid, 0.5)
        assert w1_distance_1d(a, b) == pytest.approx(0.5, abs=1e-3)
        assert transport_distance(a, b) == w1_distance_1d(a, b)

    def test_w1_is_one_dimensional(self):
        g = Grid(2, 2.0, 8)
        f = Field(g, np.ones(g.shape)).normalized()
        with pytest.raises(ValueError):
            w1_distance_1d(f, f)
        assert transport_distance(f, f) == 0.0


class TestTrajectoryChecks:
    def test_entropy_identity_exact_for_linear_decay(self):
        assert entropy_identity_residual(_log([0, 1, 2], [3, 2, 1], [1, 1, 1])) == pytest.approx(0.0)

    def test_entropy_identity_flags_mismatch(self):
        assert entropy_identity_residual(_log([0, 1, 2], [3, 2, 1], [2, 2, 2])) == pytest.approx(0.5)

    def test_entropy_identity_needs_samples(self):
        with pytest.raises(InsufficientSamplesError):
            entropy_identity_residual(_log([0, 1], [2, 1], [1, 1]))

    def test_monotonicity_violation(self):
        assert kl_monotonicity_violation([1.0, 0.5, 0.4]) == 0.0
        assert kl_monotonicity_violation([1.0, 0.5, 0.6]) == pytest.approx(0.1 - 1e-9)


class TestDecayFit:
    def test_exact_exponential(self):
        t = np.linspace(0, 2, 10)
        fit = fit_decay_rate(t, 2.0 * np.exp(-0.7 * t))
        assert fit.rate == pytest.approx(0.7, rel=1e-10)
        assert fit.intercept == pytest.approx(np.log(2.0))
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.samples == 10

    def test_samples_below_floor_are_dropped(self):
        t = np.arange(8.0)
        kl = np.exp(-t)
        kl[-2:] = 1e-15
        assert fit_decay_rate(t, kl).samples == 6

    def test_too_few_samples(self):
        with pytest.raises(InsufficientSamplesError):
            fit_decay_rate([0, 1, 2, 3], [1.0, 0.5, 0.25, 0.125])

    def test_flat_kl_has_zero_rate(self):
        fit = fit_decay_rate(np.arange(6.0), np.full(6, 0.3))
        assert fit.rate == 0.0 and fit.r_squared == 1.0


class TestInequalityChecks:
    def test_commutator_shrinks_with_bandwidth(self):
        grid = Grid(1, 4.0, 512)
        f = initial_density("bump", grid, make_potential("quartic"), center=0.5)
        chi = cutoff(grid, 1.0)
        norms = [commutator_norm(f, chi, s, BESSEL) for s in (0.4, 0.2, 0.1)]
        assert norms[0] > norms[1] > norms[2] > 0
        assert commutator_ratio(f, chi, 0.1, BESSEL) == pytest.approx(1.0, abs=0.1)

    def test_moment_norm_within_bound(self, quartic_setup):
        pot, _, rho_inf = quartic_setup
        for sigma in (0.4, 0.2, 0.1):
            measured, bound = moment_norm_check(rho_inf, 1.0, sigma, BESSEL)
            assert 0 < measured <= bound * (1 + 1e-6)

    def test_second_moment_bound_on_random_densities(self):
        grid = Grid(1, 4.0, 256)
        rng = np.random.default_rng(7)
        for _ in range(20):
            rho = Field(grid, rng.exponential(1.0, grid.shape) * rng.uniform(0.01, 100.0)).normalized()
            measured, bound = moment_norm_check(rho, 2.0, 0.2, BESSEL)
            assert 0 < measured <= bound * (1 + 1e-6)

    def test_moment_power_below_half_dimension(self, quartic_setup):
        pot, _, rho_inf = quartic_setup
        with pytest.raises(ValueError):
            moment_norm_check(rho_inf, 0.25, 0.2, BESSEL)

    @pytest.mark.parametrize("name,half_width", [("gaussian", 8.0), ("quartic", 4.0)])
    def test_pointwise_bounds_on_random_densities(self, name, half_width):
        pot = make_potential(name)
        grid = Grid(1, half_width, 256)
        rng = np.random.default_rng(11)
        for _ in range(20):
            rho = Field(grid, rng.exponential(1.0, grid.shape) * rng.uniform(0.01, 100.0)).normalized()
            assert neg_log_bound_check(rho, pot) >= -1e-12
            measured, bound = abs_entropy_bound_check(rho, pot)
            assert measured <= bound + 1e-12

    def test_pointwise_checks_refuse_a_foreign_grid(self, quartic_setup):
        pot, grid, rho_inf = quartic_setup
        assert neg_log_bound_check(rho_inf, pot, grid) >= -1e-12
        with pytest.raises(GridMismatchError):
            neg_log_bound_check(rho_inf, pot, Grid(1, 4.0, 128))
        with pytest.raises(GridMismatchError):
            abs_entropy_bound_check(rho_inf, pot, Grid(1, 8.0, 256))

def test_diagnostic_rows_carry_stable_digests():
    inputs = {"sigma": 0.1, "source": "a.csv"}
    row = diagnostic_row("kl", inputs, 0.5)
    assert row["inputs_digest"] == inputs_digest(dict(reversed(list(inputs.items()))))
    assert len(row["inputs_digest"]) == 16
    assert row["inputs_digest"] != inputs_digest({"sigma": 0.2, "source": "a.csv"})
