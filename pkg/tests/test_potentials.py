"""Benchmark potentials, equilibria, initial data and assumption validators."""

import numpy as np
import pytest

from svgd_limit.errors import TailMassError
from svgd_limit.grid import Grid, integrate
from svgd_limit.potentials import (
    box_size_for,
    entropy_functional,
    initial_density,
    make_potential,
    rho_infinity,
    tail_mass,
    validate_assumption_A,
    validate_assumption_B,
)


@pytest.fixture
def quartic():
    return make_potential("quartic")


@pytest.fixture
def quartic_grid():
    return Grid(1, 4.0, 256)


class TestPotentials:
    @pytest.mark.parametrize("name", ["gaussian", "quartic", "cosine", "exp_square"])
    def test_gradient_matches_finite_difference(self, name):
        pot = make_potential(name)
        x = np.linspace(-1.5, 1.5, 13)[:, None]
        eps = 1e-6
        fd = (pot.V(x + eps) - pot.V(x - eps)) / (2 * eps)
        np.testing.assert_allclose(pot.gradV(x)[:, 0], fd, rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("name", ["gaussian", "quartic", "cosine"])
    def test_minorant_sits_below_potential(self, name):
        pot = make_potential(name, 2)
        pts = Grid(2, 4.0, 32).points()
        assert np.all(pot.V(pts) >= pot.minorant(pts) - 1e-12)

    def test_unknown_potential(self):
        with pytest.raises(ValueError):
            make_potential("harmonic")

    def test_cosine_weight_exponent_is_bounded(self):
        pot = make_potential("cosine")
        x = np.linspace(-8, 8, 101)[:, None]
        gap = pot.V(x) - pot.minorant(x)
        assert np.all((gap >= -1e-12) & (gap <= 2.0 + 1e-12))


class TestEquilibrium:
    @pytest.mark.parametrize("name,expected", [("quartic", 4.0), ("gaussian", 8.0), ("cosine", 8.0)])
    def test_box_size_ladder(self, name, expected):
        assert box_size_for(make_potential(name)) == expected

    def test_rho_infinity_is_normalised_gibbs(self, quartic, quartic_grid):
        rho = rho_infinity(quartic, quartic_grid)
        assert integrate(rho) == pytest.approx(1.0, abs=1e-14)
        v = quartic.V(quartic_grid.points())
        ratio = rho.values * np.exp(v)
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)

    def test_small_box_raises_tail_mass_error(self):
        pot = make_potential("gaussian")
        assert tail_mass(pot, 2.0) > 1e-10
        with pytest.raises(TailMassError):
            rho_infinity(pot, Grid(1, 2.0, 64))


class TestInitialData:
    @pytest.mark.parametrize("kind", ["bump", "tilted", "modulated", "equilibrium"])
    def test_unit_mass_and_positive(self, kind, quartic, quartic_grid):
        rho0 = initial_density(kind, quartic_grid, quartic)
        assert integrate(rho0) == pytest.approx(1.0, abs=1e-12)
        assert np.all(rho0.values > 0)
        assert np.isfinite(entropy_functional(rho0, quartic))

    def test_bump_is_centred(self, quartic, quartic_grid):
        rho0 = initial_density("bump", quartic_grid, quartic, center=1.0, width=0.5)
        mean = float(np.sum(quartic_grid.axis() * rho0.values) * quartic_grid.spacing)
        assert mean == pytest.approx(1.0, abs=1e-6)

    def test_amplitude_must_keep_positivity(self, quartic, quartic_grid):
        with pytest.raises(ValueError):
            initial_density("tilted", quartic_grid, quartic, amplitude=1.0)

    def test_unknown_kind(self, quartic, quartic_grid):
        with pytest.raises(ValueError):
            initial_density("spike", quartic_grid, quartic)


class TestAssumptionValidators:
    def test_quartic_satisfies_a(self, quartic, quartic_grid):
        rho0 = initial_density("bump", quartic_grid, quartic)
        report = validate_assumption_A(quartic, quartic_grid, rho0)
        assert report.passed, report.to_text()
        assert report.get("initial_entropy_finite").passed

    def test_quartic_satisfies_b(self, quartic, quartic_grid):
        report = validate_assumption_B(quartic, 1.1, quartic_grid)
        assert report.passed, report.to_text()
        assert report.c_v is not None and report.c_v > 0
        assert report.metadata["p0_star"] == pytest.approx(11.0)

    def test_gaussian_satisfies_b(self):
        pot = make_potential("gaussian")
        report = validate_assumption_B(pot, 1.1, Grid(1, 8.0, 256))
        assert report.passed, report.to_text()

    def test_exp_square_fails_b_with_witnesses(self):
        pot = make_potential("exp_square")
        report = validate_assumption_B(pot, 1.1, Grid(1, 4.0, 256))
        assert not report.passed
        failed = report.failures()
        assert "gradient_growth" in [c.name for c in failed]
        assert all(c.witness is not None for c in failed)
        assert "FAIL" in report.to_text()

    def test_p0_outside_range_is_reported(self, quartic, quartic_grid):
        report = validate_assumption_B(quartic, 1.5, quartic_grid)
        assert not report.get("p0_range").passed
        assert report.get("p0_range").witness == [1.5]

    def test_p0_must_exceed_one(self, quartic, quartic_grid):
        with pytest.raises(ValueError):
            validate_assumption_B(quartic, 1.0, quartic_grid)

    def test_reports_serialise(self, quartic, quartic_grid):
        d = validate_assumption_A(quartic, quartic_grid).to_dict()
        assert d["potential"] == "quartic"
        assert {c["name"] for c in d["checks"]} >= {"V_dominates_minorant", "gradient_consistency"}
