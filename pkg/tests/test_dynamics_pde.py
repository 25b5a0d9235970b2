"""Finite-volume solvers for the local and nonlocal continuity equations.

Runs here use coarse grids and short horizons; the desk-scale versions
of these properties live in test_acceptance.py.
"""

import numpy as np
import pytest

from svgd_limit.diagnostics import kl_monotonicity_violation, w1_transport_margin
from svgd_limit.errors import SolverError
from svgd_limit.grid import Field, Grid
from svgd_limit.kernels import KernelSpec, sample_on_grid
from svgd_limit.potentials import initial_density, make_potential, rho_infinity
from svgd_limit.dynamics_pde import (
    PDEVariant,
    SolverConfig,
    compute_flux,
    flux_local_plain,
    flux_local_weighted,
    flux_nonlocal_plain,
    flux_nonlocal_weighted,
    log_mean,
    run,
    stable_dt,
    step,
)

pytestmark = pytest.mark.pde

KERNEL = KernelSpec("bessel", 1.0, 1)


@pytest.fixture
def quartic():
    return make_potential("quartic")


@pytest.fixture
def grid():
    return Grid(1, 4.0, 128)


@pytest.fixture
def bump(grid, quartic):
    return initial_density("bump", grid, quartic, center=1.0, width=0.5)


def _variant(tag, sigma=0.4):
    return PDEVariant(tag, None if tag.startswith("local") else sigma)


def _mean(rho):
    return float(np.sum(rho.grid.axis() * rho.values) * rho.grid.spacing)


class TestConfiguration:
    def test_local_variants_take_no_bandwidth(self):
        with pytest.raises(ValueError):
            PDEVariant("local_plain", 0.1)

    @pytest.mark.parametrize("sigma", [None, 0.0, 1.5])
    def test_nonlocal_variants_need_bandwidth(self, sigma):
        with pytest.raises(ValueError):
            PDEVariant("nonlocal_weighted", sigma)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            PDEVariant("nonlocal_fancy", 0.1)

    def test_labels(self):
        assert PDEVariant("local_weighted").label == "local_weighted"
        assert PDEVariant("nonlocal_plain", 0.2).label == "nonlocal_plain(sigma=0.2)"

    @pytest.mark.parametrize("kwargs", [{"end_time": 0.0}, {"end_time": 1.0, "cfl": 1.0},
                                        {"end_time": 1.0, "stride": 0}])
    def test_solver_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(PDEVariant("local_plain"), **kwargs)


class TestFluxes:
    def test_log_mean(self):
        a = np.array([2.0, 1.0, 0.0, 3.0])
        b = np.array([2.0, np.e, 1.0, 3.0 + 1e-12])
        out = log_mean(a, b)
        assert out[0] == pytest.approx(2.0)
        assert out[1] == pytest.approx(np.e - 1.0)
        assert out[2] == 0.0
        assert out[3] == pytest.approx(3.0, rel=1e-12)

    def test_equilibrium_has_no_local_flux(self, grid, quartic):
        flux = flux_local_plain(rho_infinity(quartic, grid), quartic)
        assert np.max(np.abs(flux.faces[0])) <= 1e-12

    def test_equilibrium_has_no_nonlocal_flux(self, grid, quartic):
        flux = flux_nonlocal_plain(rho_infinity(quartic, grid), KERNEL.with_bandwidth(0.4), quartic)
        assert np.max(np.abs(flux.faces[0])) <= 1e-12

    @pytest.mark.parametrize("nonlocal_", [False, True])
    def test_equilibrium_has_no_weighted_flux(self, nonlocal_):
        pot = make_potential("cosine")
        g = Grid(1, 8.0, 128)
        omega = sample_on_grid(KERNEL.with_bandwidth(0.4), g)

        def flux(rho):
            if nonlocal_:
                return flux_nonlocal_weighted(rho, omega, pot).faces[0]
            return flux_local_weighted(rho, pot).faces[0]

        at_rest = flux(rho_infinity(pot, g))
        moving = flux(initial_density("tilted", g, pot))
        assert np.max(np.abs(moving)) > 0
        assert np.max(np.abs(at_rest)) <= 1e-10 * np.max(np.abs(moving))

    def test_boundary_faces_carry_zero_flux(self, bump, quartic):
        flux = flux_local_plain(bump, quartic)
        assert flux.faces[0][0] == 0.0 and flux.faces[0][-1] == 0.0
        assert np.sum(flux.divergence()) == pytest.approx(0.0, abs=1e-10)

    def test_nonlocal_flux_needs_kernel(self, bump, quartic):
        with pytest.raises(ValueError):
            compute_flux(PDEVariant("nonlocal_plain", 0.4), bump, quartic)

    def test_local_time_step_is_parabolic(self, bump, quartic):
        variant = PDEVariant("local_plain")
        dt = stable_dt(bump, variant, quartic, remaining=1.0, cfl=0.25)
        h = bump.grid.spacing
        assert 0.0 < dt <= 0.25 * h ** 2 / (2.0 * np.max(bump.values)) * (1 + 1e-12)
        assert stable_dt(bump, variant, quartic, remaining=1e-9) == pytest.approx(1e-9)


class TestStep:
    def test_large_step_aborts_on_positivity(self, bump, quartic):
        flux = flux_local_plain(bump, quartic)
        with pytest.raises(SolverError) as exc:
            step(bump, flux, 1e3, time=0.0)
        assert exc.value.cell is not None
        assert exc.value.time == 0.0

    def test_grids_must_agree(self, bump, quartic):
        flux = flux_local_plain(bump, quartic)
        other = Field(Grid(1, 4.0, 64), np.full(64, 0.125))
        with pytest.raises(ValueError):
            step(other, flux, 1e-4)


class TestRun:
    @pytest.mark.parametrize("tag,potential,half_width", [
        ("nonlocal_plain", "quartic", 4.0),
        ("local_plain", "quartic", 4.0),
        ("nonlocal_weighted", "cosine", 8.0),
        ("local_weighted", "cosine", 8.0),
    ])
    def test_equilibrium_is_stationary(self, tag, potential, half_width):
        pot = make_potential(potential)
        g = Grid(1, half_width, 128)
        rho_inf = rho_infinity(pot, g)
        log = run(SolverConfig(_variant(tag), end_time=0.05, stride=5), rho_inf, pot, KERNEL, rho_inf)
        assert max(log.kl) <= 1e-10
        assert max(abs(m - 1.0) for m in log.mass) <= 1e-10

    @pytest.mark.parametrize("tag", ["local_plain", "nonlocal_plain"])
    def test_mass_positivity_and_monotone_kl(self, tag, bump, quartic):
        log = run(SolverConfig(_variant(tag), end_time=0.1, stride=5), bump, quartic, KERNEL)
        assert log.times[-1] == 0.1
        assert max(abs(m - 1.0) for m in log.mass) <= 1e-10
        assert min(log.min_rho) >= -1e-12
        assert kl_monotonicity_violation(log.kl) == 0.0
        assert log.kl[-1] < log.kl[0]

    @pytest.mark.parametrize("tag", ["local_plain", "nonlocal_plain"])
    def test_mass_moves_toward_equilibrium(self, tag, bump, quartic):
        log = run(SolverConfig(_variant(tag), end_time=0.1), bump, quartic, KERNEL)
        assert _mean(log.final_state) < _mean(bump)

    def test_weighted_run_from_tilted_datum(self):
        pot = make_potential("cosine")
        g = Grid(1, 8.0, 128)
        rho0 = initial_density("tilted", g, pot)
        log = run(SolverConfig(_variant("nonlocal_weighted"), end_time=0.1, stride=5), rho0, pot, KERNEL)
        assert max(abs(m - 1.0) for m in log.mass) <= 1e-10
        assert log.kl[-1] < log.kl[0]

    def test_transport_bounds_displacement(self, bump, quartic):
        cfg = SolverConfig(_variant("local_plain"), end_time=0.02, stride=2, snapshots=True)
        log = run(cfg, bump, quartic)
        assert len(log.snapshots) == len(log.times)
        assert w1_transport_margin(log) >= -1e-10

    def test_step_budget(self, bump, quartic):
        with pytest.raises(SolverError, match="step budget"):
            run(SolverConfig(_variant("local_plain"), end_time=0.05, max_steps=1), bump, quartic)

    def test_nonlocal_run_needs_kernel(self, bump, quartic):
        with pytest.raises(ValueError):
            run(SolverConfig(_variant("nonlocal_plain"), end_time=0.01), bump, quartic)

    def test_initial_mass_is_checked(self, bump, quartic):
        doubled = bump.like(2.0 * bump.values)
        with pytest.raises(ValueError, match="mass"):
            run(SolverConfig(_variant("local_plain"), end_time=0.01), doubled, quartic)

    def test_precomputed_kernel_field_is_accepted(self, bump, quartic):
        omega = sample_on_grid(KERNEL.with_bandwidth(0.4), bump.grid)
        flux = compute_flux(PDEVariant("nonlocal_plain", 0.4), bump, quartic, omega)
        direct = flux_nonlocal_plain(bump, omega, quartic)
        np.testing.assert_array_equal(flux.faces[0], direct.faces[0])

    def test_two_dimensional_local_run(self):
        pot = make_potential("gaussian", 2)
        g = Grid(2, 8.0, 64)
        rho0 = initial_density("bump", g, pot)
        log = run(SolverConfig(_variant("local_plain"), end_time=0.05), rho0, pot)
        assert max(abs(m - 1.0) for m in log.mass) <= 1e-10
        assert log.kl[-1] <= log.kl[0]
