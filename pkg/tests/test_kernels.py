"""Bessel-potential kernels, their Fourier side and grid sampling."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import kv

from svgd_limit.errors import SingularEvaluationError, UnderResolvedKernelError
from svgd_limit.grid import Grid, integrate
from svgd_limit.kernels import (
    KernelSpec,
    bessel_k_nu,
    bessel_potential,
    bessel_potential_grad,
    fourier_min,
    fourier_transform,
    is_singular,
    kernel_gradient,
    kernel_value,
    moment_l2,
    sample_on_grid,
    semigroup_defect,
    sigma_star,
    verify_fourier_sandwich,
    verify_sigma_star,
    weight_w,
    weighted_kernel,
)
from svgd_limit.potentials import make_potential

pytestmark = pytest.mark.kernels

RADII = np.concatenate([np.logspace(-3, 0, 25), np.linspace(1.5, 40.0, 40)])


class TestSpecialFunctions:
    @pytest.mark.parametrize("nu", [0.0, 1.0, 2.0, 0.5, 1.5])
    def test_bessel_k_matches_scipy(self, nu):
        ours = bessel_k_nu(nu, RADII)
        ref = kv(nu, RADII)
        assert np.max(np.abs(ours - ref) / ref) <= 1e-7

    @pytest.mark.parametrize("nu", [0.0, 1.0])
    def test_series_and_integral_paths_meet_at_two(self, nu):
        r = np.array([2.0 - 1e-9, 2.0, 2.0 + 1e-9, 2.5, 6.0])
        np.testing.assert_allclose(bessel_k_nu(nu, r), kv(nu, r), rtol=1e-7)

    def test_scalar_in_scalar_out(self):
        assert isinstance(bessel_k_nu(0, 1.0), float)

    @pytest.mark.parametrize("r", [0.0, -1.0])
    def test_nonpositive_argument_is_singular(self, r):
        with pytest.raises(SingularEvaluationError):
            bessel_k_nu(0, r)

    def test_order_must_be_half_integer(self):
        with pytest.raises(ValueError):
            bessel_k_nu(0.3, 1.0)


class TestBesselPotentials:
    def test_g2_in_one_dimension_is_laplace(self):
        x = np.linspace(-5.0, 5.0, 41)
        np.testing.assert_allclose(bessel_potential(2, 1, x), 0.5 * np.exp(-np.abs(x)), rtol=1e-7)

    def test_g2_is_bounded_at_origin_in_one_dimension(self):
        assert bessel_potential(2, 1, 0.0) == pytest.approx(0.5)

    def test_g1_in_one_dimension_is_k0_over_pi(self):
        x = np.array([0.01, 0.3, 1.0, 4.0])
        np.testing.assert_allclose(bessel_potential(1, 1, x), kv(0, x) / np.pi, rtol=1e-7)

    def test_g2_in_two_dimensions(self):
        pts = np.array([[0.3, 0.4], [1.0, 2.0]])
        r = np.linalg.norm(pts, axis=-1)
        np.testing.assert_allclose(bessel_potential(2, 2, pts), kv(0, r) / (2 * np.pi), rtol=1e-7)

    def test_singular_origin_raises(self):
        with pytest.raises(SingularEvaluationError):
            bessel_potential(1, 1, 0.0)
        with pytest.raises(SingularEvaluationError):
            bessel_potential(2, 2, np.zeros(2))

    def test_g2_gradient_in_one_dimension(self):
        x = np.array([-2.0, -0.3, 0.3, 1.0, 4.0])
        grad = bessel_potential_grad(2, 1, x)[..., 0]
        np.testing.assert_allclose(grad, -0.5 * np.sign(x) * np.exp(-np.abs(x)), rtol=1e-7)

    @pytest.mark.parametrize("alpha", [1, 2])
    def test_gradient_in_two_dimensions_matches_finite_difference(self, alpha):
        p = np.array([0.7, -0.4])
        eps = 1e-6
        fd = [
            (bessel_potential(alpha, 2, p + eps * e) - bessel_potential(alpha, 2, p - eps * e)) / (2 * eps)
            for e in np.eye(2)
        ]
        np.testing.assert_allclose(bessel_potential_grad(alpha, 2, p), fd, rtol=1e-6)

    def test_gradient_domain(self):
        with pytest.raises(SingularEvaluationError):
            bessel_potential_grad(2, 1, 0.0)
        with pytest.raises(ValueError):
            bessel_potential_grad(3, 1, 1.0)

    @pytest.mark.parametrize("base,kind,d,expected", [
        ("bessel", "omega", 1, True),
        ("bessel", "k", 1, False),
        ("bessel", "k", 2, True),
        ("gaussian", "omega", 2, False),
    ])
    def test_singularity_flags(self, base, kind, d, expected):
        assert is_singular(KernelSpec(base, 1.0, d), kind) is expected

    def test_bandwidth_scaling(self):
        z = np.linspace(0.1, 2.0, 9)
        scaled = kernel_value(KernelSpec("bessel", 0.5, 1), z, "k")
        np.testing.assert_allclose(scaled, 2.0 * 0.5 * np.exp(-2.0 * z), rtol=1e-7)

    @pytest.mark.parametrize("base", ["bessel", "gaussian"])
    def test_gradient_matches_finite_difference(self, base):
        spec = KernelSpec(base, 0.4, 1)
        z, eps = 0.7, 1e-6
        fd = (kernel_value(spec, z + eps) - kernel_value(spec, z - eps)) / (2 * eps)
        assert float(kernel_gradient(spec, z).ravel()[0]) == pytest.approx(float(fd), rel=1e-6)

    def test_gradient_vanishes_at_origin(self):
        spec = KernelSpec("bessel", 0.3, 1)
        assert float(kernel_gradient(spec, 0.0).ravel()[0]) == 0.0


class TestFourierSide:
    @pytest.mark.parametrize("base,kind,profile", [
        ("bessel", "k", lambda x: 0.5 * np.exp(-x)),
        ("gaussian", "omega", lambda x: np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)),
    ])
    def test_closed_form_matches_quadrature(self, base, kind, profile):
        xi = 0.3
        val, _ = quad(profile, 0.0, np.inf, weight="cos", wvar=2 * np.pi * xi)
        exact = float(fourier_transform(KernelSpec(base, 1.0, 1), xi, kind))
        assert 2.0 * val == pytest.approx(exact, rel=1e-6)

    def test_bessel_sandwich_constants(self):
        rep = verify_fourier_sandwich(KernelSpec("bessel", 1.0, 1))
        assert rep.sandwich_ok
        assert 6.28 < rep.d0_estimate < 6.29
        assert 0.999 < rep.d1_estimate < 1.001

    @pytest.mark.parametrize("sigma", [0.5, 0.1])
    def test_sandwich_persists_under_scaling(self, sigma):
        unit = verify_fourier_sandwich(KernelSpec("bessel", 1.0, 1))
        scaled = verify_fourier_sandwich(KernelSpec("bessel", sigma, 1))
        assert scaled.sandwich_ok
        # min zeta = 1 / D0
        assert 1.0 / scaled.d0_estimate >= 1.0 / unit.d0_estimate

    def test_gaussian_violates_lower_bound(self):
        rep = verify_fourier_sandwich(KernelSpec("gaussian", 1.0, 1))
        assert not rep.sandwich_ok
        assert rep.d0_estimate == float("inf")

    def test_sigma_star_admits_smaller_bandwidths(self):
        d0 = (2 * np.pi) ** 2
        profile = lambda x: fourier_transform(KernelSpec("bessel", 1.0, 1), x, "k")
        s_star = sigma_star(0.1, d0, profile)
        assert 0.0 < s_star <= 1.0 / np.sqrt(0.9 * d0)
        assert verify_sigma_star(profile, 0.1, s_star / 2)
        assert verify_sigma_star(profile, 0.1, s_star / 4)
        assert not verify_sigma_star(profile, 0.1, 1.0)

    def test_sigma_star_stays_strictly_inside(self):
        # f = 1 admits every delta, so both caps land on 1/sqrt(c) with c = 1
        star = sigma_star(0.5, 2.0, lambda x: np.ones_like(x))
        assert star < 1.0
        assert 2.0 * 0.5 * star ** 2 < 1.0
        assert star == pytest.approx(1.0, rel=1e-9)

    @pytest.mark.parametrize("eps,d0", [(0.0, 40.0), (1.0, 40.0), (0.1, 0.5)])
    def test_sigma_star_rejects_bad_parameters(self, eps, d0):
        with pytest.raises(ValueError):
            sigma_star(eps, d0, lambda x: 1.0 / (1.0 + x ** 2))

    @pytest.mark.parametrize("base,power,exact", [
        ("gaussian", 1.0, np.sqrt(np.sqrt(np.pi) / (4 * np.pi))),
        ("bessel", 1.0, 0.25),                  # 2 int r^2 K0^2 / pi^2 = 1/16
        ("bessel", 2.0, np.sqrt(27.0) / 16.0),   # 2 int r^4 K0^2 / pi^2 = 27/256
    ])
    def test_unit_moment_norm(self, base, power, exact):
        assert moment_l2(KernelSpec(base, 1.0, 1), power) == pytest.approx(exact, rel=1e-6)

    @pytest.mark.parametrize("base", ["bessel", "gaussian"])
    @pytest.mark.parametrize("power", [1.0, 2.0])
    def test_moment_norm_scales_with_bandwidth(self, base, power):
        unit = moment_l2(KernelSpec(base, 1.0, 1), power)
        half = moment_l2(KernelSpec(base, 0.5, 1), power)
        assert half / unit == pytest.approx(0.5 ** (power - 0.5), rel=1e-6)


class TestSampling:
    @pytest.mark.parametrize("base,kind", [("bessel", "omega"), ("bessel", "k"), ("gaussian", "k")])
    def test_sampled_kernel_has_unit_mass(self, base, kind):
        grid = Grid(1, 4.0, 256)
        field = sample_on_grid(KernelSpec(base, 0.2, 1), grid, kind)
        assert field.centering == "node"
        assert integrate(field) == pytest.approx(1.0, abs=1e-12)
        assert np.argmax(field.values) == grid.cells // 2

    @pytest.mark.parametrize("kind", ["omega", "k"])
    @pytest.mark.parametrize("sigma", [0.4, 0.2, 0.1])
    def test_sampled_kernel_has_nonnegative_spectrum(self, sigma, kind):
        field = sample_on_grid(KernelSpec("bessel", sigma, 1), Grid(1, 4.0, 1024), kind)
        assert fourier_min(field) >= -1e-10

    def test_singular_kernel_in_two_dimensions(self):
        grid = Grid(2, 2.0, 32)
        field = sample_on_grid(KernelSpec("bessel", 0.5, 2), grid, "k")
        assert integrate(field) == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.isfinite(field.values))

    def test_under_resolved_bandwidth(self):
        with pytest.raises(UnderResolvedKernelError):
            sample_on_grid(KernelSpec("bessel", 0.05, 1), Grid(1, 4.0, 64))

    def test_semigroup_defect_shrinks_under_refinement(self):
        spec = KernelSpec("bessel", 0.2, 1)
        coarse = semigroup_defect(spec, Grid(1, 4.0, 512))
        fine = semigroup_defect(spec, Grid(1, 4.0, 1024))
        assert fine < coarse

    def test_semigroup_defect_is_one_dimensional(self):
        with pytest.raises(ValueError):
            semigroup_defect(KernelSpec("bessel", 0.5, 2), Grid(2, 2.0, 16))


def test_unit_weight_reduces_to_plain_kernel():
    spec = KernelSpec("gaussian", 0.3, 1)
    pot = make_potential("quartic")
    x, y = np.array([[0.2]]), np.array([[-0.4]])
    value, grad_y = weighted_kernel(spec, pot, x, y, unit_weight=True)
    assert float(value[0]) == pytest.approx(float(kernel_value(spec, x - y)[0]))
    assert float(grad_y[0, 0]) == pytest.approx(-float(kernel_gradient(spec, x - y)[0, 0]))


def test_weight_is_one_where_the_potential_is_its_minorant():
    x = np.linspace(-3.0, 3.0, 13)
    np.testing.assert_allclose(weight_w(make_potential("gaussian"), x), np.exp(x ** 2 / 4), rtol=1e-12)
    cosine = make_potential("cosine")
    w = weight_w(cosine, x)
    np.testing.assert_allclose(w, np.exp(cosine.V(x) - x ** 2 / 4), rtol=1e-12)
