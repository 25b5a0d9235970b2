"""Bessel-potential and Gaussian kernel families.

The base mollifier omega and the interaction kernel k = omega * omega:

  * ``bessel``:   omega = G_1, k = G_2, hat(omega)(xi) = (1 + 4 pi^2 |xi|^2)^(-1/2)
  * ``gaussian``: omega = N(0, I), k = N(0, 2I), hat(omega)(xi) = exp(-2 pi^2 |xi|^2)

Fourier transforms use the convention F f(xi) = int exp(-2 pi i x.xi) f(x) dx;
the sandwich constants in ``FourierReport`` are only meaningful in it.
Bandwidth scaling is omega_sigma(x) = sigma^-d omega(x / sigma), so
hat(omega_sigma)(xi) = hat(omega)(sigma xi).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import dblquad, quad
from scipy.special import gamma as gamma_fn

from .errors import SingularEvaluationError, UnderResolvedKernelError
from .grid import Field, Grid, convolve
from .potentials import PotentialSpec

logger = logging.getLogger(__name__)

KERNEL_BASES = ("bessel", "gaussian")
KERNEL_KINDS = ("omega", "k")

# Bessel-potential order of each kind: omega = G_1, k = G_2
_BESSEL_ALPHA = {"omega": 1.0, "k": 2.0}

_EULER_GAMMA = 0.57721566490153286
_SERIES_MAX_R = 2.0   # power series below, exponential-integral sum above
_SERIES_TERMS = 30
_TRAPZ_STEP = 1.0 / 32.0
_TRAPZ_T_MAX = 8.0
_CHUNK = 8192

_GL_NODES, _GL_WEIGHTS = leggauss(8)
_NEAR_ORIGIN_CELLS = 2  # cells per axis around 0 integrated adaptively


@dataclass(frozen=True)
class KernelSpec:
    base: str = "bessel"
    bandwidth: float = 1.0
    dimension: int = 1

    def __post_init__(self) -> None:
        if self.base not in KERNEL_BASES:
            raise ValueError(f"unknown kernel base {self.base!r}; expected one of {KERNEL_BASES}")
        if not 0.0 < self.bandwidth <= 1.0:
            raise ValueError(f"bandwidth must lie in (0, 1], got {self.bandwidth}")
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")

    def with_bandwidth(self, sigma: float) -> "KernelSpec":
        return KernelSpec(self.base, sigma, self.dimension)

    def to_dict(self) -> Dict:
        return {"base": self.base, "bandwidth": self.bandwidth, "dimension": self.dimension}


@dataclass
class FourierReport:
    d0_estimate: float
    d1_estimate: float
    sandwich_ok: bool
    xi_range: Tuple[float, float]
    witness_xi: float
    tail_ratio: float

    def to_dict(self) -> Dict:
        return {
            "d0_estimate": self.d0_estimate,
            "d1_estimate": self.d1_estimate,
            "sandwich_ok": self.sandwich_ok,
            "xi_range": list(self.xi_range),
            "witness_xi": self.witness_xi,
            "tail_ratio": self.tail_ratio,
        }


# --------------------------------------------------------------------------- #
# Modified Bessel functions of the second kind
# --------------------------------------------------------------------------- #
def _half_integer_k(m: int, r: np.ndarray) -> np.ndarray:
    # K_{m+1/2}(r) = sqrt(pi/2r) e^-r sum_k (m+k)! / (k! (m-k)!) (2r)^-k
    total = np.zeros_like(r)
    for k in range(m + 1):
        coef = math.factorial(m + k) / (math.factorial(k) * math.factorial(m - k))
        total += coef / (2.0 * r) ** k
    return np.sqrt(np.pi / (2.0 * r)) * np.exp(-r) * total


def _k01_series(order: int, r: np.ndarray) -> np.ndarray:
    q = r * r / 4.0
    log_half = np.log(r / 2.0)
    term = np.ones_like(r)  # (q^k / (k! (k+order)!))
    harmonic = 0.0
    i_sum = np.zeros_like(r)
    psi_sum = np.zeros_like(r)
    for k in range(_SERIES_TERMS):
        if k > 0:
            term = term * q / (k * (k + order))
            harmonic += 1.0 / k
        psi_k1 = -_EULER_GAMMA + harmonic                     # psi(k + 1)
        if order == 0:
            i_sum += term
            psi_sum += psi_k1 * term
        else:
            psi_k2 = psi_k1 + 1.0 / (k + 1)                   # psi(k + 2)
            i_sum += term
            psi_sum += (psi_k1 + psi_k2) * term
    if order == 0:
        return -log_half * i_sum + psi_sum
    half = r / 2.0
    return 1.0 / r + log_half * half * i_sum - 0.5 * half * psi_sum


def _k_integral(nu: float, r: np.ndarray) -> np.ndarray:
    # K_nu(r) = int_0^inf exp(-r cosh t) cosh(nu t) dt, trapezoid sum
    t = np.arange(0.0, _TRAPZ_T_MAX + 0.5 * _TRAPZ_STEP, _TRAPZ_STEP)
    weights = np.full(t.shape, _TRAPZ_STEP)
    weights[0] *= 0.5
    cosh_nu = np.cosh(nu * t) * weights
    out = np.empty_like(r)
    for start in range(0, r.size, _CHUNK):
        chunk = r[start:start + _CHUNK]
        out[start:start + _CHUNK] = np.exp(-np.outer(chunk, np.cosh(t))) @ cosh_nu
    return out


def _k_integer(order: int, r: np.ndarray) -> np.ndarray:
    small = r <= _SERIES_MAX_R
    k0 = np.empty_like(r)
    k1 = np.empty_like(r)
    k0[small] = _k01_series(0, r[small])
    k1[small] = _k01_series(1, r[small])
    k0[~small] = _k_integral(0.0, r[~small])
    k1[~small] = _k_integral(1.0, r[~small])
    if order == 0:
        return k0
    prev, cur = k0, k1
    for m in range(1, order):
        prev, cur = cur, prev + (2.0 * m / r) * cur
    return cur


def bessel_k_nu(nu: float, r):
    """K_nu(r) for integer or half-integer nu >= 0 and r > 0.

    Half-integer orders use the closed form. K_0 and K_1 use the ascending
    series for r <= 2; above that they come from a trapezoid sum of
    int_0^inf exp(-r cosh t) cosh(nu t) dt rather than the large-argument
    asymptotic expansion, whose optimal truncation near r = 2 stays far
    from seven digits. Higher integer orders follow by upward recurrence.
    """
    nu = abs(float(nu))
    arr = np.asarray(r, dtype=float)
    scalar = arr.ndim == 0
    flat = np.atleast_1d(arr).ravel()
    if np.any(flat <= 0) or not np.all(np.isfinite(flat)):
        raise SingularEvaluationError("bessel_k_nu requires finite r > 0")
    twice = 2.0 * nu
    if abs(twice - round(twice)) > 1e-12:
        raise ValueError(f"order {nu} is neither integer nor half-integer")
    if round(twice) % 2 == 1:
        out = _half_integer_k(int(round(nu - 0.5)), flat)
    else:
        out = _k_integer(int(round(nu)), flat)
    if scalar:
        return float(out[0])
    return out.reshape(arr.shape)


# --------------------------------------------------------------------------- #
# Bessel potentials G_alpha
# --------------------------------------------------------------------------- #
def _as_points(x, d: int) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if d == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        return arr[..., None], arr.ndim == 0
    if arr.shape[-1] != d:
        raise ValueError(f"points must have trailing dimension {d}, got {arr.shape}")
    return arr, arr.ndim == 1


def _bessel_constant(alpha: float, d: int) -> float:
    return 1.0 / (2.0 ** ((d + alpha - 2.0) / 2.0) * np.pi ** (d / 2.0) * gamma_fn(alpha / 2.0))


def _bessel_radial(alpha: float, d: int, r: np.ndarray) -> np.ndarray:
    """G_alpha as a function of |x|; r = 0 allowed only where G_alpha is bounded."""
    nu = (d - alpha) / 2.0
    out = np.empty_like(r)
    zero = r == 0
    if np.any(zero):
        if alpha <= d:
            raise SingularEvaluationError(f"G_{alpha:g} is singular at the origin in d={d}")
        out[zero] = gamma_fn((alpha - d) / 2.0) / ((4.0 * np.pi) ** (d / 2.0) * gamma_fn(alpha / 2.0))
    pos = ~zero
    if np.any(pos):
        rp = r[pos]
        out[pos] = _bessel_constant(alpha, d) * bessel_k_nu(nu, rp) * rp ** (-nu)
    return out


def bessel_potential(alpha: float, d: int, x):
    """G_alpha(x) = c K_{(d-alpha)/2}(|x|) |x|^{(alpha-d)/2}, unit mass."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    pts, scalar = _as_points(x, d)
    values = _bessel_radial(alpha, d, np.linalg.norm(pts, axis=-1))
    return float(values) if scalar else values


def bessel_potential_grad(alpha: float, d: int, x):
    """Exact radial gradient -c r^{-(nu+1)} K_{nu+1}(r) x, nu = (d - alpha)/2."""
    if alpha not in (1, 2):
        raise ValueError("gradients are provided for alpha in {1, 2}")
    pts, scalar = _as_points(x, d)
    r = np.linalg.norm(pts, axis=-1)
    if np.any(r == 0):
        raise SingularEvaluationError("bessel_potential_grad is undefined at x = 0")
    nu = (d - alpha) / 2.0
    radial = -_bessel_constant(alpha, d) * r ** (-(nu + 1.0)) * bessel_k_nu(nu + 1.0, r)
    grad = radial[..., None] * pts
    if scalar and d == 1:
        return float(grad.reshape(-1)[0])
    return grad


# --------------------------------------------------------------------------- #
# Kernel evaluation with bandwidth
# --------------------------------------------------------------------------- #
def _gaussian_radial(kind: str, d: int, r: np.ndarray) -> np.ndarray:
    var = 1.0 if kind == "omega" else 2.0
    return (2.0 * np.pi * var) ** (-d / 2.0) * np.exp(-r * r / (2.0 * var))


def is_singular(spec: KernelSpec, kind: str = "omega") -> bool:
    """True when the unscaled kernel blows up at the origin."""
    return spec.base == "bessel" and _BESSEL_ALPHA[kind] <= spec.dimension


def _radial_value(spec: KernelSpec, kind: str, r: np.ndarray) -> np.ndarray:
    if spec.base == "bessel":
        return _bessel_radial(_BESSEL_ALPHA[kind], spec.dimension, r)
    return _gaussian_radial(kind, spec.dimension, r)


def kernel_value(spec: KernelSpec, z, kind: str = "k") -> np.ndarray:
    """sigma^-d kernel(z / sigma) at points z of shape (..., d)."""
    pts, _ = _as_points(z, spec.dimension)
    s, d = spec.bandwidth, spec.dimension
    r = np.linalg.norm(pts, axis=-1) / s
    return _radial_value(spec, kind, r) / s ** d


def kernel_gradient(spec: KernelSpec, z, kind: str = "k") -> np.ndarray:
    """Gradient of the scaled kernel; defined as 0 at z = 0 (odd limit)."""
    pts, _ = _as_points(z, spec.dimension)
    s, d = spec.bandwidth, spec.dimension
    u = pts / s
    r = np.linalg.norm(u, axis=-1)
    out = np.zeros_like(u)
    pos = r > 0
    if spec.base == "bessel":
        if np.any(pos):
            out[pos] = bessel_potential_grad(_BESSEL_ALPHA[kind], d, u[pos])
    else:
        var = 1.0 if kind == "omega" else 2.0
        out = -u / var * _gaussian_radial(kind, d, r)[..., None]
    return out / s ** (d + 1)


def scale(spec: KernelSpec, kind: str = "omega") -> Callable[[np.ndarray], np.ndarray]:
    """The mollifier omega_sigma (or k_sigma) as a vectorised callable."""
    if kind not in KERNEL_KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}")

    def mollifier(z):
        return kernel_value(spec, z, kind)

    return mollifier


def fourier_transform(spec: KernelSpec, xi, kind: str = "omega") -> np.ndarray:
    """hat(kernel_sigma)(xi) = hat(kernel)(sigma xi) in the exp(-2 pi i x.xi) convention."""
    xi = np.abs(np.asarray(xi, dtype=float)) * spec.bandwidth
    power = 1.0 if kind == "omega" else 2.0
    if spec.base == "bessel":
        return (1.0 + 4.0 * np.pi ** 2 * xi ** 2) ** (-power / 2.0)
    return np.exp(-2.0 * np.pi ** 2 * power * xi ** 2)


def l1_moment(spec: KernelSpec, kind: str = "omega") -> float:
    """|| |y| kernel_sigma ||_{L^1} by radial quadrature."""
    return _radial_integral(spec, lambda r: r * np.abs(_scaled_radial(spec, kind, r)))


def moment_l2(spec: KernelSpec, power: float, kind: str = "omega") -> float:
    """|| |y|^power kernel_sigma ||_{L^2} by radial quadrature."""
    sq = _radial_integral(
        spec, lambda r: r ** (2.0 * power) * _scaled_radial(spec, kind, r) ** 2
    )
    return float(np.sqrt(sq))


def _scaled_radial(spec: KernelSpec, kind: str, r: float) -> float:
    s = spec.bandwidth
    return float(_radial_value(spec, kind, np.array([r / s]))[0]) / s ** spec.dimension


def _radial_integral(spec: KernelSpec, integrand: Callable[[float], float]) -> float:
    d, s = spec.dimension, spec.bandwidth
    surface = 2.0 if d == 1 else 2.0 * np.pi
    jac = (lambda r: 1.0) if d == 1 else (lambda r: r)
    total = 0.0
    for a, b in ((0.0, s), (s, 10.0 * s), (10.0 * s, 60.0 * s)):
        val, _ = quad(lambda r: integrand(r) * jac(r), a, b, limit=200)
        total += val
    return surface * total


# --------------------------------------------------------------------------- #
# Grid sampling
# --------------------------------------------------------------------------- #
def _gl_cell_averages(fn: Callable[[np.ndarray], np.ndarray], grid: Grid) -> np.ndarray:
    h = grid.spacing
    offsets = 0.5 * h * _GL_NODES
    w = _GL_WEIGHTS / 2.0
    z = grid.axis("node")
    if grid.dimension == 1:
        pts = (z[:, None] + offsets[None, :])[..., None]
        return fn(pts) @ w
    ox, oy = np.meshgrid(offsets, offsets, indexing="ij")
    ww = np.outer(w, w)
    out = np.empty(grid.shape)
    for i, zi in enumerate(z):
        px = zi + ox[None, :, :]
        py = z[:, None, None] + oy[None, :, :]
        pts = np.stack(np.broadcast_arrays(px, py), axis=-1)
        out[i] = np.einsum("jab,ab->j", fn(pts), ww)
    return out


def _scalar_fn(fn: Callable[[np.ndarray], np.ndarray], d: int) -> Callable[..., float]:
    if d == 1:
        return lambda t: float(fn(np.array([[t]]))[0])
    return lambda y, x: float(fn(np.array([[x, y]]))[0])


def _near_origin_averages(fn, grid: Grid, values: np.ndarray) -> None:
    """Adaptive cell averages around the origin node (in place)."""
    h, n, d = grid.spacing, grid.cells, grid.dimension
    c = n // 2
    f = _scalar_fn(fn, d)
    half = 0.5 * h
    span = range(-_NEAR_ORIGIN_CELLS, _NEAR_ORIGIN_CELLS + 1)
    if d == 1:
        for j in span:
            if j == 0:
                val, _ = quad(f, 0.0, half, limit=200)
                values[c] = 2.0 * val / h
            else:
                a = j * h - half
                val, _ = quad(f, a, a + h, limit=200)
                values[c + j] = val / h
        return
    radial = lambda r: float(fn(np.array([[r, 0.0]]))[0])
    for i in span:
        for j in span:
            if i == 0 and j == 0:
                # eight congruent triangles, polar coordinates
                val, _ = dblquad(
                    lambda r, th: radial(r) * r, 0.0, np.pi / 4.0,
                    lambda th: 0.0, lambda th: half / np.cos(th),
                )
                values[c, c] = 8.0 * val / h ** 2
            else:
                x0, y0 = i * h - half, j * h - half
                val, _ = dblquad(f, x0, x0 + h, lambda x: y0, lambda x: y0 + h)
                values[c + i, c + j] = val / h ** 2


def _cell_averages(spec: KernelSpec, grid: Grid, fn, singular: bool) -> np.ndarray:
    values = _gl_cell_averages(fn, grid)
    if singular:
        _near_origin_averages(fn, grid, values)
    return values


def _check_resolution(spec: KernelSpec, grid: Grid) -> None:
    if spec.dimension != grid.dimension:
        raise ValueError("kernel and grid dimensions differ")
    h = grid.spacing
    if spec.bandwidth < h:
        raise UnderResolvedKernelError(
            f"bandwidth {spec.bandwidth:g} is below the grid spacing {h:g}"
        )
    if spec.bandwidth < 2.0 * h:
        logger.warning("bandwidth %.4g is under 2h (h=%.4g); kernel barely resolved", spec.bandwidth, h)


def sample_on_grid(spec: KernelSpec, grid: Grid, kind: str = "omega") -> Field:
    """Node-lattice cell averages of omega_sigma (or k_sigma), renormalised to mass 1."""
    _check_resolution(spec, grid)
    fn = scale(spec, kind)
    values = _cell_averages(spec, grid, fn, is_singular(spec, kind))
    field = Field(grid, values, "node")
    return field.normalized()


def sample_moment_kernel(spec: KernelSpec, grid: Grid, power: float) -> Field:
    """Cell averages of |y|^power omega_sigma(y); not renormalised."""
    _check_resolution(spec, grid)
    base = scale(spec, "omega")

    def fn(z):
        pts, _ = _as_points(z, spec.dimension)
        r = np.linalg.norm(pts, axis=-1)
        with np.errstate(invalid="ignore"):
            out = r ** power * base(np.where(r[..., None] == 0, 1.0, pts))
        return np.where(r == 0, 0.0, out)

    values = _cell_averages(spec, grid, fn, is_singular(spec, "omega"))
    return Field(grid, values, "node")


def _hat_averages(fn: Callable[[np.ndarray], np.ndarray], grid: Grid, singular: bool) -> np.ndarray:
    # average against the hat (1 - |s|/h)/h on [-h, h]; the hat is box * box
    h = grid.spacing
    z = grid.axis("node")
    s = 0.5 * h * (_GL_NODES + 1.0)            # GL nodes on [0, h]
    w = 0.5 * h * _GL_WEIGHTS * (1.0 - s / h) / h
    pts_r = (z[:, None] + s[None, :])[..., None]
    pts_l = (z[:, None] - s[None, :])[..., None]
    values = fn(pts_r) @ w + fn(pts_l) @ w
    if singular:
        f = _scalar_fn(fn, 1)
        c = grid.cells // 2
        for j in range(-_NEAR_ORIGIN_CELLS - 1, _NEAR_ORIGIN_CELLS + 2):
            zj = j * h
            left, _ = quad(lambda y: f(y) * (1.0 - (zj - y) / h) / h, zj - h, zj, limit=200,
                           points=[0.0] if zj - h < 0.0 < zj else None)
            right, _ = quad(lambda y: f(y) * (1.0 - (y - zj) / h) / h, zj, zj + h, limit=200,
                            points=[0.0] if zj < 0.0 < zj + h else None)
            values[c + j] = left + right
    return values


def semigroup_defect(spec: KernelSpec, grid: Grid) -> float:
    """sup-norm gap between k_sigma and omega_sigma * omega_sigma on the grid (d=1).

    The discrete product of two cell averages carries the cell box twice,
    so k_sigma is compared in its twice-averaged (hat-weighted) form.
    """
    if grid.dimension != 1:
        raise ValueError("semigroup_defect is implemented for d=1")
    omega = sample_on_grid(spec, grid, "omega")
    _check_resolution(spec, grid)
    k_values = _hat_averages(scale(spec, "k"), grid, is_singular(spec, "k"))
    k_field = Field(grid, k_values, "node").normalized()
    product = convolve(omega, omega)
    return float(np.max(np.abs(product.values - k_field.values)))


def fourier_min(kernel_field: Field) -> float:
    """Smallest real part of the discrete transform of a node-centred kernel."""
    centred = np.fft.ifftshift(kernel_field.values)
    spectrum = np.fft.fftn(centred) * kernel_field.grid.cell_volume
    return float(np.min(spectrum.real))


# --------------------------------------------------------------------------- #
# Fourier-side assumption checks
# --------------------------------------------------------------------------- #
def verify_fourier_sandwich(spec: KernelSpec, xi_max: float = 1e3, n_xi: int = 400) -> FourierReport:
    """Estimate D0, D1 from zeta(xi) = hat(omega_sigma)(xi) sqrt(1 + |xi|^2).

    The lower bound must hold uniformly, so the sandwich also requires zeta
    to have stopped decaying over the last decade below ``xi_max``.
    """
    xi = np.concatenate([[0.0], np.logspace(-3.0, np.log10(xi_max), n_xi)])
    zeta = fourier_transform(spec, xi, "omega") * np.sqrt(1.0 + xi ** 2)
    i_min = int(np.argmin(zeta))
    zmin = float(zeta[i_min])
    d0 = 1.0 / zmin if zmin > 0 else float("inf")
    d1 = float(np.max(zeta))
    tail = float(fourier_transform(spec, xi_max / 10.0, "omega") * np.sqrt(1.0 + (xi_max / 10.0) ** 2))
    tail_ratio = float(zeta[-1] / tail) if tail > 0 else 0.0
    ok = bool(np.all(np.isfinite(zeta)) and zmin > 0 and tail_ratio >= 0.5)
    report = FourierReport(d0, d1, ok, (0.0, float(xi_max)), float(xi[i_min]), tail_ratio)
    logger.debug("fourier sandwich %s: %s", spec, report.to_dict())
    return report


def sigma_star(
    epsilon: float,
    d0: float,
    f: Callable[[np.ndarray], np.ndarray],
    delta_max: float = 1e3,
    samples: int = 2000,
) -> float:
    """Largest sigma_* with f(sigma x) >= (1 - eps)/(1 + |x|^2) for sigma < sigma_*.

    f is radial and evaluated on |x|. delta is found by bisection on the
    sampled infimum of f over [0, delta]; sigma_* then satisfies
    c sigma^2 < 1 and 1 + delta^2/sigma^2 >= c (1 + delta^2), c = D0 (1 - eps).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if d0 < 1.0:
        raise ValueError("D0 must be >= 1")
    if abs(float(f(np.array([0.0]))[0]) - 1.0) > 1e-12:
        raise ValueError("f(0) must equal 1")
    xs = np.linspace(0.0, 100.0, 10_000)
    if np.any(f(xs) < (1.0 - 1e-12) / (d0 * (1.0 + xs ** 2))):
        logger.warning("f violates the 1/(D0 (1+|x|^2)) lower bound on samples (D0=%g)", d0)

    floor = 1.0 - epsilon

    def admissible(delta: float) -> bool:
        return float(np.min(f(np.linspace(0.0, delta, samples)))) >= floor

    lo, hi = 1e-12, delta_max
    if not admissible(lo):
        raise ValueError("no admissible delta found on the search range")
    if admissible(hi):
        lo = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if admissible(mid):
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * max(1.0, hi):
                break
    delta = lo
    c = d0 * floor
    bound = 1.0
    if c > 0:
        bound = min(bound, 1.0 / math.sqrt(c))
    excess = c * (1.0 + delta ** 2) - 1.0
    if excess > 0:
        bound = min(bound, delta / math.sqrt(excess))
    # c sigma_*^2 < 1 is strict
    bound *= 1.0 - 1e-12
    logger.debug("sigma_star: eps=%g D0=%g delta=%.6g -> %.6g", epsilon, d0, delta, bound)
    return bound


def verify_sigma_star(
    f: Callable[[np.ndarray], np.ndarray], epsilon: float, sigma: float,
    x_max: float = 100.0, n: int = 10_000,
) -> bool:
    x = np.linspace(0.0, x_max, n)
    return bool(np.all(f(sigma * x) >= (1.0 - epsilon) / (1.0 + x ** 2)))


# --------------------------------------------------------------------------- #
# Weight and weighted Stein kernel
# --------------------------------------------------------------------------- #
def log_weight(potential: PotentialSpec, x) -> np.ndarray:
    return potential.V(x) - 0.5 * potential.minorant(x)


def weight_w(potential: PotentialSpec, x):
    """w(x) = exp(V(x) - minorant(x)/2)."""
    return np.exp(log_weight(potential, x))


def weight_gradient(potential: PotentialSpec, x) -> np.ndarray:
    return (potential.gradV(x) - 0.5 * potential.minorant_grad(x)) * weight_w(potential, x)[..., None]


def weighted_kernel(spec: KernelSpec, potential: PotentialSpec, x, y, unit_weight: bool = False):
    """K(x, y) = w(x) k_sigma(x - y) w(y) and its y-gradient."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    k = kernel_value(spec, diff, "k")
    grad_k = kernel_gradient(spec, diff, "k")
    if unit_weight:
        return k, -grad_k
    wx = weight_w(potential, x)
    wy = weight_w(potential, y)
    grad_wy = weight_gradient(potential, y)
    value = wx * k * wy
    grad_y = wx[..., None] * (-grad_k * wy[..., None] + k[..., None] * grad_wy)
    return value, grad_y
