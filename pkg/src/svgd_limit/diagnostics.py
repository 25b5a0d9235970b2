"""Scalar functionals and inequality checks on fields and trajectories.

KL divergence, the Stein dissipations (nonlocal in factorised omega form,
local, and the direct quadratic form), W1 in one dimension, the entropy
identity residual, SLSI ratios, decay-rate fits, commutator and moment
quantities, and the pointwise entropy bounds.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from .errors import GridMismatchError, InsufficientSamplesError, SolverError, SupportViolationError
from .grid import Field, Grid, convolve
from .kernels import KernelSpec, log_weight, moment_l2, sample_moment_kernel, sample_on_grid
from .potentials import PotentialSpec

if TYPE_CHECKING:
    from .dynamics_pde import TrajectoryLog

logger = logging.getLogger(__name__)

KL_FLOOR = 1e-12
DENSITY_FLOOR = 1e-300
DEFAULT_SUPPORT_FLOOR = 1e-14
EXP_CLAMP = 700.0
MIN_FIT_SAMPLES = 5


@dataclass
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    window: Tuple[float, float]
    samples: int

    def to_dict(self) -> Dict:
        return {
            "rate": self.rate,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "samples": self.samples,
        }


# --------------------------------------------------------------------------- #
# Relative entropy
# --------------------------------------------------------------------------- #
def kl_divergence(rho: Field, rho_inf: Field) -> float:
    """sum rho log(rho / rho_inf) h^d with 0 log 0 = 0."""
    r, q = rho.values, rho_inf.values
    live = r >= DENSITY_FLOOR
    orphan = live & ~(q > 0)
    if np.any(orphan):
        cell = tuple(int(i) for i in np.argwhere(orphan)[0])
        raise SupportViolationError(f"rho is positive where rho_inf underflows (cell {cell})")
    terms = np.zeros_like(r)
    terms[live] = r[live] * np.log(r[live] / q[live])
    kl = float(np.sum(terms) * rho.grid.cell_volume)
    if kl < 0.0:
        logger.debug("kl %.3e below zero from discretisation; reported as 0", kl)
        return 0.0
    return kl


# --------------------------------------------------------------------------- #
# Stein force and dissipations
# --------------------------------------------------------------------------- #
def guard_exponent(exponent: np.ndarray, rho: np.ndarray, support_floor: float) -> np.ndarray:
    """Clamp a log-space factor at EXP_CLAMP; abort if the clamp reaches the support."""
    hot = (exponent > EXP_CLAMP) & (rho > support_floor)
    if np.any(hot):
        cell = tuple(int(i) for i in np.argwhere(hot)[0])
        raise SolverError("weight exponent clamped inside the support of rho", cell=cell)
    return np.minimum(exponent, EXP_CLAMP)


def stein_force(
    rho: Field,
    potential: PotentialSpec,
    weighted: bool = False,
    unit_weight: bool = False,
    support_floor: float = DEFAULT_SUPPORT_FLOOR,
) -> np.ndarray:
    """G = grad rho + rho grad V (times w when weighted), shape (d,) + grid.shape.

    Where rho and its stencil neighbours are positive G is taken as
    rho grad(log rho + V), which vanishes identically on the discrete
    equilibrium.
    """
    grid = rho.grid
    h = grid.spacing
    pts = grid.points()
    v = potential.V(pts)
    grad_v = potential.gradV(pts)
    r = rho.values
    pos = r > 0
    phi = np.where(pos, np.log(np.where(pos, r, 1.0)) + v, 0.0)
    comps = []
    for a in range(grid.dimension):
        stencil = pos & np.roll(pos, 1, axis=a) & np.roll(pos, -1, axis=a)
        log_form = r * np.gradient(phi, h, axis=a, edge_order=1)
        plain = np.gradient(r, h, axis=a, edge_order=1) + r * grad_v[..., a]
        comps.append(np.where(stencil, log_form, plain))
    force = np.stack(comps)
    if weighted and not unit_weight:
        lw = guard_exponent(log_weight(potential, pts), r, support_floor)
        force = force * np.exp(lw)
    return force


def _omega_field(kernel: KernelSpec, sigma: Optional[float], grid, omega: Optional[Field]) -> Field:
    if omega is not None:
        return omega
    spec = kernel if sigma is None else kernel.with_bandwidth(sigma)
    return sample_on_grid(spec, grid, "omega")


def mollify(force: np.ndarray, omega: Field) -> np.ndarray:
    """omega * G_a for each component."""
    return np.stack([convolve(Field(omega.grid, comp), omega).values for comp in force])


def _sq_norm(values: np.ndarray, grid) -> float:
    return float(np.sum(values ** 2) * grid.cell_volume)


def dissipation_weighted(
    rho: Field,
    sigma: Optional[float],
    kernel: KernelSpec,
    potential: PotentialSpec,
    omega: Optional[Field] = None,
) -> float:
    force = stein_force(rho, potential, weighted=True)
    return _sq_norm(mollify(force, _omega_field(kernel, sigma, rho.grid, omega)), rho.grid)


def dissipation_plain(
    rho: Field,
    sigma: Optional[float],
    kernel: KernelSpec,
    potential: PotentialSpec,
    omega: Optional[Field] = None,
) -> float:
    force = stein_force(rho, potential)
    return _sq_norm(mollify(force, _omega_field(kernel, sigma, rho.grid, omega)), rho.grid)


def dissipation_local(rho: Field, potential: PotentialSpec, weighted: bool = False) -> float:
    return _sq_norm(stein_force(rho, potential, weighted=weighted), rho.grid)


def dissipation_quadratic_form(
    rho: Field,
    sigma: Optional[float],
    kernel: KernelSpec,
    potential: PotentialSpec,
    weighted: bool = True,
    composed: bool = True,
) -> float:
    """int G . (k_sigma * G) with a single convolution.

    ``composed`` builds the discrete k_sigma as omega * omega on the node
    lattice; otherwise the independently sampled k_sigma is used, which
    differs from the factorised path by the kernel sampling error.
    """
    spec = kernel if sigma is None else kernel.with_bandwidth(sigma)
    grid = rho.grid
    if composed:
        omega = sample_on_grid(spec, grid, "omega")
        k_field = convolve(omega, omega)
    else:
        k_field = sample_on_grid(spec, grid, "k")
    force = stein_force(rho, potential, weighted=weighted)
    smoothed = mollify(force, k_field)
    return float(np.sum(force * smoothed) * grid.cell_volume)


# --------------------------------------------------------------------------- #
# Transport distance
# --------------------------------------------------------------------------- #
def w1_distance_1d(mu: Field, nu: Field) -> float:
    """int |F_mu - F_nu| dx from cumulative sums."""
    if mu.grid.dimension != 1 or nu.grid.dimension != 1:
        raise ValueError("w1_distance_1d needs one-dimensional fields")
    if mu.grid != nu.grid:
        raise ValueError("fields live on different grids")
    h = mu.grid.spacing
    cdf_gap = np.cumsum(mu.values - nu.values) * h
    return float(np.sum(np.abs(cdf_gap)) * h)


def l1_distance(mu: Field, nu: Field) -> float:
    return float(np.sum(np.abs(mu.values - nu.values)) * mu.grid.cell_volume)


def transport_distance(mu: Field, nu: Field) -> float:
    """W1 in one dimension, L1 distance otherwise."""
    if mu.grid.dimension == 1:
        return w1_distance_1d(mu, nu)
    return l1_distance(mu, nu)


# --------------------------------------------------------------------------- #
# Trajectory checks
# --------------------------------------------------------------------------- #
def entropy_identity_residual(log: "TrajectoryLog") -> float:
    """max_k |dKL/dt + D^2_mid| / max(D^2_mid, 1e-8) over recorded intervals."""
    t = np.asarray(log.times, dtype=float)
    kl = np.asarray(log.kl, dtype=float)
    diss = np.asarray(log.dissipation, dtype=float)
    if t.size < 3 or np.any(~np.isfinite(diss)):
        raise InsufficientSamplesError("entropy identity needs >= 3 samples with dissipation")
    rate = np.diff(kl) / np.diff(t)
    mid = 0.5 * (diss[1:] + diss[:-1])
    return float(np.max(np.abs(rate + mid) / np.maximum(mid, 1e-8)))


def w1_transport_margin(log: "TrajectoryLog") -> float:
    """min_k [ int ||F||_1 dt - W1(rho_k, rho_{k+1}) ] over consecutive snapshots."""
    if len(log.snapshots) < 2:
        raise InsufficientSamplesError("transport margin needs at least two snapshots")
    margins = []
    for k in range(1, len(log.snapshots)):
        moved = transport_distance(log.snapshots[k - 1], log.snapshots[k])
        margins.append(log.transport[k] - moved)
    return float(min(margins))


def kl_monotonicity_violation(kls: Sequence[float], tolerance: float = 1e-9) -> float:
    """Largest increase between consecutive KL samples beyond tolerance (0 if none)."""
    rises = np.diff(np.asarray(kls, dtype=float)) - tolerance
    return float(max(np.max(rises, initial=0.0), 0.0))


# --------------------------------------------------------------------------- #
# Functional inequalities and decay
# --------------------------------------------------------------------------- #
def slsi_ratio(
    rho: Field,
    rho_inf: Field,
    sigma: Optional[float],
    kernel: Optional[KernelSpec],
    potential: PotentialSpec,
) -> float:
    """D^2 / KL; the local weighted dissipation is used when no kernel is given."""
    kl = kl_divergence(rho, rho_inf)
    if kl <= KL_FLOOR:
        raise ValueError(f"KL {kl:.3e} is at the floor {KL_FLOOR:g}; ratio undefined")
    if kernel is None:
        diss = dissipation_local(rho, potential, weighted=True)
    else:
        diss = dissipation_weighted(rho, sigma, kernel, potential)
    return diss / kl


def fit_decay_rate(times: Sequence[float], kls: Sequence[float]) -> DecayFit:
    """Least-squares line through (t, log KL) on samples above the KL floor."""
    t = np.asarray(times, dtype=float)
    kl = np.asarray(kls, dtype=float)
    keep = kl > KL_FLOOR
    if int(np.sum(keep)) < MIN_FIT_SAMPLES:
        raise InsufficientSamplesError(
            f"decay fit needs >= {MIN_FIT_SAMPLES} samples above {KL_FLOOR:g}, got {int(np.sum(keep))}"
        )
    t, y = t[keep], np.log(kl[keep])
    if np.ptp(y) == 0.0:
        return DecayFit(0.0, float(y[0]), 1.0, (float(t[0]), float(t[-1])), int(t.size))
    fit = linregress(t, y)
    rate = -float(fit.slope)
    if rate < 0:
        logger.warning("KL grows over the fit window (slope %.4g); rate reported as 0", fit.slope)
        rate = 0.0
    r2 = min(max(float(fit.rvalue) ** 2, 0.0), 1.0)
    return DecayFit(rate, float(fit.intercept), r2, (float(t[0]), float(t[-1])), int(t.size))


def commutator_norm(
    f: Field, chi: Field, sigma: Optional[float], kernel: KernelSpec, omega: Optional[Field] = None
) -> float:
    """|| (f chi) * omega_sigma - chi (f * omega_sigma) ||_{L^2}."""
    omega = _omega_field(kernel, sigma, f.grid, omega)
    inside = convolve(f.like(f.values * chi.values), omega).values
    outside = chi.values * convolve(f, omega).values
    return float(np.sqrt(_sq_norm(inside - outside, f.grid)))


def commutator_ratio(
    f: Field, chi: Field, sigma: Optional[float], kernel: KernelSpec, omega: Optional[Field] = None
) -> float:
    """|| (f chi) * omega_sigma || / || chi (f * omega_sigma) ||."""
    omega = _omega_field(kernel, sigma, f.grid, omega)
    inside = convolve(f.like(f.values * chi.values), omega).values
    outside = chi.values * convolve(f, omega).values
    denom = np.sqrt(_sq_norm(outside, f.grid))
    if denom == 0.0:
        raise ValueError("chi (f * omega) vanishes; ratio undefined")
    return float(np.sqrt(_sq_norm(inside, f.grid)) / denom)


def moment_norm_check(rho: Field, r: float, sigma: float, kernel: KernelSpec) -> Tuple[float, float]:
    """(||rho * (|y|^r omega_sigma)||_2, sigma^(r - d/2) ||rho||_1 |||x|^r omega||_2)."""
    d = rho.grid.dimension
    if r < d / 2.0:
        raise ValueError(f"moment power {r} is below d/2")
    spec = kernel.with_bandwidth(sigma)
    moment_kernel = sample_moment_kernel(spec, rho.grid, r)
    measured = np.sqrt(_sq_norm(convolve(rho, moment_kernel).values, rho.grid))
    base_norm = moment_l2(kernel.with_bandwidth(1.0), r)
    if not np.isfinite(base_norm):
        raise ValueError(f"|x|^{r} omega is not square integrable")
    bound = sigma ** (r - d / 2.0) * float(np.sum(np.abs(rho.values)) * rho.grid.cell_volume) * base_norm
    return float(measured), float(bound)


def _on_grid(rho: Field, grid: Optional[Grid]) -> None:
    if grid is not None and grid != rho.grid:
        raise GridMismatchError(f"field lives on {rho.grid}, check requested on {grid}")


def neg_log_bound_check(rho: Field, potential: PotentialSpec, grid: Optional[Grid] = None) -> float:
    """min over cells of 1/2 rho log rho + rho V + exp(-V)/e; nonnegative for V >= 0."""
    _on_grid(rho, grid)
    r = rho.values
    v = potential.V(rho.grid.points())
    xlogx = np.zeros_like(r)
    pos = r > 0
    xlogx[pos] = r[pos] * np.log(r[pos])
    return float(np.min(0.5 * xlogx + r * v + np.exp(-v - 1.0)))


def abs_entropy_bound_check(
    rho: Field, potential: PotentialSpec, grid: Optional[Grid] = None
) -> Tuple[float, float]:
    """(1/4 int rho |log rho|, 1/4 int rho log rho + int rho V + (1/e) int exp(-V))."""
    _on_grid(rho, grid)
    r = rho.values
    v = potential.V(rho.grid.points())
    xlogx = np.zeros_like(r)
    pos = r > 0
    xlogx[pos] = r[pos] * np.log(r[pos])
    vol = rho.grid.cell_volume
    measured = 0.25 * float(np.sum(np.abs(xlogx)) * vol)
    bound = float((0.25 * np.sum(xlogx) + np.sum(r * v) + np.sum(np.exp(-v - 1.0))) * vol)
    return measured, bound


# --------------------------------------------------------------------------- #
# Row emitter
# --------------------------------------------------------------------------- #
def inputs_digest(inputs: Dict) -> str:
    blob = json.dumps(inputs, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def diagnostic_row(name: str, inputs: Dict, value: float) -> Dict:
    """One CSV row: diagnostic name, digest of its inputs, value."""
    return {"name": name, "inputs_digest": inputs_digest(inputs), "value": value}
