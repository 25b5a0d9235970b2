"""Explicit conservative finite-volume solvers for the four mean-field equations.

Every variant is written as a continuity equation d/dt rho = div F with F
stored on cell faces. Faces on the box boundary carry zero flux, so

    rho_i' = rho_i + dt * sum_a (F_{i+1/2} - F_{i-1/2}) / h

conserves mass to roundoff. Nonlocal variants transport rho (or rho w)
with u = omega * (omega * G) upwinded by the sign of u. Local variants use
the centred degenerate diffusion grad(rho^2 / 2) plus a log-mean drift
mobility, so the discrete equilibrium is an exact steady state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .diagnostics import (
    DEFAULT_SUPPORT_FLOOR,
    dissipation_local,
    dissipation_plain,
    dissipation_weighted,
    guard_exponent,
    kl_divergence,
    mollify,
    stein_force,
)
from .errors import SolverError
from .grid import Field, Grid
from .kernels import KernelSpec, log_weight, sample_on_grid
from .potentials import PotentialSpec, entropy_functional, rho_infinity

logger = logging.getLogger(__name__)

PDE_VARIANTS = ("nonlocal_plain", "nonlocal_weighted", "local_plain", "local_weighted")

POSITIVITY_ABORT = -1e-12
BOUNDARY_FLUX_WARN = 1e-8


@dataclass(frozen=True)
class PDEVariant:
    tag: str
    sigma: Optional[float] = None

    def __post_init__(self) -> None:
        if self.tag not in PDE_VARIANTS:
            raise ValueError(f"unknown variant {self.tag!r}; expected one of {PDE_VARIANTS}")
        if self.is_local and self.sigma is not None:
            raise ValueError(f"{self.tag} takes no bandwidth")
        if not self.is_local and (self.sigma is None or not 0.0 < self.sigma <= 1.0):
            raise ValueError(f"{self.tag} needs sigma in (0, 1], got {self.sigma}")

    @property
    def is_local(self) -> bool:
        return self.tag.startswith("local")

    @property
    def is_weighted(self) -> bool:
        return self.tag.endswith("weighted")

    @property
    def label(self) -> str:
        return self.tag if self.is_local else f"{self.tag}(sigma={self.sigma:g})"

    def to_dict(self) -> Dict:
        return {"tag": self.tag, "sigma": self.sigma}


@dataclass
class SolverConfig:
    variant: PDEVariant
    end_time: float
    cfl: float = 0.25
    stride: int = 10
    support_floor: float = DEFAULT_SUPPORT_FLOOR
    max_steps: int = 2_000_000
    snapshots: bool = False

    def __post_init__(self) -> None:
        if not self.end_time > 0:
            raise ValueError("end_time must be positive")
        if not 0.0 < self.cfl < 1.0:
            raise ValueError("cfl must lie in (0, 1)")
        if self.stride < 1 or self.max_steps < 1:
            raise ValueError("stride and max_steps must be >= 1")


@dataclass
class FaceFlux:
    """Face fluxes per axis; faces[a] has n + 1 entries along axis a."""

    grid: Grid
    faces: Tuple[np.ndarray, ...]
    max_speed: float = 0.0
    stiffness: Optional[float] = None

    def divergence(self) -> np.ndarray:
        h = self.grid.spacing
        return sum(np.diff(f, axis=a) for a, f in enumerate(self.faces)) / h

    def l1(self) -> float:
        return float(sum(np.sum(np.abs(f)) for f in self.faces) * self.grid.cell_volume)

    def interior(self, axis: int = 0) -> np.ndarray:
        n = self.grid.cells
        return np.take(self.faces[axis], np.arange(1, n), axis=axis)

    def boundary_magnitude(self) -> float:
        n = self.grid.cells
        edge = [np.abs(np.take(f, [1, n - 1], axis=a)) for a, f in enumerate(self.faces)]
        return float(max(np.max(e) for e in edge))


@dataclass
class TrajectoryLog:
    variant: str
    times: List[float] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    min_rho: List[float] = field(default_factory=list)
    kl: List[float] = field(default_factory=list)
    dissipation: List[float] = field(default_factory=list)
    transport: List[float] = field(default_factory=list)
    boundary_flux: List[float] = field(default_factory=list)
    snapshots: List[Field] = field(default_factory=list)
    final_state: Optional[Field] = None
    steps: int = 0

    def record(self, t: float, rho: Field, kl: float, dissipation: float,
               transport: float, boundary: float, keep: bool) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError("trajectory times must be strictly increasing")
        self.times.append(t)
        self.mass.append(rho.mass())
        self.min_rho.append(float(np.min(rho.values)))
        self.kl.append(kl)
        self.dissipation.append(dissipation)
        self.transport.append(transport)
        self.boundary_flux.append(boundary)
        if keep:
            self.snapshots.append(rho)

    def rows(self) -> List[Dict]:
        return [
            {"time": t, "mass": m, "min_rho": r, "kl": k, "dissipation": d, "transport": tr}
            for t, m, r, k, d, tr in zip(
                self.times, self.mass, self.min_rho, self.kl, self.dissipation, self.transport
            )
        ]

    def to_dict(self) -> Dict:
        return {
            "variant": self.variant,
            "samples": len(self.times),
            "steps": self.steps,
            "end_time": self.times[-1] if self.times else None,
            "kl_initial": self.kl[0] if self.kl else None,
            "kl_final": self.kl[-1] if self.kl else None,
            "max_mass_drift": max(abs(m - self.mass[0]) for m in self.mass) if self.mass else None,
            "min_rho": min(self.min_rho) if self.min_rho else None,
            "max_boundary_flux": max(self.boundary_flux) if self.boundary_flux else None,
        }


# --------------------------------------------------------------------------- #
# Face helpers
# --------------------------------------------------------------------------- #
def _left(values: np.ndarray, axis: int) -> np.ndarray:
    return np.take(values, np.arange(values.shape[axis] - 1), axis=axis)


def _right(values: np.ndarray, axis: int) -> np.ndarray:
    return np.take(values, np.arange(1, values.shape[axis]), axis=axis)


def _with_boundary(interior: np.ndarray, axis: int) -> np.ndarray:
    pad = [(0, 0)] * interior.ndim
    pad[axis] = (1, 1)
    return np.pad(interior, pad)


def log_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a - b) / (log a - log b), as sqrt(ab) sinh(s)/s with s = log(a/b)/2; 0 if either is 0."""
    out = np.zeros(np.broadcast(a, b).shape)
    pos = (a > 0) & (b > 0)
    la, lb = np.log(a[pos]), np.log(b[pos])
    s = 0.5 * (la - lb)
    small = np.abs(s) < 1e-8
    ratio = np.ones_like(s)
    ratio[~small] = np.sinh(s[~small]) / s[~small]
    out[pos] = np.exp(0.5 * (la + lb)) * ratio
    return out


def kernel_stiffness(omega: Field) -> float:
    """max_xi |hat omega(xi)|^2 |2 pi xi|^2 over the discrete frequencies."""
    grid = omega.grid
    spectrum = np.abs(np.fft.fftn(np.fft.ifftshift(omega.values)) * grid.cell_volume) ** 2
    freq = np.fft.fftfreq(grid.cells, d=grid.spacing)
    mesh = np.meshgrid(*([freq] * grid.dimension), indexing="ij")
    wave = sum((2.0 * np.pi * m) ** 2 for m in mesh)
    return float(np.max(spectrum * wave))


def _omega_of(kernel: Union[KernelSpec, Field], grid: Grid) -> Field:
    if isinstance(kernel, Field):
        return kernel
    return sample_on_grid(kernel, grid, "omega")


def _check_finite(faces: List[np.ndarray], what: str) -> None:
    for f in faces:
        bad = ~np.isfinite(f)
        if np.any(bad):
            cell = tuple(int(i) for i in np.argwhere(bad)[0])
            raise SolverError(f"non-finite {what} flux", cell=cell)


# --------------------------------------------------------------------------- #
# Fluxes
# --------------------------------------------------------------------------- #
def _nonlocal_flux(rho: Field, omega: Field, potential: PotentialSpec, weighted: bool,
                   support_floor: float) -> FaceFlux:
    grid = rho.grid
    force = stein_force(rho, potential, weighted=weighted, support_floor=support_floor)
    u = mollify(mollify(force, omega), omega)
    carrier = rho.values
    speed = np.abs(u)
    if weighted:
        w = np.exp(guard_exponent(log_weight(potential, grid.points()), rho.values, support_floor))
        carrier = rho.values * w
        speed = speed * w
    live = rho.values > support_floor
    faces = []
    for a in range(grid.dimension):
        u_face = 0.5 * (_left(u[a], a) + _right(u[a], a))
        c_face = np.where(u_face < 0, _left(carrier, a), _right(carrier, a))
        faces.append(_with_boundary(c_face * u_face, a))
    _check_finite(faces, "nonlocal")
    max_speed = float(np.max(np.where(live, np.max(speed, axis=0), 0.0), initial=0.0))
    return FaceFlux(grid, tuple(faces), max_speed, kernel_stiffness(omega))


def flux_nonlocal_plain(
    rho: Field,
    kernel: Union[KernelSpec, Field],
    potential: PotentialSpec,
    support_floor: float = DEFAULT_SUPPORT_FLOOR,
) -> FaceFlux:
    """F = rho_up * (omega * omega * (grad rho + rho grad V)) on faces."""
    return _nonlocal_flux(rho, _omega_of(kernel, rho.grid), potential, False, support_floor)


def flux_nonlocal_weighted(
    rho: Field,
    kernel: Union[KernelSpec, Field],
    potential: PotentialSpec,
    unit_weight: bool = False,
    support_floor: float = DEFAULT_SUPPORT_FLOOR,
) -> FaceFlux:
    """F = (rho w)_up * (omega * omega * ((grad rho + rho grad V) w)) on faces."""
    return _nonlocal_flux(rho, _omega_of(kernel, rho.grid), potential, not unit_weight, support_floor)


def _local_flux(rho: Field, potential: PotentialSpec, weighted: bool, support_floor: float) -> FaceFlux:
    grid = rho.grid
    h = grid.spacing
    pts = grid.points()
    r = rho.values
    v = potential.V(pts)
    sq = r * r
    mult_log = 2.0 * log_weight(potential, pts) if weighted else None
    faces = []
    for a in range(grid.dimension):
        sl, sr = _left(sq, a), _right(sq, a)
        flux = (0.5 * (sr - sl) + log_mean(sl, sr) * (_right(v, a) - _left(v, a))) / h
        if weighted:
            expo = 0.5 * (_left(mult_log, a) + _right(mult_log, a))
            face_rho = np.maximum(_left(r, a), _right(r, a))
            flux = flux * np.exp(guard_exponent(expo, face_rho, support_floor))
        faces.append(_with_boundary(flux, a))
    _check_finite(faces, "local")
    speed = 2.0 * r * np.linalg.norm(potential.gradV(pts), axis=-1)
    if weighted:
        speed = speed * np.exp(np.minimum(mult_log, 700.0))
    speed = np.where(r > support_floor, speed, 0.0)
    return FaceFlux(grid, tuple(faces), float(np.max(speed, initial=0.0)))


def flux_local_plain(rho: Field, potential: PotentialSpec) -> FaceFlux:
    """F = rho^2 grad(log rho + V) = grad(rho^2 / 2) + rho^2 grad V."""
    return _local_flux(rho, potential, False, DEFAULT_SUPPORT_FLOOR)


def flux_local_weighted(
    rho: Field,
    potential: PotentialSpec,
    unit_multiplier: bool = False,
    support_floor: float = DEFAULT_SUPPORT_FLOOR,
) -> FaceFlux:
    """F = exp(2V - Vm) rho^2 grad(log rho + V); the multiplier is taken at faces."""
    return _local_flux(rho, potential, not unit_multiplier, support_floor)


def compute_flux(variant: PDEVariant, rho: Field, potential: PotentialSpec,
                 omega: Optional[Field] = None,
                 support_floor: float = DEFAULT_SUPPORT_FLOOR) -> FaceFlux:
    if variant.tag == "local_plain":
        return _local_flux(rho, potential, False, support_floor)
    if variant.tag == "local_weighted":
        return _local_flux(rho, potential, True, support_floor)
    if omega is None:
        raise ValueError(f"{variant.tag} needs a sampled kernel")
    return _nonlocal_flux(rho, omega, potential, variant.is_weighted, support_floor)


# --------------------------------------------------------------------------- #
# Time stepping
# --------------------------------------------------------------------------- #
def diffusivity_bound(rho: Field, variant: PDEVariant, potential: PotentialSpec,
                      support_floor: float = DEFAULT_SUPPORT_FLOOR) -> float:
    """M: max rho, or max rho exp(2V - Vm) over the effective support for weighted variants."""
    r = rho.values
    if not variant.is_weighted:
        return float(max(np.max(r), 0.0))
    mult = np.exp(np.minimum(2.0 * log_weight(potential, rho.grid.points()), 700.0))
    return float(np.max(np.where(r > support_floor, r * mult, 0.0), initial=0.0))


def stable_dt(
    rho: Field,
    variant: PDEVariant,
    potential: PotentialSpec,
    remaining: float,
    cfl: float = 0.25,
    flux: Optional[FaceFlux] = None,
    support_floor: float = DEFAULT_SUPPORT_FLOOR,
) -> float:
    """cfl * min(2 / lambda_diff, h / (d max speed)), capped by the remaining time.

    lambda_diff = M * min(4d / h^2, kernel stiffness); for local variants this
    is the classical h^2 / (2 d M).
    """
    grid = rho.grid
    h, d = grid.spacing, grid.dimension
    m = diffusivity_bound(rho, variant, potential, support_floor)
    if flux is None:
        flux = compute_flux(variant, rho, potential, support_floor=support_floor) if variant.is_local else None
    speed = flux.max_speed if flux is not None else 0.0
    stiff = 4.0 * d / h ** 2
    if flux is not None and flux.stiffness is not None:
        stiff = min(stiff, flux.stiffness)
    candidates = [remaining]
    if m > 0:
        candidates.append(cfl * 2.0 / (m * stiff))
    if speed > 0:
        candidates.append(cfl * h / (d * speed))
    return float(min(candidates))


def step(rho: Field, flux: FaceFlux, dt: float, time: Optional[float] = None) -> Field:
    """Conservative update; tiny negatives are clamped with proportional renormalisation."""
    if flux.grid != rho.grid:
        raise ValueError("flux and density live on different grids")
    before = float(np.sum(rho.values))
    new = rho.values + dt * flux.divergence()
    if not np.all(np.isfinite(new)):
        cell = tuple(int(i) for i in np.argwhere(~np.isfinite(new))[0])
        raise SolverError("non-finite density after update", cell=cell, time=time)
    low = float(np.min(new))
    if low < POSITIVITY_ABORT:
        cell = tuple(int(i) for i in np.unravel_index(int(np.argmin(new)), new.shape))
        raise SolverError(f"density {low:.3e} below positivity floor", cell=cell, time=time)
    if low < 0.0:
        new = np.maximum(new, 0.0)
        after = float(np.sum(new))
        if after > 0:
            new *= before / after
    return rho.like(new)


def _validate_initial(rho0: Field, potential: PotentialSpec) -> None:
    if np.min(rho0.values) < 0:
        raise ValueError("initial density has negative cells")
    if abs(rho0.mass() - 1.0) > 1e-8:
        raise ValueError(f"initial density has mass {rho0.mass():.12f}, expected 1")
    if not np.isfinite(entropy_functional(rho0, potential)):
        raise ValueError("initial density has infinite entropy or potential energy")


def _dissipation(variant: PDEVariant, rho: Field, potential: PotentialSpec, omega: Optional[Field]) -> float:
    if variant.is_local:
        return dissipation_local(rho, potential, weighted=variant.is_weighted)
    if variant.is_weighted:
        return dissipation_weighted(rho, None, None, potential, omega=omega)
    return dissipation_plain(rho, None, None, potential, omega=omega)


def run(
    config: SolverConfig,
    rho0: Field,
    potential: PotentialSpec,
    kernel: Optional[KernelSpec] = None,
    rho_inf: Optional[Field] = None,
) -> TrajectoryLog:
    """Advance rho0 to config.end_time, recording every ``stride`` steps."""
    variant = config.variant
    grid = rho0.grid
    _validate_initial(rho0, potential)
    omega = None
    if not variant.is_local:
        if kernel is None:
            raise ValueError(f"{variant.tag} needs a kernel")
        omega = sample_on_grid(kernel.with_bandwidth(variant.sigma), grid, "omega")
    if rho_inf is None:
        rho_inf = rho_infinity(potential, grid)

    log = TrajectoryLog(variant.label)
    end = config.end_time
    t, rho, moved = 0.0, rho0, 0.0
    flux = compute_flux(variant, rho, potential, omega, config.support_floor)
    log.record(0.0, rho, kl_divergence(rho, rho_inf), _dissipation(variant, rho, potential, omega),
               0.0, flux.boundary_magnitude(), config.snapshots)
    logger.info("run %s on %s to T=%g", variant.label, grid.describe(), end)
    warned = False
    while end - t > 1e-12 * end:
        dt = stable_dt(rho, variant, potential, end - t, config.cfl, flux, config.support_floor)
        rho = step(rho, flux, dt, time=t)
        moved += dt * flux.l1()
        t = t + dt if end - (t + dt) > 1e-12 * end else end
        log.steps += 1
        if log.steps > config.max_steps:
            raise SolverError(f"step budget {config.max_steps} exhausted at t={t:.6g} (dt={dt:.3e})", time=t)
        flux = compute_flux(variant, rho, potential, omega, config.support_floor)
        if log.steps % config.stride == 0 or t >= end:
            boundary = flux.boundary_magnitude()
            if boundary > BOUNDARY_FLUX_WARN and not warned:
                logger.warning("boundary-adjacent flux %.3e at t=%.4g; box may be too small", boundary, t)
                warned = True
            kl = kl_divergence(rho, rho_inf)
            log.record(t, rho, kl, _dissipation(variant, rho, potential, omega), moved, boundary,
                       config.snapshots)
            logger.debug("t=%.5g kl=%.6e mass=%.15f", t, kl, log.mass[-1])
            moved = 0.0
    log.final_state = rho
    logger.info("run %s finished: %d steps, KL %.4e -> %.4e", variant.label, log.steps, log.kl[0], log.kl[-1])
    return log
