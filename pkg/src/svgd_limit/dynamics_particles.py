"""Interacting-particle SVGD: deterministic transport under the kernelised velocity.

    v_i = 1/N sum_j [ -K(x_i, x_j) grad V(x_j) + grad_y K(x_i, x_j) ]

with K = k_sigma(x - y) ("plain") or w(x) k_sigma(x - y) w(y) ("weighted").
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .grid import Field, Grid
from .kernels import KernelSpec, kernel_gradient, kernel_value, weighted_kernel
from .potentials import PotentialSpec

logger = logging.getLogger(__name__)

KERNEL_MODES = ("plain", "weighted")
_ROW_CHUNK = 512
_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValueError(f"positions must have shape (N, d) with N >= 1, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("particle positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def moved(self, displacement: np.ndarray) -> "ParticleEnsemble":
        return ParticleEnsemble(self.positions + displacement)

    def rows(self) -> List[Dict]:
        names = [f"x{a + 1}" for a in range(self.dimension)]
        return [
            {"particle": i, **{n: float(v) for n, v in zip(names, p)}}
            for i, p in enumerate(self.positions)
        ]


@dataclass
class ParticleTrajectory:
    mode: str
    dt: float
    times: List[float] = field(default_factory=list)
    ensembles: List[ParticleEnsemble] = field(default_factory=list)
    steps: int = 0

    @property
    def final(self) -> ParticleEnsemble:
        return self.ensembles[-1]

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "dt": self.dt,
            "steps": self.steps,
            "particles": self.final.size if self.ensembles else 0,
            "end_time": self.times[-1] if self.times else None,
        }


# --------------------------------------------------------------------------- #
# Velocity field
# --------------------------------------------------------------------------- #
def _pair_terms(xi: np.ndarray, xj: np.ndarray, mode: str, kernel: KernelSpec,
                potential: PotentialSpec) -> Tuple[np.ndarray, np.ndarray]:
    if mode == "weighted":
        return weighted_kernel(kernel, potential, xi[:, None, :], xj[None, :, :])
    diff = xi[:, None, :] - xj[None, :, :]
    return kernel_value(kernel, diff, "k"), -kernel_gradient(kernel, diff, "k")


def svgd_velocity(
    ens: ParticleEnsemble,
    mode: str,
    kernel: KernelSpec,
    potential: PotentialSpec,
) -> np.ndarray:
    """Velocities of shape (N, d); the score of rho_inf is -grad V exactly."""
    if mode not in KERNEL_MODES:
        raise ValueError(f"unknown kernel mode {mode!r}; expected one of {KERNEL_MODES}")
    if kernel.dimension != ens.dimension:
        raise ValueError("kernel and ensemble dimensions differ")
    x = ens.positions
    n = ens.size
    score = potential.gradV(x)
    out = np.empty_like(x)
    for start in range(0, n, _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, n)
        k, grad_y = _pair_terms(x[start:stop], x, mode, kernel, potential)
        out[start:stop] = -k @ score + grad_y.sum(axis=1)
    return out / n


def step_euler(
    ens: ParticleEnsemble,
    dt: float,
    mode: str = "plain",
    kernel: Optional[KernelSpec] = None,
    potential: Optional[PotentialSpec] = None,
    velocities: Optional[np.ndarray] = None,
) -> ParticleEnsemble:
    """x_i' = x_i + dt v_i."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if velocities is None:
        if kernel is None or potential is None:
            raise ValueError("step_euler needs velocities or a kernel and a potential")
        velocities = svgd_velocity(ens, mode, kernel, potential)
    return ens.moved(dt * velocities)


def default_dt(kernel: KernelSpec, potential: PotentialSpec, ens: ParticleEnsemble) -> float:
    """0.1 sigma^2 / max(1, max |grad V|) over the ensemble."""
    grad = np.linalg.norm(potential.gradV(ens.positions), axis=-1)
    return 0.1 * kernel.bandwidth ** 2 / max(1.0, float(np.max(grad)))


def simulate(
    ens: ParticleEnsemble,
    mode: str,
    kernel: KernelSpec,
    potential: PotentialSpec,
    end_time: float,
    dt: Optional[float] = None,
    stride: int = 10,
) -> ParticleTrajectory:
    """Euler steps to end_time, keeping the ensemble every ``stride`` steps and at the end."""
    if not end_time > 0:
        raise ValueError("end_time must be positive")
    dt = default_dt(kernel, potential, ens) if dt is None else dt
    traj = ParticleTrajectory(mode, dt, [0.0], [ens])
    t = 0.0
    logger.info("particles: N=%d mode=%s sigma=%g dt=%.3e T=%g", ens.size, mode, kernel.bandwidth, dt, end_time)
    while end_time - t > 1e-12 * end_time:
        h = min(dt, end_time - t)
        ens = step_euler(ens, h, mode, kernel, potential)
        t += h
        traj.steps += 1
        if traj.steps % stride == 0 or end_time - t <= 1e-12 * end_time:
            traj.times.append(t)
            traj.ensembles.append(ens)
    return traj


# --------------------------------------------------------------------------- #
# Densities from particles and particles from densities
# --------------------------------------------------------------------------- #
def kde_density(ens: ParticleEnsemble, bandwidth: float, grid: Grid) -> Field:
    """Gaussian kernel density estimate on the cell centres, renormalised on the box."""
    if bandwidth < grid.spacing:
        raise ValueError(f"bandwidth {bandwidth:g} is below the grid spacing {grid.spacing:g}")
    if ens.dimension != grid.dimension:
        raise ValueError("ensemble and grid dimensions differ")
    pts = grid.points().reshape(-1, grid.dimension)
    acc = np.zeros(pts.shape[0])
    for start in range(0, ens.size, _ROW_CHUNK):
        chunk = ens.positions[start:start + _ROW_CHUNK]
        sq = np.sum((pts[:, None, :] - chunk[None, :, :]) ** 2, axis=-1)
        acc += np.exp(-0.5 * sq / bandwidth ** 2).sum(axis=1)
    values = acc.reshape(grid.shape)
    if not np.sum(values) > 0:
        raise ValueError("every particle lies outside the box")
    return Field(grid, values).normalized()


def _inverse_cdf(values: np.ndarray, edges: np.ndarray, levels: np.ndarray) -> np.ndarray:
    cdf = np.concatenate([[0.0], np.cumsum(values)])
    cdf /= cdf[-1]
    # strictly increasing abscissa for interp: drop empty cells
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(levels, cdf[keep], edges[keep])


def initialize_inverse_cdf(rho: Field, count: int) -> ParticleEnsemble:
    """Deterministic stratified quantiles; d = 2 stratifies x1 and draws x2 from row conditionals."""
    if count < 1:
        raise ValueError("count must be >= 1")
    grid = rho.grid
    edges = -grid.half_width + np.arange(grid.cells + 1) * grid.spacing
    levels = (np.arange(count) + 0.5) / count
    if np.any(rho.values < 0) or not np.sum(rho.values) > 0:
        raise ValueError("initialisation needs a nonnegative density with positive mass")
    if grid.dimension == 1:
        return ParticleEnsemble(_inverse_cdf(rho.values, edges, levels)[:, None])
    x1 = _inverse_cdf(rho.values.sum(axis=1), edges, levels)
    rows = np.clip(((x1 + grid.half_width) / grid.spacing).astype(int), 0, grid.cells - 1)
    second = (np.arange(count) * _GOLDEN + 0.5) % 1.0
    x2 = np.empty(count)
    for row in np.unique(rows):
        sel = rows == row
        x2[sel] = _inverse_cdf(rho.values[row], edges, second[sel])
    return ParticleEnsemble(np.stack([x1, x2], axis=1))


def initialize_random(rho: Field, count: int, seed: int = 0) -> ParticleEnsemble:
    """Seeded draws: a cell by its mass, then a uniform point inside it."""
    if count < 1:
        raise ValueError("count must be >= 1")
    grid = rho.grid
    rng = np.random.default_rng(seed)
    prob = np.clip(rho.values.ravel(), 0.0, None)
    prob = prob / prob.sum()
    cells = rng.choice(prob.size, size=count, p=prob)
    idx = np.stack(np.unravel_index(cells, grid.shape), axis=1)
    lower = -grid.half_width + idx * grid.spacing
    return ParticleEnsemble(lower + rng.uniform(0.0, grid.spacing, size=lower.shape))
