"""Uniform grids on [-L, L]^d, fields on them, and linear FFT convolution.

Two sample lattices share one ``Grid``:

  * ``"cell"``: cell centers x_i = -L + (i + 1/2) h. Densities live here.
  * ``"node"``: z_i = (i - n/2) h. Contains the origin at index n/2, so
    kernels (which are singular or peaked at 0) are sampled here.

``convolve`` tracks which lattice each operand sits on and slices the full
linear convolution so the result is the midpoint rule for
int f(x - y) g(y) dy evaluated at the result's own sample points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .errors import GridMismatchError

logger = logging.getLogger(__name__)

CENTERINGS = ("cell", "node")


@dataclass(frozen=True)
class Grid:
    dimension: int
    half_width: float
    cells: int

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        n = self.cells
        if n < 8 or n & (n - 1):
            raise ValueError(f"cells must be a power of two >= 8, got {n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.cells

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dimension

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.cells,) * self.dimension

    def axis(self, centering: str = "cell") -> np.ndarray:
        h, n = self.spacing, self.cells
        if centering == "cell":
            return -self.half_width + (np.arange(n) + 0.5) * h
        if centering == "node":
            return (np.arange(n) - n // 2) * h
        raise ValueError(f"unknown centering {centering!r}")

    def points(self, centering: str = "cell") -> np.ndarray:
        """Sample points with shape ``grid.shape + (d,)``."""
        ax = self.axis(centering)
        mesh = np.meshgrid(*([ax] * self.dimension), indexing="ij")
        return np.stack(mesh, axis=-1)

    def radius(self, centering: str = "cell") -> np.ndarray:
        return np.linalg.norm(self.points(centering), axis=-1)

    def describe(self) -> dict:
        return {
            "dimension": self.dimension,
            "half_width": self.half_width,
            "cells": self.cells,
            "spacing": self.spacing,
        }


@dataclass(frozen=True)
class Field:
    grid: Grid
    values: np.ndarray
    centering: str = "cell"

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridMismatchError(
                f"values shape {values.shape} does not match grid {self.grid.shape}"
            )
        if self.centering not in CENTERINGS:
            raise ValueError(f"unknown centering {self.centering!r}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(
        cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray], centering: str = "cell"
    ) -> "Field":
        return cls(grid, fn(grid.points(centering)), centering)

    @classmethod
    def zeros(cls, grid: Grid, centering: str = "cell") -> "Field":
        return cls(grid, np.zeros(grid.shape), centering)

    def like(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.centering)

    def mass(self) -> float:
        return integrate(self)

    def normalized(self) -> "Field":
        return self.like(self.values / integrate(self))


def integrate(f: Field) -> float:
    return float(np.sum(f.values) * f.grid.cell_volume)


def l1_norm(f: Field) -> float:
    return float(np.sum(np.abs(f.values)) * f.grid.cell_volume)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(np.sum(f.values ** 2) * f.grid.cell_volume))


def gradient(f: Field) -> Tuple[Field, ...]:
    """Central differences inside, one-sided on the boundary cells."""
    h = f.grid.spacing
    if f.grid.dimension == 1:
        return (f.like(np.gradient(f.values, h, edge_order=1)),)
    return tuple(
        f.like(np.gradient(f.values, h, axis=a, edge_order=1))
        for a in range(f.grid.dimension)
    )


def _offset(f: Field, g: Field) -> Tuple[int, str]:
    n = f.grid.cells
    if f.centering == "cell" and g.centering == "cell":
        return n // 2 - 1, "node"
    if f.centering == "node" and g.centering == "node":
        return n // 2, "node"
    return n // 2, "cell"


def convolve(f: Field, g: Field) -> Field:
    """Zero-padded convolution, scaled by h^d.

    The full linear convolution has 2n - 1 entries per axis; the window
    kept is the one whose entries correspond to the result lattice.
    """
    if f.grid != g.grid:
        raise GridMismatchError(f"cannot convolve fields on {f.grid} and {g.grid}")
    offset, centering = _offset(f, g)
    n = f.grid.cells
    full = fftconvolve(f.values, g.values, mode="full")
    window = tuple(slice(offset, offset + n) for _ in range(f.grid.dimension))
    return Field(f.grid, full[window] * f.grid.cell_volume, centering)


def convolve_direct(f: Field, g: Field) -> Field:
    """O(n^2) reference for ``convolve`` (d=1 only)."""
    if f.grid != g.grid:
        raise GridMismatchError(f"cannot convolve fields on {f.grid} and {g.grid}")
    if f.grid.dimension != 1:
        raise ValueError("direct convolution is only provided for d=1")
    offset, centering = _offset(f, g)
    n = f.grid.cells
    out = np.zeros(n)
    for k in range(n):
        acc = 0.0
        for j in range(n):
            idx = k + offset - j
            if 0 <= idx < n:
                acc += f.values[j] * g.values[idx]
        out[k] = acc
    return Field(f.grid, out * f.grid.spacing, centering)


def delta(grid: Grid) -> Field:
    """Unit mass on the origin node."""
    values = np.zeros(grid.shape)
    values[(grid.cells // 2,) * grid.dimension] = 1.0 / grid.cell_volume
    return Field(grid, values, "node")


def _smooth_step(t: np.ndarray) -> np.ndarray:
    # C-infinity step: 0 for t <= 0, 1 for t >= 1
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def cutoff(grid: Grid, radius: float, centering: str = "cell") -> Field:
    """chi_R: equal to 1 on B_R, 0 outside B_2R, smooth in between."""
    if radius <= 0:
        raise ValueError("cutoff radius must be positive")
    r = grid.radius(centering)
    return Field(grid, 1.0 - _smooth_step(r / radius - 1.0), centering)
