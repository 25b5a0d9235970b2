"""Experiment configuration: a flat JSON object merged over documented defaults.

Precedence is defaults < file < command-line overrides. Unknown keys, wrong
types and violated invariants raise ``ConfigError``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from ..errors import ConfigError
from ..kernels import KERNEL_BASES
from ..potentials import INITIAL_KINDS, POTENTIALS

EXPERIMENTS = (
    "kernel-check",
    "simulate-pde",
    "simulate-particles",
    "sweep-sigma",
    "decay-study",
    "particle-vs-pde",
    "diagnose",
)
FAMILIES = ("plain", "weighted")
INIT_MODES = ("inverse_cdf", "random")

# experiments whose sigma list is a ladder and must strictly decrease
_LADDER_EXPERIMENTS = ("sweep-sigma", "decay-study", "kernel-check")

# key -> (default, description); None defaults mean "chosen from the other keys"
DEFAULT_CONFIG: Dict[str, tuple] = {
    "experiment": ("sweep-sigma", "one of " + ", ".join(EXPERIMENTS)),
    "variant": ("plain", "equation family: plain or weighted"),
    "local": (False, "simulate-pde: run the local limit instead of sigmas[0]"),
    "potential": (None, "benchmark potential; null = quartic (plain) or cosine (weighted)"),
    "kernel_base": ("bessel", "bessel or gaussian"),
    "dimension": (1, "1 or 2"),
    "half_width": (None, "box half width L; null = smallest doubling with tail mass < 1e-10"),
    "cells": (2048, "cells per axis, a power of two"),
    "sigmas": ([0.4, 0.2, 0.1, 0.05], "bandwidths; experiments with one sigma use the first"),
    "end_time": (0.5, "final time T"),
    "cfl": (0.25, "safety factor of the explicit time step"),
    "stride": (10, "record a trajectory sample every stride steps"),
    "max_steps": (2_000_000, "step budget of one PDE run"),
    "initial": (None, "initial datum; null = bump (plain) or tilted (weighted)"),
    "initial_center": (1.0, "center of the bump / tilt"),
    "initial_width": (0.5, "width of the bump"),
    "initial_amplitude": (0.5, "amplitude of tilted and modulated data, in (-1, 1)"),
    "particles": ([500, 2000], "particle counts, strictly increasing"),
    "particle_dt": (None, "particle step; null = 0.1 sigma^2 / max(1, max |grad V|)"),
    "kde_bandwidth": (0.02, "Gaussian KDE bandwidth, >= grid spacing"),
    "seed": (0, "seed for random initialisation and sampled checks"),
    "init_mode": ("inverse_cdf", "inverse_cdf (deterministic) or random (seeded)"),
    "xi_max": (1e3, "largest frequency of the Fourier sandwich scan"),
    "n_xi": (400, "frequency samples of the Fourier sandwich scan"),
    "epsilon": (0.1, "sigma_star tolerance, in (0, 1)"),
    "p0": (1.1, "growth exponent of the potential checks"),
    "support_floor": (1e-14, "density below which weight clamps are tolerated"),
    "assert_monotone": (True, "fail sweeps whose errors do not decrease down the sigma list"),
    "threads": (1, "worker threads for sweep and decay members"),
    "snapshots": (False, "keep density snapshots at every recorded sample"),
}

_NULLABLE = {"potential", "half_width", "initial", "particle_dt"}
_FLOAT_KEYS = {
    "half_width", "end_time", "cfl", "initial_center", "initial_width",
    "initial_amplitude", "particle_dt", "kde_bandwidth", "xi_max", "epsilon",
    "p0", "support_floor",
}
_INT_KEYS = {"dimension", "cells", "stride", "max_steps", "seed", "n_xi", "threads"}
_BOOL_KEYS = {"local", "assert_monotone", "snapshots"}
_STR_KEYS = {"experiment", "variant", "potential", "kernel_base", "initial", "init_mode"}


@dataclass
class ExperimentConfig:
    experiment: str
    variant: str
    local: bool
    potential: Optional[str]
    kernel_base: str
    dimension: int
    half_width: Optional[float]
    cells: int
    sigmas: List[float] = field(default_factory=list)
    end_time: float = 0.5
    cfl: float = 0.25
    stride: int = 10
    max_steps: int = 2_000_000
    initial: Optional[str] = None
    initial_center: float = 1.0
    initial_width: float = 0.5
    initial_amplitude: float = 0.5
    particles: List[int] = field(default_factory=list)
    particle_dt: Optional[float] = None
    kde_bandwidth: float = 0.02
    seed: int = 0
    init_mode: str = "inverse_cdf"
    xi_max: float = 1e3
    n_xi: int = 400
    epsilon: float = 0.1
    p0: float = 1.1
    support_floor: float = 1e-14
    assert_monotone: bool = True
    threads: int = 1
    snapshots: bool = False

    @property
    def sigma(self) -> float:
        return self.sigmas[0]

    def to_dict(self) -> Dict:
        return asdict(self)

    def digest(self) -> str:
        """sha256 of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def defaults() -> Dict:
    return {k: (list(v) if isinstance(v, list) else v) for k, (v, _) in DEFAULT_CONFIG.items()}


def _coerce(key: str, value):
    if value is None:
        if key in _NULLABLE:
            return None
        raise ConfigError(f"{key} may not be null")
    if key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean, got {value!r}")
        return value
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    if key == "sigmas":
        if not isinstance(value, list) or not value or any(
            isinstance(s, bool) or not isinstance(s, (int, float)) for s in value
        ):
            raise ConfigError(f"sigmas must be a non-empty list of numbers, got {value!r}")
        return [float(s) for s in value]
    if key == "particles":
        if not isinstance(value, list) or not value or any(
            isinstance(n, bool) or not isinstance(n, int) for n in value
        ):
            raise ConfigError(f"particles must be a non-empty list of integers, got {value!r}")
        return list(value)
    raise ConfigError(f"unknown config key {key!r}")


def _check_choice(cfg: Dict, key: str, choices) -> None:
    if cfg[key] is not None and cfg[key] not in choices:
        raise ConfigError(f"{key}={cfg[key]!r} is not one of {tuple(choices)}")


def _validate(cfg: Dict) -> None:
    _check_choice(cfg, "experiment", EXPERIMENTS)
    _check_choice(cfg, "variant", FAMILIES)
    _check_choice(cfg, "potential", POTENTIALS)
    _check_choice(cfg, "kernel_base", KERNEL_BASES)
    _check_choice(cfg, "initial", INITIAL_KINDS)
    _check_choice(cfg, "init_mode", INIT_MODES)
    if cfg["dimension"] not in (1, 2):
        raise ConfigError(f"dimension must be 1 or 2, got {cfg['dimension']}")
    n = cfg["cells"]
    if n < 8 or n & (n - 1):
        raise ConfigError(f"cells must be a power of two >= 8, got {n}")
    sigmas = cfg["sigmas"]
    bad = [s for s in sigmas if not 0.0 < s <= 1.0]
    if bad:
        raise ConfigError(f"every sigma must lie in (0, 1], got {bad}")
    if cfg["experiment"] in _LADDER_EXPERIMENTS and any(
        not b < a for a, b in zip(sigmas, sigmas[1:])
    ):
        raise ConfigError(f"sigmas must be strictly decreasing for {cfg['experiment']}, got {sigmas}")
    counts = cfg["particles"]
    if any(c < 1 for c in counts) or any(not b > a for a, b in zip(counts, counts[1:])):
        raise ConfigError(f"particles must be positive and strictly increasing, got {counts}")
    for key in ("end_time", "cfl", "initial_width", "kde_bandwidth", "xi_max", "support_floor"):
        if not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive, got {cfg[key]}")
    if cfg["half_width"] is not None and not cfg["half_width"] > 0:
        raise ConfigError(f"half_width must be positive, got {cfg['half_width']}")
    if cfg["particle_dt"] is not None and not cfg["particle_dt"] > 0:
        raise ConfigError(f"particle_dt must be positive, got {cfg['particle_dt']}")
    for key in ("stride", "max_steps", "n_xi", "threads"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1, got {cfg[key]}")
    if not abs(cfg["initial_amplitude"]) < 1.0:
        raise ConfigError("initial_amplitude must lie in (-1, 1)")
    if not 0.0 < cfg["epsilon"] < 1.0:
        raise ConfigError("epsilon must lie in (0, 1)")
    if not cfg["p0"] > 1.0:
        raise ConfigError("p0 must exceed 1")
    if not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")


def build_config(values: Dict) -> ExperimentConfig:
    merged = defaults()
    for key, value in values.items():
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = _coerce(key, value)
    _validate(merged)
    return ExperimentConfig(**merged)


def load_config(path: Optional[Path] = None, overrides: Optional[Dict] = None) -> ExperimentConfig:
    """Defaults, then the JSON file at ``path``, then non-None ``overrides``."""
    values: Dict = {}
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        values.update(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return build_config(values)
