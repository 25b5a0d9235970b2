"""Result tables produced by the harness experiments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ..diagnostics import DecayFit
from ..dynamics_pde import TrajectoryLog


@dataclass
class SweepRow:
    sigma: float
    l1_error: float
    w1_error: float
    runtime_s: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "sigma": self.sigma,
            "l1_error": self.l1_error,
            "w1_error": self.w1_error,
            "runtime_s": self.runtime_s,
        }


@dataclass
class SweepResult:
    """Distances at T between each nonlocal run and the local-limit reference."""

    family: str
    reference: str
    end_time: float
    grid: Dict
    rows: List[SweepRow] = field(default_factory=list)
    trajectories: List[TrajectoryLog] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict:
        return {
            "family": self.family,
            "reference": self.reference,
            "end_time": self.end_time,
            "grid": self.grid,
            "rows": [r.to_dict() for r in self.rows],
        }


@dataclass
class DecayRow:
    sigma: float
    fit: DecayFit
    kl_initial: float
    kl_final: float
    runtime_s: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "sigma": self.sigma,
            "rate": self.fit.rate,
            "intercept": self.fit.intercept,
            "r_squared": self.fit.r_squared,
            "samples": self.fit.samples,
            "kl_initial": self.kl_initial,
            "kl_final": self.kl_final,
        }


@dataclass
class DecayTable:
    end_time: float
    grid: Dict
    rows: List[DecayRow] = field(default_factory=list)
    trajectories: List[TrajectoryLog] = field(default_factory=list, repr=False)

    @property
    def rate_spread(self) -> Optional[float]:
        """max/min fitted rate; inf when some rate is not positive, None for one row."""
        if len(self.rows) < 2:
            return None
        rates = [r.fit.rate for r in self.rows]
        if min(rates) <= 0:
            return float("inf")
        return max(rates) / min(rates)

    def to_dict(self) -> Dict:
        return {
            "end_time": self.end_time,
            "grid": self.grid,
            "rate_spread": self.rate_spread,
            "rows": [r.to_dict() for r in self.rows],
        }


@dataclass
class KernelCheck:
    name: str
    passed: bool
    measured: Optional[float] = None
    detail: str = ""

    def to_dict(self) -> Dict:
        return {"name": self.name, "passed": self.passed, "measured": self.measured, "detail": self.detail}


@dataclass
class KernelVerificationReport:
    base: str
    dimension: int
    grid: Dict
    checks: List[KernelCheck] = field(default_factory=list)
    constants: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def slsi_eligible(self) -> bool:
        return self.get("fourier_sandwich").passed

    def get(self, name: str) -> KernelCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> Dict:
        return {
            "base": self.base,
            "dimension": self.dimension,
            "grid": self.grid,
            "passed": self.passed,
            "slsi_eligible": self.slsi_eligible,
            "constants": self.constants,
            "checks": [c.to_dict() for c in self.checks],
        }


@dataclass
class ParticleRow:
    particles: int
    w1: float
    steps: int
    runtime_s: float = 0.0

    def to_dict(self) -> Dict:
        return {"particles": self.particles, "w1": self.w1, "steps": self.steps, "runtime_s": self.runtime_s}


@dataclass
class ParticleComparisonTable:
    sigma: float
    end_time: float
    grid: Dict
    rows: List[ParticleRow] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "sigma": self.sigma,
            "end_time": self.end_time,
            "grid": self.grid,
            "rows": [r.to_dict() for r in self.rows],
        }


@dataclass
class DiagnosticsTable:
    rows: List[Dict] = field(default_factory=list)
    grids: List[Dict] = field(default_factory=list)

    def value(self, source: str, name: str, sigma: Optional[float] = None) -> float:
        for r in self.rows:
            if r["source"] == source and r["name"] == name and r.get("sigma") == sigma:
                return r["value"]
        raise KeyError((source, name, sigma))

    def to_dict(self) -> Dict:
        return {"grids": self.grids, "rows": self.rows}
