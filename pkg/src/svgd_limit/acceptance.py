"""Acceptance thresholds, evidence collection, and evaluation helpers.

Design contract:

  * Tests and harness experiments route acceptance decisions through the
    ``evaluate_*`` helpers below.
  * Each helper records **structured evidence** (measured value, threshold,
    sample time or sigma) into the run collector *before* any assertion
    fires, so a failing run still leaves machine-readable records behind.
  * The pytest plugin in ``conftest.py`` serialises the collector into
    ``runs/<timestamp>/run_record.json`` at session end; the harness
    embeds the same records in its manifest.

The collector is an append-only list with ID assignment and a truncation
cap. Judgement lives in the thresholds and the helpers.
"""

from __future__ import annotations

from contextvars import ContextVar
from typing import Dict, List, Optional, Sequence

import numpy as np

from .diagnostics import entropy_identity_residual
from .dynamics_pde import TrajectoryLog

# --------------------------------------------------------------------------- #
# Thresholds (single source of truth; embedded in every run record)
# --------------------------------------------------------------------------- #
ACCEPTANCE_THRESHOLDS: Dict = {
    "mass_drift_max": 1e-10,             # conservative update, roundoff only
    "positivity_floor": -1e-12,          # pre-clamp abort level of step()
    "kl_monotone_tol": 1e-9,             # per recorded sample
    "stationary_kl_max": 1e-6,           # rho_0 = rho_inf up to T = 1
    "entropy_residual_max": 0.05,        # |dKL/dt + D^2| / D^2
    "decay_r2_min": 0.99,                # log-KL linear fit
    "decay_rate_spread_max": 1.2,        # max/min fitted rate across sigma
    "semigroup_defect_max": 1e-3,        # d=1, sigma=0.2, n=4096
    "semigroup_refinement_min": 2.0,     # defect ratio per grid halving
    "d0_range": (6.28, 6.29),            # Bessel base, analytic limit 2 pi
    "d1_range": (0.999, 1.001),          # Bessel base, analytic limit 1
    "kernel_fourier_floor": -1e-10,      # discrete transform of sampled k_sigma
    "neg_log_margin_floor": -1e-12,      # pointwise negative-log bound
    "moment_slack": 1e-6,                # measured <= bound (1 + slack)
    "commutator_slope_min": 0.9,         # log-log slope against sigma
    "particle_w1_max": 0.05,             # N = 2000, sigma = 0.2, frozen on first run
    "convolution_oracle_max": 1e-10,     # FFT vs direct, n = 64
    "velocity_oracle_max": 1e-12,        # vectorised vs naive double loop
    "gaussian_kl_oracle_max": 1e-4,      # closed form mu^2 / 2
    "special_function_rel_max": 1e-7,    # vs independent series
}

_MAX_EVIDENCE_RECORDS = 500  # hard cap; truncation is flagged, never silent


class EvidenceCollector:
    """Append-only, capped store of evidence records for one session or harness run."""

    def __init__(self) -> None:
        self.records: List[Dict] = []
        self.truncated: bool = False
        self._counter: int = 0

    def record(self, type: str, **fields) -> str:
        self._counter += 1
        evidence_id = f"EV-{self._counter:03d}"
        if len(self.records) >= _MAX_EVIDENCE_RECORDS:
            self.truncated = True
            return evidence_id  # ID still consumed so counts stay honest
        rec = {"evidence_id": evidence_id, "type": type}
        for key, value in fields.items():
            if isinstance(value, (np.floating, np.integer)):
                value = value.item()
            rec[key] = value
        rec.setdefault("originating_test", current_test.get())
        rec.setdefault("experiment", current_experiment.get())
        self.records.append(rec)
        return evidence_id

    def reset(self) -> None:
        self.records = []
        self.truncated = False
        self._counter = 0


#: Session-wide collector. conftest.py resets it at session start and
#: serialises it at session end; the harness resets it per invocation.
collector = EvidenceCollector()

#: Set per test by an autouse fixture, per experiment by the harness.
current_test: ContextVar[Optional[str]] = ContextVar("current_test", default=None)
current_experiment: ContextVar[Optional[str]] = ContextVar("current_experiment", default=None)


# --------------------------------------------------------------------------- #
# Evaluation helpers ("record evidence, then assert")
# --------------------------------------------------------------------------- #
def evaluate_trajectory(
    log: TrajectoryLog,
    thresholds: Dict = ACCEPTANCE_THRESHOLDS,
    require_monotone: bool = True,
) -> List[str]:
    """Mass conservation, positivity and (optionally) KL monotonicity of a run."""
    violations = []
    m0 = log.mass[0]
    for t, m, low in zip(log.times, log.mass, log.min_rho):
        drift = abs(m - m0)
        if drift > thresholds["mass_drift_max"]:
            collector.record("mass_drift", variant=log.variant, time=t, drift=drift,
                             threshold=thresholds["mass_drift_max"])
            violations.append(f"{log.variant}: mass drift {drift:.3e} at t={t:.4g}")
            break
        if low < 0.0:
            collector.record("negative_density", variant=log.variant, time=t, min_rho=low)
            violations.append(f"{log.variant}: negative density {low:.3e} at t={t:.4g}")
            break
    if require_monotone:
        tol = thresholds["kl_monotone_tol"]
        for k in range(1, len(log.kl)):
            rise = log.kl[k] - log.kl[k - 1]
            if rise > tol:
                collector.record("kl_increase", variant=log.variant, time=log.times[k],
                                 increase=rise, threshold=tol)
                violations.append(f"{log.variant}: KL rose by {rise:.3e} at t={log.times[k]:.4g}")
                break
    return violations


def evaluate_stationary(log: TrajectoryLog, thresholds: Dict = ACCEPTANCE_THRESHOLDS) -> List[str]:
    worst = max(log.kl)
    collector.record("stationary_kl", variant=log.variant, max_kl=worst,
                     threshold=thresholds["stationary_kl_max"])
    if worst > thresholds["stationary_kl_max"]:
        return [f"{log.variant}: KL {worst:.3e} drifted away from equilibrium"]
    return []


def evaluate_entropy_identity(log: TrajectoryLog, thresholds: Dict = ACCEPTANCE_THRESHOLDS) -> List[str]:
    residual = entropy_identity_residual(log)
    collector.record("entropy_identity", variant=log.variant, residual=residual,
                     threshold=thresholds["entropy_residual_max"], samples=len(log.times))
    if residual > thresholds["entropy_residual_max"]:
        return [f"{log.variant}: entropy identity residual {residual:.3%} "
                f"exceeds {thresholds['entropy_residual_max']:.0%}"]
    return []


def _strictly_decreasing(values: Sequence[float]) -> Optional[int]:
    for k in range(1, len(values)):
        if not values[k] < values[k - 1]:
            return k
    return None


def evaluate_sweep(result, thresholds: Dict = ACCEPTANCE_THRESHOLDS, monotone: bool = True) -> List[str]:
    """Distances to the local limit must fall strictly down the sigma list."""
    violations = []
    for row in result.rows:
        collector.record("sweep_row", pair=result.family, sigma=row.sigma,
                         l1_error=row.l1_error, w1_error=row.w1_error)
    if not monotone or len(result.rows) < 2:
        return violations
    for metric in ("l1_error", "w1_error"):
        values = [getattr(r, metric) for r in result.rows]
        k = _strictly_decreasing(values)
        if k is not None:
            collector.record("sweep_not_monotone", pair=result.family, metric=metric,
                             sigma=result.rows[k].sigma, values=values)
            violations.append(
                f"{result.family} sweep: {metric} did not decrease at sigma={result.rows[k].sigma:g} "
                f"({values[k - 1]:.4e} -> {values[k]:.4e})"
            )
    return violations


def evaluate_decay(table, thresholds: Dict = ACCEPTANCE_THRESHOLDS) -> List[str]:
    violations = []
    for row in table.rows:
        fit = row.fit
        collector.record("decay_fit", sigma=row.sigma, rate=fit.rate, r_squared=fit.r_squared,
                         samples=fit.samples)
        if not fit.rate > 0:
            violations.append(f"sigma={row.sigma:g}: fitted rate {fit.rate:.4g} is not positive")
        if fit.r_squared < thresholds["decay_r2_min"]:
            violations.append(f"sigma={row.sigma:g}: R^2 {fit.r_squared:.4f} below {thresholds['decay_r2_min']}")
    spread = table.rate_spread
    if spread is not None and spread > thresholds["decay_rate_spread_max"]:
        collector.record("decay_rate_spread", spread=spread, threshold=thresholds["decay_rate_spread_max"])
        violations.append(f"fitted rates spread by a factor {spread:.3f} across sigma")
    return violations


def evaluate_kernel_report(report, thresholds: Dict = ACCEPTANCE_THRESHOLDS) -> List[str]:
    violations = []
    for check in report.checks:
        if not check.passed:
            collector.record("kernel_check_failed", check=check.name, measured=check.measured,
                             detail=check.detail)
            violations.append(f"kernel check {check.name} failed: {check.detail}")
    return violations


def evaluate_particles(table, thresholds: Dict = ACCEPTANCE_THRESHOLDS) -> List[str]:
    """W1(KDE, PDE) falls with N and meets the frozen bound at the largest N."""
    violations = []
    for row in table.rows:
        collector.record("particle_w1", particles=row.particles, sigma=table.sigma, w1=row.w1)
    values = [r.w1 for r in table.rows]
    k = _strictly_decreasing(values)
    if k is not None:
        violations.append(f"W1 did not decrease from N={table.rows[k - 1].particles} to N={table.rows[k].particles}")
    if table.rows and values[-1] > thresholds["particle_w1_max"]:
        violations.append(f"W1 {values[-1]:.4f} at N={table.rows[-1].particles} exceeds "
                          f"{thresholds['particle_w1_max']}")
    return violations


def acceptance_check(violations: Sequence[str]) -> None:
    """Assert on violations gathered by the evaluators.

    Evidence is recorded first, assertion second, so a failing test always
    leaves structured records behind.
    """
    assert not violations, "Acceptance violations:\n  - " + "\n  - ".join(violations)
