"""Write harness artifacts: versioned CSV tables, long-format plot data, manifest.json.

Tables hold only deterministic quantities so an identical config reproduces
them byte for byte; wall-clock runtimes go to the manifest.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .. import __version__
from ..acceptance import ACCEPTANCE_THRESHOLDS, EvidenceCollector
from ..dynamics_particles import ParticleTrajectory
from ..dynamics_pde import TrajectoryLog
from ..grid import Field
from ..snapshots import write_ensemble, write_field, write_table, write_trajectory
from .config import ExperimentConfig
from .models import (
    DecayTable,
    DiagnosticsTable,
    KernelVerificationReport,
    ParticleComparisonTable,
    SweepResult,
)

PLOT_COLUMNS = ["series", "x", "y"]
SWEEP_COLUMNS = ["sigma", "l1_error", "w1_error"]
DECAY_COLUMNS = ["sigma", "rate", "intercept", "r_squared", "samples", "kl_initial", "kl_final"]
KERNEL_COLUMNS = ["name", "passed", "measured", "detail"]
PARTICLE_COLUMNS = ["particles", "w1", "steps"]
DIAGNOSTIC_COLUMNS = ["source", "name", "sigma", "inputs_digest", "value"]

MANIFEST_SCHEMA_VERSION = 1


def _write_json_atomic(path: Path, payload: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    tmp.replace(path)


def _jsonable(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def plot_rows(series: Dict[str, Iterable[Tuple[float, float]]]) -> List[Dict]:
    """Long-format (series, x, y) rows, series in insertion order."""
    return [{"series": name, "x": x, "y": y} for name, points in series.items() for x, y in points]


def _table_with_plot(out: Path, stem: str, schema: str, rows: Sequence[Dict], columns: Sequence[str],
                     series: Dict[str, Iterable[Tuple[float, float]]]) -> List[Path]:
    return [
        write_table(out / f"{stem}.csv", schema, rows, columns),
        write_table(out / f"{stem}_plot.csv", "plot", plot_rows(series), PLOT_COLUMNS),
    ]


# --------------------------------------------------------------------------- #
# Per-experiment writers
# --------------------------------------------------------------------------- #
def write_sweep(out: Path, result: SweepResult) -> List[Path]:
    rows = [r.to_dict() for r in result.rows]
    series = {
        "l1_error": [(r.sigma, r.l1_error) for r in result.rows],
        "w1_error": [(r.sigma, r.w1_error) for r in result.rows],
    }
    return _table_with_plot(out, f"sweep_{result.family}", "sweep", rows, SWEEP_COLUMNS, series)


def write_decay(out: Path, table: DecayTable) -> List[Path]:
    rows = [r.to_dict() for r in table.rows]
    series = {
        f"kl_sigma={row.sigma:g}": list(zip(log.times, log.kl))
        for row, log in zip(table.rows, table.trajectories)
    }
    return _table_with_plot(out, "decay", "decay", rows, DECAY_COLUMNS, series)


def write_kernel_report(out: Path, report: KernelVerificationReport) -> List[Path]:
    rows = [c.to_dict() for c in report.checks]
    c = report.constants
    series = {}
    if "moment_measured" in c:
        series["moment_measured"] = list(zip(c["moment_sigmas"], c["moment_measured"]))
        series["moment_bound"] = list(zip(c["moment_sigmas"], c["moment_bound"]))
    paths = _table_with_plot(out, "kernel_report", "kernel-report", rows, KERNEL_COLUMNS, series)
    _write_json_atomic(out / "kernel_report.json", report.to_dict())
    return paths + [out / "kernel_report.json"]


def write_particles(out: Path, table: ParticleComparisonTable) -> List[Path]:
    rows = [r.to_dict() for r in table.rows]
    series = {"w1": [(r.particles, r.w1) for r in table.rows]}
    return _table_with_plot(out, "particle_vs_pde", "particle-vs-pde", rows, PARTICLE_COLUMNS, series)


def write_diagnostics(out: Path, table: DiagnosticsTable) -> List[Path]:
    series: Dict[str, List[Tuple[float, float]]] = {}
    for r in table.rows:
        if r["sigma"] is not None:
            series.setdefault(f"{r['source']}:{r['name']}", []).append((r["sigma"], r["value"]))
    return _table_with_plot(out, "diagnostics", "diagnostics", table.rows, DIAGNOSTIC_COLUMNS, series)


def write_pde_run(out: Path, log: TrajectoryLog, rho0: Field) -> List[Path]:
    paths = [
        write_trajectory(out / "trajectory.csv", log.rows()),
        write_table(out / "trajectory_plot.csv", "plot", plot_rows({
            "kl": list(zip(log.times, log.kl)),
            "dissipation": list(zip(log.times, log.dissipation)),
        }), PLOT_COLUMNS),
        write_field(out / "initial_field.csv", rho0),
        write_field(out / "final_field.csv", log.final_state),
    ]
    for k, snap in enumerate(log.snapshots):
        paths.append(write_field(out / "snapshots" / f"field_{k:04d}.csv", snap))
    return paths


def write_particle_run(out: Path, traj: ParticleTrajectory) -> List[Path]:
    series: Dict[str, List[Tuple[float, float]]] = {}
    for t, ens in zip(traj.times, traj.ensembles):
        for a in range(ens.dimension):
            coord = ens.positions[:, a]
            series.setdefault(f"x{a + 1}_mean", []).append((t, float(np.mean(coord))))
            series.setdefault(f"x{a + 1}_std", []).append((t, float(np.std(coord))))
    return [
        write_ensemble(out / "ensemble_initial.csv", traj.ensembles[0].positions),
        write_ensemble(out / "ensemble_final.csv", traj.final.positions),
        write_table(out / "ensemble_plot.csv", "plot", plot_rows(series), PLOT_COLUMNS),
    ]


# --------------------------------------------------------------------------- #
# Manifest
# --------------------------------------------------------------------------- #
def write_manifest(
    out: Path,
    cfg: Optional[ExperimentConfig],
    exit_status: int,
    runtime_s: float,
    grid: Optional[Any] = None,
    result: Optional[Dict] = None,
    violations: Sequence[str] = (),
    outputs: Sequence[Path] = (),
    evidence: Optional[EvidenceCollector] = None,
    error: Optional[str] = None,
) -> Path:
    """manifest.json: config digest, grid, runtime, version, exit status, evidence."""
    payload = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "package_version": __version__,
        "experiment": cfg.experiment if cfg else None,
        "config": cfg.to_dict() if cfg else None,
        "config_digest": cfg.digest() if cfg else None,
        "grid": grid,
        "runtime_s": round(runtime_s, 3),
        "exit_status": exit_status,
        "error": error,
        "violations": list(violations),
        "thresholds": ACCEPTANCE_THRESHOLDS,
        "result": result,
        "outputs": sorted(str(Path(p).relative_to(out)) for p in outputs),
    }
    if evidence is not None:
        payload["truncated"] = evidence.truncated
        payload["evidence_records"] = evidence.records
    path = out / "manifest.json"
    _write_json_atomic(path, payload)
    return path
