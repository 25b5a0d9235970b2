"""Harness CLI: python -m svgd_limit.harness <experiment> [--config PATH] ...

Each subcommand runs one experiment, writes its tables next to a
manifest.json and judges the result against ACCEPTANCE_THRESHOLDS.

Exit codes: 0 success, 1 acceptance failure or solver abort, 2 bad
configuration or unreadable input.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from ..acceptance import (
    collector,
    current_experiment,
    evaluate_decay,
    evaluate_kernel_report,
    evaluate_particles,
    evaluate_sweep,
    evaluate_trajectory,
)
from ..errors import ConfigError, LabError, SnapshotParseError
from . import experiments, report
from .config import EXPERIMENTS, ExperimentConfig, load_config

logger = logging.getLogger(__name__)

# (outputs, violations, grid description, result dict)
StageResult = Tuple[List[Path], List[str], Optional[Dict], Optional[Dict]]


# --------------------------------------------------------------------------- #
# Stages
# --------------------------------------------------------------------------- #
def _kernel_check(cfg: ExperimentConfig, out: Path, args) -> StageResult:
    rep = experiments.run_kernel_verification(cfg)
    for c in rep.checks:
        print(f"  {'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    print(f"Kernel {rep.base} d={rep.dimension}: "
          f"{'SLSI-eligible' if rep.slsi_eligible else 'not SLSI-eligible'}")
    return report.write_kernel_report(out, rep), evaluate_kernel_report(rep), rep.grid, rep.to_dict()


def _simulate_pde(cfg: ExperimentConfig, out: Path, args) -> StageResult:
    log, rho0 = experiments.simulate_pde(cfg)
    print(f"PDE {log.variant}: {log.steps} steps, KL {log.kl[0]:.4e} -> {log.kl[-1]:.4e}")
    violations = evaluate_trajectory(log, require_monotone=cfg.assert_monotone)
    return report.write_pde_run(out, log, rho0), violations, rho0.grid.describe(), log.to_dict()


def _simulate_particles(cfg: ExperimentConfig, out: Path, args) -> StageResult:
    traj, grid = experiments.simulate_particles(cfg)
    print(f"Particles {traj.mode}: N={traj.final.size}, {traj.steps} steps of dt={traj.dt:.3e}")
    return report.write_particle_run(out, traj), [], grid.describe(), traj.to_dict()


def _sweep_sigma(cfg: ExperimentConfig, out: Path, args) -> StageResult:
    result = experiments.run_sigma_sweep(cfg)
    for row in result.rows:
        print(f"  sigma={row.sigma:<6g} L1 {row.l1_error:.4e}  W1 {row.w1_error:.4e}")
    violations = evaluate_sweep(result, monotone=cfg.assert_monotone)
    for log in result.trajectories:
        violations += evaluate_trajectory(log, require_monotone=False)
    return report.write_sweep(out, result), violations, result.grid, result.to_dict()


def _decay_study(cfg: ExperimentConfig, out: Path, args) -> StageResult:
    table = experiments.run_decay_study(cfg)
    for row in table.rows:
        print(f"  sigma={row.sigma:<6g} rate {row.fit.rate:.4f}  R^2 {row.fit.r_squared:.5f}")
    violations = evaluate_decay(table)
    for log in table.trajectories:
        violations += evaluate_trajectory(log, require_monotone=True)
    return report.write_decay(out, table), violations, table.grid, table.to_dict()


def _particle_vs_pde(cfg: ExperimentConfig, out: Path, args) -> StageResult:
    table = experiments.run_particle_vs_pde(cfg)
    for row in table.rows:
        print(f"  N={row.particles:<6d} W1 {row.w1:.4e}")
    return report.write_particles(out, table), evaluate_particles(table), table.grid, table.to_dict()


def _diagnose(cfg: ExperimentConfig, out: Path, args) -> StageResult:
    table = experiments.diagnose(cfg, args.snapshots)
    print(f"Diagnosed {len(args.snapshots)} snapshot(s): {len(table.rows)} rows")
    grid = table.grids[0] if len(table.grids) == 1 else {"snapshots": table.grids}
    return report.write_diagnostics(out, table), [], grid, None


_STAGES: Dict[str, Callable[..., StageResult]] = {
    "kernel-check": _kernel_check,
    "simulate-pde": _simulate_pde,
    "simulate-particles": _simulate_particles,
    "sweep-sigma": _sweep_sigma,
    "decay-study": _decay_study,
    "particle-vs-pde": _particle_vs_pde,
    "diagnose": _diagnose,
}


# --------------------------------------------------------------------------- #
# Entry point
# --------------------------------------------------------------------------- #
def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON config file")
    common.add_argument("--out", type=Path, default=None,
                        help="Output directory (default: runs/<experiment>)")
    common.add_argument("--threads", type=int, default=None, help="Worker threads")
    common.add_argument("--seed", type=int, default=None, help="Seed (unsigned 64-bit)")
    common.add_argument("--verbose", "-v", action="store_true", help="DEBUG logging")

    ap = argparse.ArgumentParser(
        prog="svgd-lab",
        description="Numerical experiments on the small-bandwidth limit of mean-field SVGD.",
    )
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, parents=[common])
        if name == "diagnose":
            p.add_argument("snapshots", type=Path, nargs="+", help="Field snapshot CSV files")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    out = args.out or Path("runs") / args.experiment
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    collector.reset()
    token = current_experiment.set(args.experiment)
    cfg = None
    try:
        cfg = load_config(args.config, {"experiment": args.experiment, "threads": args.threads, "seed": args.seed})
        print(f"{cfg.experiment}: config {cfg.digest()[:12]} -> {out}")
        outputs, violations, grid, result = _STAGES[cfg.experiment](cfg, out, args)
    except (ConfigError, SnapshotParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        report.write_manifest(out, cfg, 2, time.perf_counter() - start, error=str(exc), evidence=collector)
        return 2
    except LabError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        report.write_manifest(out, cfg, 1, time.perf_counter() - start, error=str(exc), evidence=collector)
        return 1
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        report.write_manifest(out, cfg, 2, time.perf_counter() - start, error=str(exc), evidence=collector)
        return 2
    finally:
        current_experiment.reset(token)

    status = 1 if violations else 0
    manifest = report.write_manifest(
        out, cfg, status, time.perf_counter() - start, grid=grid, result=result,
        violations=violations, outputs=outputs, evidence=collector,
    )
    if violations:
        print("Acceptance violations:\n  - " + "\n  - ".join(violations))
    else:
        print("All acceptance checks passed. ✅")
    print("\nWrote:\n  " + "\n  ".join(str(p) for p in outputs + [manifest]))
    return status


if __name__ == "__main__":
    sys.exit(main())
