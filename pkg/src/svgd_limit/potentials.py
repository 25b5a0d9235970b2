"""Target potentials, their quadratic minorants, and sampled assumption checks.

A potential V defines the target rho_inf ~ exp(-V); the minorant
Vm(x) = 1/2 (x - m)^T A (x - m) + c0 defines the weight exp(V - Vm/2) used by
the weighted dynamics. All callables take points of shape (..., d).

The validators never raise on a failed assumption. Every check lands in the
report with the measured constant and, when it fails, a witness point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.integrate import dblquad, quad

from .errors import TailMassError
from .grid import Field, Grid

logger = logging.getLogger(__name__)

POTENTIALS = ("gaussian", "quartic", "cosine", "exp_square")
INITIAL_KINDS = ("bump", "tilted", "modulated", "equilibrium")

DEFAULT_TAIL_TOL = 1e-10
DEFAULT_P0 = 1.1

# admissible exponent ranges per dimension, (low, high, high_inclusive);
# metadata for reports only, no computation depends on them
P0_RANGES = {1: (1.0, 1.2, True), 2: (1.0, 1.2, False)}

# numerical proxy for "bounded": the sup over the outer band may exceed the
# sup over the middle band by at most this factor
_SHELL_GROWTH_TOL = 1.1
_DOMINANCE_TOL = 1e-12
_FD_REL_TOL = 1e-4


@dataclass
class PotentialSpec:
    label: str
    dimension: int
    V: Callable[[np.ndarray], np.ndarray]
    gradV: Callable[[np.ndarray], np.ndarray]
    A: np.ndarray = None
    center: np.ndarray = None
    offset: float = 0.0

    def __post_init__(self) -> None:
        d = self.dimension
        self.A = np.eye(d) if self.A is None else np.atleast_2d(np.asarray(self.A, dtype=float))
        self.center = np.zeros(d) if self.center is None else np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.A.shape != (d, d) or self.center.shape != (d,):
            raise ValueError(f"minorant parameters do not match dimension {d}")
        if self.offset < 0:
            raise ValueError("minorant offset must be non-negative")

    def minorant(self, x) -> np.ndarray:
        y = np.asarray(x, dtype=float) - self.center
        return 0.5 * np.einsum("...i,ij,...j->...", y, self.A, y) + self.offset

    def minorant_grad(self, x) -> np.ndarray:
        y = np.asarray(x, dtype=float) - self.center
        return y @ self.A.T

    def describe(self) -> Dict:
        return {
            "label": self.label,
            "dimension": self.dimension,
            "A": self.A.tolist(),
            "center": self.center.tolist(),
            "offset": self.offset,
        }


def _sq(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sum(x * x, axis=-1)


def make_potential(name: str, dimension: int = 1) -> PotentialSpec:
    """Benchmark potentials; all use the minorant |x|^2 / 2."""
    if name == "gaussian":
        return PotentialSpec(name, dimension, lambda x: 0.5 * _sq(x), lambda x: np.asarray(x, dtype=float))
    if name == "quartic":
        return PotentialSpec(
            name, dimension,
            lambda x: 0.5 * _sq(x) + 0.25 * _sq(x) ** 2,
            lambda x: np.asarray(x, dtype=float) * (1.0 + _sq(x))[..., None],
        )
    if name == "cosine":
        # V - Vm = 1 + cos|x| stays in [0, 2]
        def grad(x):
            x = np.asarray(x, dtype=float)
            r = np.sqrt(_sq(x))
            return x * (1.0 - np.sinc(r / np.pi))[..., None]

        return PotentialSpec(name, dimension, lambda x: 0.5 * _sq(x) + 1.0 + np.cos(np.sqrt(_sq(x))), grad)
    if name == "exp_square":
        return PotentialSpec(
            name, dimension,
            lambda x: np.exp(_sq(x)),
            lambda x: 2.0 * np.asarray(x, dtype=float) * np.exp(_sq(x))[..., None],
        )
    raise ValueError(f"unknown potential {name!r}; expected one of {POTENTIALS}")


# --------------------------------------------------------------------------- #
# Reports
# --------------------------------------------------------------------------- #
@dataclass
class Check:
    name: str
    passed: bool
    measured: Optional[float] = None
    witness: Optional[List[float]] = None
    note: str = ""

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "witness": self.witness,
            "note": self.note,
        }


@dataclass
class ValidationReport:
    potential: str
    checks: List[Check] = field(default_factory=list)
    c_v: Optional[float] = None
    tail_mass: Optional[float] = None
    metadata: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, check: Check) -> None:
        if not check.passed and check.witness is None:
            raise ValueError(f"failed check {check.name} carries no witness")
        self.checks.append(check)

    def to_dict(self) -> Dict:
        return {
            "potential": self.potential,
            "passed": self.passed,
            "c_v": self.c_v,
            "tail_mass": self.tail_mass,
            "metadata": self.metadata,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_text(self) -> str:
        lines = [f"Validation report: {self.potential}"]
        if self.tail_mass is not None:
            lines.append(f"  tail mass beyond box: {self.tail_mass:.3e}")
        if self.c_v is not None:
            lines.append(f"  estimated C_V: {self.c_v:.6g}")
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            measured = "" if c.measured is None else f" measured={c.measured:.6g}"
            witness = "" if c.witness is None else f" witness={c.witness}"
            note = f" ({c.note})" if c.note else ""
            lines.append(f"  [{status}] {c.name}{measured}{witness}{note}")
        return "\n".join(lines) + "\n"


def _witness(points: np.ndarray, flat_index: int) -> List[float]:
    return [float(v) for v in points.reshape(-1, points.shape[-1])[flat_index]]


# --------------------------------------------------------------------------- #
# Equilibrium and box sizing
# --------------------------------------------------------------------------- #
def tail_mass(spec: PotentialSpec, half_width: float) -> float:
    """Fraction of the mass of exp(-V) outside [-L, L]^d."""
    L = half_width
    if spec.dimension == 1:
        f = lambda t: float(np.exp(-spec.V(np.array([t]))))
        outside = quad(f, L, np.inf)[0] + quad(f, -np.inf, -L)[0]
        inside = quad(f, -L, L, limit=200)[0]
        return outside / (outside + inside)
    f = lambda y, x: float(np.exp(-spec.V(np.array([x, y]))))
    inf = np.inf
    outside = (
        dblquad(f, L, inf, lambda x: -inf, lambda x: inf)[0]
        + dblquad(f, -inf, -L, lambda x: -inf, lambda x: inf)[0]
        + dblquad(f, -L, L, lambda x: L, lambda x: inf)[0]
        + dblquad(f, -L, L, lambda x: -inf, lambda x: -L)[0]
    )
    inside = dblquad(f, -L, L, lambda x: -L, lambda x: L)[0]
    return outside / (outside + inside)


def box_size_for(spec: PotentialSpec, tail_tol: float = DEFAULT_TAIL_TOL, l_min: float = 1.0) -> float:
    """Smallest L in the doubling ladder l_min, 2 l_min, ... with tail mass below tail_tol."""
    L = l_min
    while L <= 2.0 ** 10:
        if tail_mass(spec, L) < tail_tol:
            return L
        L *= 2.0
    raise TailMassError(f"no box up to L=2^10 keeps the tail of {spec.label} below {tail_tol:g}")


def rho_infinity(spec: PotentialSpec, grid: Grid, tail_tol: float = DEFAULT_TAIL_TOL) -> Field:
    """exp(-V) normalised by midpoint quadrature."""
    tail = tail_mass(spec, grid.half_width)
    if not tail < tail_tol:
        raise TailMassError(
            f"tail mass {tail:.3e} of {spec.label} beyond L={grid.half_width:g} exceeds {tail_tol:g}"
        )
    v = spec.V(grid.points())
    unnorm = np.exp(-(v - np.min(v)))
    return Field(grid, unnorm).normalized()


def initial_density(
    kind: str,
    grid: Grid,
    potential: PotentialSpec,
    center: float = 1.0,
    width: float = 0.5,
    amplitude: float = 0.5,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> Field:
    """Initial data families; all strictly positive and unit mass."""
    x = grid.points()
    if kind == "bump":
        shift = np.zeros(grid.dimension)
        shift[0] = center
        return Field(grid, np.exp(-_sq(x - shift) / (2.0 * width ** 2))).normalized()
    if not abs(amplitude) < 1.0 and kind in ("tilted", "modulated"):
        raise ValueError("amplitude must lie in (-1, 1)")
    eq = rho_infinity(potential, grid, tail_tol)
    if kind == "equilibrium":
        return eq
    if kind == "tilted":
        factor = 1.0 + amplitude * np.tanh(x[..., 0] - center)
    elif kind == "modulated":
        factor = 1.0 + amplitude * np.cos(2.0 * x[..., 0])
    else:
        raise ValueError(f"unknown initial datum {kind!r}; expected one of {INITIAL_KINDS}")
    return eq.like(eq.values * factor).normalized()


# --------------------------------------------------------------------------- #
# Assumption validators
# --------------------------------------------------------------------------- #
def _fd_gradient(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    step = 1e-6 * np.maximum(1.0, np.abs(x))
    for a in range(spec.dimension):
        e = np.zeros(spec.dimension)
        e[a] = 1.0
        s = step[..., a][..., None]
        out[..., a] = (spec.V(x + s * e) - spec.V(x - s * e)) / (2.0 * step[..., a])
    return out


def _hessian_norm(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    d = spec.dimension
    step = 1e-5 * np.maximum(1.0, np.sqrt(_sq(x)))[..., None]
    hess = np.empty(x.shape[:-1] + (d, d))
    for a in range(d):
        e = np.zeros(d)
        e[a] = 1.0
        hess[..., :, a] = (spec.gradV(x + step * e) - spec.gradV(x - step * e)) / (2.0 * step)
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    return np.max(np.abs(np.linalg.eigvalsh(hess)), axis=-1)


def entropy_functional(rho: Field, spec: PotentialSpec) -> float:
    """int rho |log rho| + rho V with 0 log 0 = 0."""
    r = rho.values
    pos = r > 0
    integrand = np.zeros_like(r)
    integrand[pos] = r[pos] * np.abs(np.log(r[pos]))
    integrand += r * spec.V(rho.grid.points())
    return float(np.sum(integrand) * rho.grid.cell_volume)


def validate_assumption_A(
    spec: PotentialSpec, grid: Grid, rho0: Optional[Field] = None
) -> ValidationReport:
    report = ValidationReport(spec.label)
    report.tail_mass = tail_mass(spec, grid.half_width)
    pts = grid.points()

    sym = 0.5 * (spec.A + spec.A.T)
    eigval, eigvec = np.linalg.eigh(sym)
    lam = float(eigval[0])
    report.add(Check(
        "minorant_positive_definite", lam > 0, lam,
        None if lam > 0 else [float(v) for v in eigvec[:, 0]],
    ))

    gap = spec.V(pts) - spec.minorant(pts)
    tol = _DOMINANCE_TOL * (1.0 + np.abs(spec.V(pts)))
    ok = bool(np.all(gap >= -tol))
    report.add(Check(
        "V_dominates_minorant", ok, float(np.min(gap)),
        None if ok else _witness(pts, int(np.argmin(gap))),
    ))

    analytic = spec.gradV(pts)
    numeric = _fd_gradient(spec, pts)
    err = np.linalg.norm(analytic - numeric, axis=-1) / (1.0 + np.linalg.norm(analytic, axis=-1))
    ok = bool(np.all(err <= _FD_REL_TOL))
    report.add(Check(
        "gradient_consistency", ok, float(np.max(err)),
        None if ok else _witness(pts, int(np.argmax(err))),
    ))

    if rho0 is not None:
        value = entropy_functional(rho0, spec)
        ok = bool(np.isfinite(value)) and bool(np.all(rho0.values >= 0))
        bad = None
        if not ok:
            integrand = rho0.values * spec.V(pts)
            bad = _witness(pts, int(np.argmax(~np.isfinite(integrand) | (rho0.values < 0))))
        report.add(Check("initial_entropy_finite", ok, value, bad))
    return report


def _shell_bounded(ratio: np.ndarray, r: np.ndarray, L: float):
    """Numerical stand-in for sup < inf: finite and not growing in the outer band."""
    ratio = np.where(np.isfinite(ratio), ratio, np.inf)
    outer = r >= 0.75 * L
    middle = (r >= 0.25 * L) & (r < 0.75 * L)
    inside = r <= L
    measured = float(np.max(ratio[inside]))
    if not np.isfinite(measured):
        return False, measured, int(np.argmax(np.where(inside, ratio, -np.inf)))
    if not np.any(outer) or not np.any(middle):
        return True, measured, None
    if np.max(ratio[outer]) > _SHELL_GROWTH_TOL * np.max(ratio[middle]):
        idx = int(np.argmax(np.where(outer & inside, ratio, -np.inf)))
        return False, measured, idx
    return True, measured, None


def _ball_samples(center_norm: np.ndarray, radius: np.ndarray, d: int) -> np.ndarray:
    """Points filling the ball |y| < radius; shape (..., m, d)."""
    if d == 1:
        t = np.linspace(-1.0, 1.0, 65)
        return (radius[..., None] * t)[..., None]
    rr = np.linspace(0.0, 1.0, 17)
    th = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
    R, T = np.meshgrid(rr, th, indexing="ij")
    unit = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    return radius[..., None, None] * unit


def validate_assumption_B(
    spec: PotentialSpec, p0: float, grid: Grid, seed: int = 0, pairs: int = 400
) -> ValidationReport:
    if not p0 > 1.0:
        raise ValueError("p0 must exceed 1")
    d, L = spec.dimension, grid.half_width
    report = ValidationReport(spec.label)
    report.tail_mass = tail_mass(spec, L)
    p0_star = p0 / (p0 - 1.0)
    lo, hi, inclusive = P0_RANGES[d]
    report.metadata = {
        "p0": p0,
        "p0_star": p0_star,
        "m0": d // 2 + 1,
        "p0_range": [lo, hi, "closed" if inclusive else "open"],
    }
    in_range = lo < p0 and (p0 <= hi if inclusive else p0 < hi)
    report.add(Check("p0_range", in_range, p0, None if in_range else [p0]))

    pts = grid.points()
    flat = pts.reshape(-1, d)
    r = np.sqrt(_sq(flat))
    v = spec.V(flat)

    # coercivity: shell minima of V nondecreasing over the outer half of the box
    edges = np.linspace(0.5 * L, L, 9)
    shell_min = []
    for a, b in zip(edges[:-1], edges[1:]):
        mask = (r >= a) & (r < b)
        shell_min.append(float(np.min(v[mask])) if np.any(mask) else np.nan)
    shell_min = np.array(shell_min)
    valid = np.isfinite(shell_min)
    drops = np.diff(shell_min[valid]) < -_DOMINANCE_TOL * (1.0 + np.abs(shell_min[valid][1:]))
    ok = not bool(np.any(drops))
    witness = None
    if not ok:
        witness = [float(edges[:-1][valid][1:][int(np.argmax(drops))])] + [0.0] * (d - 1)
    report.add(Check("coercivity", ok, float(shell_min[valid][-1]), witness))

    with np.errstate(over="ignore", invalid="ignore"):
        grad_norm = np.linalg.norm(spec.gradV(flat), axis=-1)
        ratio = grad_norm ** p0 / (1.0 + v)
    ok, measured, idx = _shell_bounded(ratio, r, L)
    report.c_v = measured
    report.add(Check("gradient_growth", ok, measured, None if ok else _witness(flat, idx)))

    with np.errstate(over="ignore", invalid="ignore"):
        growth = v / (1.0 + r ** p0_star)
    ok, measured, idx = _shell_bounded(growth, r, L)
    report.add(Check("growth", ok, measured, None if ok else _witness(flat, idx),
                     note=f"p0*={p0_star:.4g}"))

    # segment condition on random pairs; pass/fail judged along the diagonal x = y
    rng = np.random.default_rng(seed)
    x = rng.uniform(-L, L, size=(pairs, d))
    y = rng.uniform(-L, L, size=(pairs, d))
    with np.errstate(over="ignore", invalid="ignore"):
        worst = np.zeros(pairs)
        for theta in (0.0, 0.5, 1.0):
            z = theta * x + (1.0 - theta) * y
            worst = np.maximum(worst, _hessian_norm(spec, z) ** p0)
        pair_ratio = worst / (1.0 + spec.V(x) + spec.V(y))
        diag_ratio = _hessian_norm(spec, flat) ** p0 / (1.0 + 2.0 * v)
    ok, _, idx = _shell_bounded(diag_ratio, r, L)
    measured = float(np.max(np.where(np.isfinite(pair_ratio), pair_ratio, np.inf)))
    ok = ok and np.isfinite(measured)
    report.add(Check("hessian_segment", bool(ok), measured,
                     None if ok else (_witness(flat, idx) if idx is not None else [float(v) for v in x[int(np.argmax(pair_ratio))]])))

    # neighbourhood condition for (alpha, beta) in {(1, 1), (2, 1)}
    sub = flat[:: max(1, flat.shape[0] // 256)]
    r_sub = np.sqrt(_sq(sub))
    v_sub = spec.V(sub)
    for alpha, beta in ((1.0, 1.0), (2.0, 1.0)):
        ys = _ball_samples(r_sub, alpha * r_sub + beta, d)
        with np.errstate(over="ignore", invalid="ignore"):
            size = np.linalg.norm(spec.gradV(ys), axis=-1) + _hessian_norm(spec, ys)
            nb_ratio = (1.0 + r_sub) * np.max(size, axis=-1) / (1.0 + v_sub)
        ok, measured, idx = _shell_bounded(nb_ratio, r_sub, L)
        report.add(Check(
            f"hessian_neighbourhood_{alpha:g}_{beta:g}", ok, measured,
            None if ok else _witness(sub, idx),
        ))
    logger.info("assumption B on %s: %d/%d checks passed", spec.label,
                sum(c.passed for c in report.checks), len(report.checks))
    return report
