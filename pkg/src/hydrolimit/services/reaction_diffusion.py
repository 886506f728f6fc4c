"""
Reaction-diffusion service for hydrolimit

The lattice problem du/dt = K^{-1/2} Lap^N u + K^{1/2} f(u) and the
continuum Allen-Cahn problem du/dt = eps Lap u + f(u)/eps on a mesh 1/M
share one explicit RK4 stepper: the continuum problem is the lattice one
with N = M and K = 1/eps^2.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core import (
    logger, settings, error_handler, ErrorCategory, ErrorSeverity, DomainError, SolverError,
)
from .glauber_rates import DerivedConstants, ReactionPolynomial
from .lattice_core import TorusGeometry

GENERATION_M0_MARGIN = 1e-9


@dataclass
class LatticeField:
    """Values u^N(x) per torus site, stored on the grid shape"""
    geometry: TorusGeometry
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(self.geometry.shape)
        if not np.all(np.isfinite(values)):
            raise DomainError("lattice field values must be finite")
        self.values = values

    def points(self) -> np.ndarray:
        """Macroscopic positions x/N per axis, shape (N,)"""
        return np.arange(self.geometry.N) / self.geometry.N


@dataclass
class ContinuumField:
    """Values on the nodes j/M of the unit torus (box centres)"""
    d: int
    M: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape((self.M,) * self.d)

    @classmethod
    def from_function(cls, func, M: int, d: int = 1) -> "ContinuumField":
        axes = np.meshgrid(*([np.arange(M) / M] * d), indexing="ij")
        return cls(d, M, func(*axes))

    def points(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    def as_lattice(self) -> LatticeField:
        return LatticeField(TorusGeometry(self.d, self.M), self.values)


@dataclass
class Trajectory:
    """Solution snapshots at the requested output times"""
    d: int
    N: int
    times: np.ndarray
    values: np.ndarray
    params: Dict[str, Any] = field(default_factory=dict)

    def at(self, t: float, atol: float = 1e-12) -> np.ndarray:
        idx = np.flatnonzero(np.abs(self.times - t) <= atol * max(1.0, abs(t)))
        if idx.size == 0:
            raise DomainError(f"time {t} is not an output time of this trajectory")
        return self.values[idx[0]]

    def to_frame(self) -> pd.DataFrame:
        """Long format (t, index, value); index is the row-major site index"""
        n_times = self.times.size
        flat = self.values.reshape(n_times, -1)
        return pd.DataFrame({
            "t": np.repeat(self.times, flat.shape[1]),
            "index": np.tile(np.arange(flat.shape[1]), n_times),
            "value": flat.ravel(),
        })

    def summary(self) -> Dict[str, Any]:
        return {"d": self.d, "N": self.N, "n_times": int(self.times.size),
                "min": float(self.values.min()), "max": float(self.values.max()), **self.params}


@dataclass
class StepFunction:
    """Piecewise-constant embedding on half-open boxes centred at x/N"""
    field: LatticeField

    def box_index(self, v) -> Tuple[np.ndarray, ...]:
        N = self.field.geometry.N
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if self.field.geometry.d == 1 and v.ndim == 1:
            v = v[:, None]
        idx = np.mod(np.floor(v * N + 0.5).astype(np.int64), N)
        return tuple(idx[..., k] for k in range(self.field.geometry.d))

    def __call__(self, v) -> np.ndarray:
        return self.field.values[self.box_index(v)]

    def sample(self, M: int) -> ContinuumField:
        """Evaluate on the nodes j/M"""
        d = self.field.geometry.d
        axes = np.meshgrid(*([np.arange(M) / M] * d), indexing="ij")
        points = np.stack(axes, axis=-1).reshape(-1, d)
        return ContinuumField(d, M, self(points))


@dataclass
class ComparisonReport:
    passed: bool
    min_gap: float
    tolerance: float
    first_violation: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "min_gap": self.min_gap, "tolerance": self.tolerance,
                "first_violation": self.first_violation}


@dataclass
class GenerationReport:
    time: float
    delta: float
    M0: float
    M0_min: float
    bounds_ok: bool
    upper_ok: bool
    lower_ok: bool
    scale: float

    @property
    def passed(self) -> bool:
        return self.bounds_ok and self.upper_ok and self.lower_ok

    def to_dict(self) -> Dict[str, Any]:
        return {"time": self.time, "delta": self.delta, "M0": self.M0, "M0_min": self.M0_min,
                "bounds_ok": self.bounds_ok, "upper_ok": self.upper_ok, "lower_ok": self.lower_ok,
                "scale": self.scale, "passed": self.passed}


@dataclass
class GradientReport:
    C_gradient: float
    C_laplacian: float
    K: float

    def to_dict(self) -> Dict[str, float]:
        return {"C_gradient": self.C_gradient, "C_laplacian": self.C_laplacian, "K": self.K}


def laplacian(values: np.ndarray, N: int) -> np.ndarray:
    """N^2 sum_i (u(x+e_i) + u(x-e_i) - 2u(x)) on the periodic grid"""
    out = -2.0 * values.ndim * values
    for axis in range(values.ndim):
        out = out + np.roll(values, 1, axis=axis) + np.roll(values, -1, axis=axis)
    return (N * N) * out


def discrete_laplacian(u: LatticeField, x) -> float:
    """Delta^N u at one site"""
    coords = u.geometry.coords(x)
    N = u.geometry.N
    total = 0.0
    for axis in range(u.geometry.d):
        up = list(coords)
        down = list(coords)
        up[axis] = (up[axis] + 1) % N
        down[axis] = (down[axis] - 1) % N
        total += u.values[tuple(up)] + u.values[tuple(down)] - 2.0 * u.values[coords]
    return N * N * total


class ReactionDiffusionSolver:
    """Explicit RK4 for du/dt = D Lap^N u + R f(u) on the d-torus"""

    def __init__(self, f: ReactionPolynomial, d: int, N: int, diffusion: float, reaction: float):
        self.f = f
        self.poly = f.poly
        self.d = d
        self.N = N
        self.diffusion = diffusion
        self.reaction = reaction
        lipschitz = f.sup_abs_derivative(0.0, 1.0) if f.degree >= 1 else 0.0
        limits = [settings.solver.diffusion_safety / (d * N * N * diffusion)] if diffusion > 0 else []
        if reaction * lipschitz > 0:
            limits.append(settings.solver.reaction_safety / (reaction * lipschitz))
        self.dt_max = min(limits) if limits else math.inf

    def rhs(self, u: np.ndarray) -> np.ndarray:
        return self.diffusion * laplacian(u, self.N) + self.reaction * self.poly(u)

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        k1 = self.rhs(u)
        k2 = self.rhs(u + 0.5 * dt * k1)
        k3 = self.rhs(u + 0.5 * dt * k2)
        k4 = self.rhs(u + dt * k3)
        return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def bounds(self, u0: np.ndarray) -> Tuple[float, float]:
        tol = settings.solver.bound_tolerance
        lo, hi = float(u0.min()), float(u0.max())
        if self.f.roots is not None:
            lo, hi = min(lo, self.f.alpha_minus), max(hi, self.f.alpha_plus)
        return lo - tol, hi + tol

    def integrate(self, u0: np.ndarray, output_times: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        """Integrate landing exactly on every output time; no clamping"""
        times = np.unique(np.asarray(output_times, dtype=float))
        if times.size == 0 or times[0] < 0:
            raise DomainError("output times must be nonnegative and nonempty")
        lo, hi = self.bounds(u0)
        u = np.array(u0, dtype=float)
        t = 0.0
        snapshots = []
        n_steps = 0
        for target in times:
            span = target - t
            if span > 0:
                steps = max(1, math.ceil(span / self.dt_max - 1e-12)) if math.isfinite(self.dt_max) else 1
                dt = span / steps
                for i in range(steps):
                    u = self.step(u, dt)
                    u_min, u_max = u.min(), u.max()
                    if u_min < lo or u_max > hi or not np.isfinite(u_min + u_max):
                        bad = int(np.argmin(u)) if u_min < lo else int(np.argmax(u))
                        raise SolverError(
                            "solution left the comparison bounds",
                            {"time": t + (i + 1) * dt, "site": bad, "value": float(u.ravel()[bad]),
                             "bounds": (lo, hi), "dt": dt},
                        )
                n_steps += steps
                t = float(target)
            snapshots.append(u.copy())
        logger.debug(f"RK4 integration: {n_steps} steps, dt_max={self.dt_max:.3e}")
        return times, np.stack(snapshots)


def _check_density(values: np.ndarray):
    if np.any(values <= 0.0) or np.any(values >= 1.0):
        raise DomainError("initial data must take values in (0, 1)")


def solve_pnk(u0N: LatticeField, f: ReactionPolynomial, K: float, t_end: float,
              output_times: Optional[Sequence[float]] = None) -> Trajectory:
    """Lattice reaction-diffusion problem with the K-scaled coefficients"""
    if K <= 1:
        raise DomainError(f"K must exceed 1, got {K}")
    _check_density(u0N.values)
    times = list(output_times) if output_times is not None else [0.0, t_end]
    times = [t for t in times if t <= t_end + 1e-15]
    if t_end not in times:
        times.append(t_end)
    geometry = u0N.geometry
    solver = ReactionDiffusionSolver(f, geometry.d, geometry.N, 1.0 / math.sqrt(K), math.sqrt(K))
    start = time.perf_counter()
    try:
        out_times, values = solver.integrate(u0N.values, times)
    except SolverError as e:
        error_handler.handle_error(error=e, context={"operation": "solve_pnk", "N": geometry.N, "K": K},
                                   category=ErrorCategory.SOLVER, severity=ErrorSeverity.HIGH)
        raise
    logger.log_performance("solve_pnk", time.perf_counter() - start, N=geometry.N, K=K)
    return Trajectory(d=geometry.d, N=geometry.N, times=out_times, values=values,
                      params={"kind": "pnk", "K": K, "dt_max": solver.dt_max})


def solve_pe(u0: ContinuumField, f: ReactionPolynomial, eps: float, t_end: float,
             output_times: Optional[Sequence[float]] = None) -> Trajectory:
    """Allen-Cahn problem on the mesh 1/M, run through the lattice solver with K = 1/eps^2"""
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    required = math.ceil(settings.solver.min_points_per_eps / eps - 1e-9)
    if u0.M < required:
        raise DomainError(f"grid under-resolves the interface: M={u0.M}, need M >= {required}",
                          {"required_M": required})
    trajectory = solve_pnk(u0.as_lattice(), f, 1.0 / (eps * eps), t_end, output_times)
    trajectory.params.update({"kind": "pe", "eps": eps})
    return trajectory


def embed_step(uN: LatticeField) -> StepFunction:
    return StepFunction(uN)


def check_comparison(lower: Trajectory, upper: Trajectory, tol: Optional[float] = None) -> ComparisonReport:
    """Pointwise ordering lower <= upper + tol at every output time"""
    tol = settings.solver.ordering_tolerance if tol is None else tol
    if lower.values.shape != upper.values.shape or not np.allclose(lower.times, upper.times):
        raise DomainError("trajectories must share grid and output times")
    gaps = (upper.values - lower.values).reshape(lower.times.size, -1)
    min_gap = float(gaps.min())
    violation = None
    bad = np.argwhere(gaps < -tol)
    if bad.size:
        ti, site = bad[0]
        violation = {"time": float(lower.times[ti]), "site": int(site), "magnitude": float(-gaps[ti, site])}
    return ComparisonReport(passed=violation is None, min_gap=min_gap, tolerance=tol, first_violation=violation)


def generation_time_pe(eps: float, gamma: float) -> float:
    return eps * abs(math.log(eps)) / gamma


def generation_time_pnk(K: float, gamma: float) -> float:
    return math.log(K) / (2.0 * gamma * math.sqrt(K))


def generation_check(trajectory: Trajectory, constants: DerivedConstants, f: ReactionPolynomial,
                     u0: np.ndarray, delta: float, M0: float,
                     eps: Optional[float] = None, K: Optional[float] = None) -> GenerationReport:
    """Check the three generation clauses at t^eps (or t^N) and report the smallest passing M0.

    A failing site at distance M scale from alpha_* needs M0 > M, so M0_min carries a
    relative margin of GENERATION_M0_MARGIN and passes when fed back as M0.
    """
    if not 0.0 < delta < constants.delta0:
        raise DomainError(f"delta must lie in (0, delta0={constants.delta0}), got {delta}")
    if (eps is None) == (K is None):
        raise DomainError("give exactly one of eps or K")
    if eps is not None:
        t_gen, scale = generation_time_pe(eps, constants.gamma), eps
    else:
        t_gen, scale = generation_time_pnk(K, constants.gamma), 1.0 / math.sqrt(K)
    u = trajectory.at(t_gen, atol=1e-9)
    u0 = np.asarray(u0, dtype=float).reshape(u.shape)
    a_minus, a_star, a_plus = f.roots

    bounds_ok = bool(u.min() >= a_minus - delta and u.max() <= a_plus + delta)
    upper_fail = (u0 > a_star) & (u < a_plus - delta)
    lower_fail = (u0 < a_star) & (u > a_minus + delta)
    candidates = [0.0]
    if upper_fail.any():
        candidates.append(float(((u0[upper_fail] - a_star) / scale).max()))
    if lower_fail.any():
        candidates.append(float(((a_star - u0[lower_fail]) / scale).max()))
    M0_min = max(candidates)
    if M0_min > 0.0:
        M0_min = M0_min * (1.0 + GENERATION_M0_MARGIN) + GENERATION_M0_MARGIN

    upper_region = u0 >= a_star + M0 * scale
    lower_region = u0 <= a_star - M0 * scale
    upper_ok = bool(np.all(u[upper_region] >= a_plus - delta))
    lower_ok = bool(np.all(u[lower_region] <= a_minus + delta))
    return GenerationReport(time=t_gen, delta=delta, M0=M0, M0_min=M0_min, bounds_ok=bounds_ok,
                            upper_ok=upper_ok, lower_ok=lower_ok, scale=scale)


def sweep_generation_m0(f: ReactionPolynomial, constants: DerivedConstants, u0_func,
                        eps_values: Sequence[float], delta: float,
                        points_per_eps: float = 40.0) -> Dict[str, Any]:
    """Smallest passing M0 for each eps; reports boundedness and monotonicity"""
    results: List[Dict[str, Any]] = []
    for eps in eps_values:
        M = int(math.ceil(points_per_eps / eps))
        u0 = ContinuumField.from_function(u0_func, M)
        t_gen = generation_time_pe(eps, constants.gamma)
        trajectory = solve_pe(u0, f, eps, t_gen, [0.0, t_gen])
        report = generation_check(trajectory, constants, f, u0.values, delta, M0=math.inf, eps=eps)
        results.append({"eps": eps, "M": M, "M0_min": report.M0_min, "bounds_ok": report.bounds_ok})
    ordered = sorted(results, key=lambda r: -r["eps"])
    m0 = [r["M0_min"] for r in ordered]
    return {
        "results": ordered,
        "bounded": all(math.isfinite(v) for v in m0),
        "non_increasing": all(b <= a + 1e-12 for a, b in zip(m0, m0[1:])),
    }


def gradient_bounds(trajectory: Trajectory, K: float) -> GradientReport:
    """max N|u(y) - u(x)|/K over neighbours and max |Delta^N u|/K^2 over the trajectory"""
    N = trajectory.N
    grad = 0.0
    lap = 0.0
    for snapshot in trajectory.values:
        for axis in range(snapshot.ndim):
            grad = max(grad, float(np.abs(np.roll(snapshot, -1, axis=axis) - snapshot).max()))
        lap = max(lap, float(np.abs(laplacian(snapshot, N)).max()))
    return GradientReport(C_gradient=N * grad / K, C_laplacian=lap / (K * K), K=K)

