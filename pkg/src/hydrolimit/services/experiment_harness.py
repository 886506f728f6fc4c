"""
Experiment harness service for hydrolimit

Validated experiment configuration and the end-to-end pipelines:
rate design, wave, PDE ladder, particle replicas, certificates,
hydrodynamic comparison, entropy proxy and the exact oracle.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from ..core import (
    logger, settings, progress_manager, ExperimentStep, ArtifactStore,
    DomainError, ExtractionError, ErrorCategory, ErrorSeverity,
)
from ..core.config import ExperimentKind, InitialProfile
from ..core.error_handler import handle_exceptions
from ..utils.io_utils import IOUtils
from ..utils.stats_utils import StatsUtils
from .glauber_rates import (
    RateFunction, ReactionPolynomial, RateDesign, analytic_cubic_speed, derived_constants,
    design_rates_report, reaction_polynomial, validate_bistable_unbalanced,
)
from .lattice_core import Configuration, LocalWindow, TorusGeometry
from .reaction_diffusion import (
    ContinuumField, LatticeField, Trajectory, embed_step, generation_check, generation_time_pe,
    generation_time_pnk, gradient_bounds, solve_pe, solve_pnk, sweep_generation_m0,
)
from .traveling_wave import WaveProfile, sigma_bound, slope_inequality_holds, solve_wave, verify_tails
from .front_geometry import (
    CONSISTENCY_GROWTH, SubSuperParams, build_sub_super, chi_field, consistency_bound,
    first_topology_change, front_from_level, front_speed, huygens_evolve, laplacian_bound,
    residual, search_L, select_d0, select_sigma,
)
from .kmc_engine import (
    ReplicaRunner, ReplicaSpec, empirical_measure, exact_distribution, pairing,
    relative_entropy_product, state_frequencies,
)


# ----------------------------------------------------------------------------
# Configuration models
# ----------------------------------------------------------------------------

class ModelConfig(BaseModel):
    """Target cubic s(u - a_-)(a_+ - u)(u - a_*) or an explicit rate table"""
    alpha_minus: float = settings.model.alpha_minus
    alpha_star: float = settings.model.alpha_star
    alpha_plus: float = settings.model.alpha_plus
    scale: float = Field(settings.model.scale, gt=0)
    window_radius: int = Field(settings.model.window_radius, ge=0)
    rate_table: Optional[List[float]] = None
    glauber_off: bool = False


class GeometryConfig(BaseModel):
    d: int = Field(settings.lattice.dimension, ge=1, le=2)
    N: int = Field(settings.lattice.side, ge=2)


class InitialConfig(BaseModel):
    kind: InitialProfile = InitialProfile.TANH_FRONT
    u_minus: float = 0.25
    u_plus: float = 0.75
    center: float = 0.5
    half_width: float = 0.25
    width: float = 0.02
    radius: float = 0.25
    samples: Optional[List[float]] = None


class CertificateConfig(BaseModel):
    eps: float = Field(0.02, gt=0, lt=1)
    points_per_eps: float = 50.0
    residual_times: int = 5
    kappa: float = Field(settings.certificate.kappa, gt=0)
    sigma_override: Optional[float] = None
    delta: float = 0.05
    consistency_N: List[int] = Field(default_factory=lambda: [256, 512, 1024])
    sandwich_times: int = 6
    generation_sweep_factors: List[float] = Field(default_factory=lambda: [2.0, 1.0])


class SweepConfig(BaseModel):
    """N ladder for the particle system against the moving front; blocks per axis stay fixed"""
    N_values: List[int] = Field(default_factory=lambda: [500, 1000, 2000])
    blocks: int = Field(50, ge=1)
    slope_tolerance: float = Field(0.25, gt=0)


class ExperimentConfig(BaseModel):
    """One experiment; every field has a desk-scale default"""
    model: ModelConfig = Field(default_factory=ModelConfig)
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    certificate: CertificateConfig = Field(default_factory=CertificateConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    K: float = Field(settings.kmc.K, gt=1)
    K_exponent: Optional[float] = None
    schedule_delta: float = Field(1.0, gt=0)
    strict_schedule: bool = False
    replicas: int = Field(settings.kmc.replicas, ge=1)
    seed: int = settings.kmc.seed
    t_end: float = Field(settings.kmc.t_end, ge=0)
    output_times: List[float] = Field(default_factory=lambda: list(settings.kmc.observer_times))
    block: int = Field(settings.lattice.block_size, ge=1)
    ladder: List[int] = Field(default_factory=lambda: [128, 256, 512])
    ladder_exponent: Optional[float] = 0.3
    ladder_t_end: float = Field(0.5, gt=0)
    speed_tolerance: float = 0.1
    agreement_delta: float = 0.05
    neighborhood_factor: float = 0.5
    oracle_N: int = 4
    oracle_K: float = 4.0
    oracle_times: List[float] = Field(default_factory=lambda: [0.1, 0.5])
    oracle_initial: Optional[List[int]] = None
    output_dir: Optional[str] = None
    workers: Optional[int] = None

    @field_validator("output_times", "oracle_times")
    @classmethod
    def _sorted_times(cls, value: List[float]) -> List[float]:
        if any(t < 0 for t in value):
            raise ValueError("output times must be nonnegative")
        return sorted(set(float(t) for t in value))

    def K_for(self, N: int, exponent: Optional[float] = None) -> float:
        """K or the schedule K(N) = N^exponent"""
        if exponent is None:
            return self.K
        K = float(N) ** exponent
        if K <= 1:
            raise DomainError(f"schedule gives K={K} <= 1 at N={N}")
        return K

    @classmethod
    def from_file(cls, path: Optional[Union[str, Path]] = None,
                  overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        """Config file (JSON or TOML) merged with dotted-key overrides"""
        data: Dict[str, Any] = IOUtils.read_config_file(path) if path else {}
        for key, value in (overrides or {}).items():
            node = data
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
        return cls.model_validate(data)


# ----------------------------------------------------------------------------
# Model and initial data
# ----------------------------------------------------------------------------

@dataclass
class ModelBundle:
    f: ReactionPolynomial
    rates: RateFunction
    design: Optional[RateDesign] = None
    wave: Optional[WaveProfile] = None

    @property
    def c_star(self) -> float:
        return self.wave.c_star if self.wave is not None else 0.0


def target_cubic(cfg: ExperimentConfig) -> ReactionPolynomial:
    m = cfg.model
    return ReactionPolynomial.cubic(m.alpha_minus, m.alpha_star, m.alpha_plus, m.scale)


def build_model(cfg: ExperimentConfig, with_wave: bool = True) -> ModelBundle:
    """Rates, reaction polynomial and (optionally) the traveling wave"""
    window = LocalWindow(cfg.model.window_radius, cfg.geometry.d)
    if cfg.model.glauber_off:
        return ModelBundle(f=ReactionPolynomial((0.0,)), rates=RateFunction.constant(0.0, window))
    if cfg.model.rate_table is not None:
        rates = RateFunction(window, np.asarray(cfg.model.rate_table, dtype=float))
        report = validate_bistable_unbalanced(reaction_polynomial(rates), require_positive=False)
        if not report.passed:
            raise DomainError("rate table does not give a bistable unbalanced reaction",
                              {"messages": report.messages})
        f, design = reaction_polynomial(rates).with_roots(report.roots), None
    else:
        design = design_rates_report(target_cubic(cfg), window)
        rates, f = design.rates, design.target
    wave = solve_wave(f) if with_wave else None
    return ModelBundle(f=f, rates=rates, design=design, wave=wave)


def initial_profile(cfg: ExperimentConfig) -> Callable[..., np.ndarray]:
    """u0 as a function of the macroscopic coordinates"""
    p = cfg.initial
    lo, hi = p.u_minus, p.u_plus
    if p.kind == InitialProfile.TANH_FRONT:
        a, b = p.center - p.half_width, p.center + p.half_width

        def u0(*axes):
            v = axes[0]
            return lo + (hi - lo) * 0.5 * (np.tanh((v - a) / p.width) - np.tanh((v - b) / p.width))
        return u0
    if p.kind == InitialProfile.DISK:
        def u0(*axes):
            sq = sum(np.minimum(np.abs(v - p.center), 1.0 - np.abs(v - p.center)) ** 2 for v in axes)
            return lo + (hi - lo) * 0.5 * (1.0 - np.tanh((np.sqrt(sq) - p.radius) / p.width))
        return u0
    if p.samples is None or len(p.samples) < 2:
        raise DomainError("custom initial profile needs at least two samples")
    samples = np.asarray(p.samples, dtype=float)
    nodes = np.arange(samples.size) / samples.size

    def u0(*axes):
        return np.interp(np.mod(axes[0], 1.0), nodes, samples, period=1.0)
    return u0


def sample_initial(cfg: ExperimentConfig, M: int) -> ContinuumField:
    return ContinuumField.from_function(initial_profile(cfg), M, cfg.geometry.d)


PAIRING_FUNCTIONS: Dict[str, Callable[..., np.ndarray]] = {
    "one": lambda *axes: np.ones_like(axes[0]),
    "cos2pi": lambda *axes: np.cos(2.0 * np.pi * axes[0]),
    "sin2pi": lambda *axes: np.sin(2.0 * np.pi * axes[0]),
    "cos4pi": lambda *axes: np.cos(4.0 * np.pi * axes[0]),
}
TENSOR_FUNCTIONS: Dict[str, Callable[..., np.ndarray]] = {
    "cos2pi_xy": lambda *axes: np.cos(2.0 * np.pi * axes[0]) * np.cos(2.0 * np.pi * axes[1]),
}


def pairing_functions(d: int) -> Dict[str, Callable[..., np.ndarray]]:
    return {**PAIRING_FUNCTIONS, **(TENSOR_FUNCTIONS if d == 2 else {})}


def continuum_pairing(values: np.ndarray, phi: Callable[..., np.ndarray]) -> float:
    """Riemann sum of a nodal field against phi"""
    M, d = values.shape[0], values.ndim
    axes = np.meshgrid(*([np.arange(M) / M] * d), indexing="ij")
    return float((values * phi(*axes)).mean())


# ----------------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    margin: Optional[float] = None
    required: bool = True
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "value": self.value, "threshold": self.threshold,
                "margin": self.margin, "required": self.required, "message": self.message}


@dataclass
class ValidationReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    def get(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


MIN_CROSSING_SLOPE = 1e-2


def _crossing_slope(values: np.ndarray, level: float) -> float:
    """Smallest |grad u0| at the level crossings"""
    M = values.shape[0]
    grads = [(np.roll(values, -1, axis=k) - np.roll(values, 1, axis=k)) * M / 2.0 for k in range(values.ndim)]
    norm = np.sqrt(sum(g ** 2 for g in grads))
    above = values > level
    near = np.zeros_like(above)
    for k in range(values.ndim):
        near |= above != np.roll(above, -1, axis=k)
    if not near.any():
        raise ExtractionError(f"profile never crosses {level}")
    return float(norm[near].min())


def validate_config(cfg: ExperimentConfig, experiment: Optional[ExperimentKind] = None) -> ValidationReport:
    """Run every configuration check and report measured margins"""
    report = ValidationReport()
    m = cfg.model

    M = 4096 if cfg.geometry.d == 1 else 256
    try:
        values = sample_initial(cfg, M).values
    except DomainError as e:
        values = None
        report.checks.append(CheckResult("amplitudes", False, message=str(e)))
        report.checks.append(CheckResult("transversal_crossing", False, message=str(e)))

    if values is not None:
        # measured on the sampled field, so custom profiles are checked too
        low, high = float(values.min()), float(values.max())
        gaps = [low, m.alpha_star - low, high - m.alpha_star, 1.0 - high]
        margin = min(gaps)
        report.checks.append(CheckResult(
            "amplitudes", margin > 0, value=margin, threshold=0.0, margin=margin,
            message="" if margin > 0 else
            f"need 0 < min u0 < alpha_* < max u0 < 1, got min {low:.4g} and max {high:.4g}"))
        try:
            slope = _crossing_slope(values, m.alpha_star)
            front_from_level(values, m.alpha_star)
            report.checks.append(CheckResult(
                "transversal_crossing", slope >= MIN_CROSSING_SLOPE, value=slope,
                threshold=MIN_CROSSING_SLOPE, margin=slope - MIN_CROSSING_SLOPE,
                message="" if slope >= MIN_CROSSING_SLOPE else "level set of u0 is not a transversal crossing"))
        except (ExtractionError, DomainError) as e:
            report.checks.append(CheckResult("transversal_crossing", False, message=str(e)))

    if not m.glauber_off:
        try:
            if m.rate_table is not None:
                f = reaction_polynomial(RateFunction(LocalWindow(m.window_radius, cfg.geometry.d),
                                                     np.asarray(m.rate_table, dtype=float)))
            else:
                f = target_cubic(cfg)
            bist = validate_bistable_unbalanced(f, require_positive=False)
            report.checks.append(CheckResult("bistable_unbalanced", bist.passed, value=bist.integral,
                                             message="; ".join(bist.messages)))
        except DomainError as e:
            report.checks.append(CheckResult("bistable_unbalanced", False, message=str(e)))

    N = cfg.geometry.N
    K = cfg.K_for(N, cfg.K_exponent)
    bound = cfg.schedule_delta * math.sqrt(math.log(N))
    report.checks.append(CheckResult(
        "k_schedule", K <= bound, value=K, threshold=bound, margin=bound - K,
        required=experiment == ExperimentKind.HYDRO and cfg.strict_schedule,
        message="" if K <= bound else f"K={K:g} exceeds delta*sqrt(log N)={bound:.3f}; "
                                      f"lower K or raise schedule_delta"))

    divides = N % cfg.block == 0
    report.checks.append(CheckResult(
        "block_divides_N", divides, value=float(cfg.block),
        required=experiment in (ExperimentKind.HYDRO, ExperimentKind.KMC),
        message="" if divides else f"block {cfg.block} does not divide N={N}"))

    for check in report.checks:
        if not check.passed:
            logger.warning(f"Config check {check.name} failed: {check.message}")
    return report


def _require_valid(cfg: ExperimentConfig, experiment: ExperimentKind, run_id: str) -> ValidationReport:
    progress_manager.start_step(run_id, ExperimentStep.VALIDATE)
    report = validate_config(cfg, experiment)
    if not report.passed:
        failed = [c.name for c in report.checks if c.required and not c.passed]
        progress_manager.fail_step(run_id, ExperimentStep.VALIDATE, f"failed checks: {failed}")
        raise DomainError(f"configuration failed checks: {failed}", {"report": report.to_dict()})
    progress_manager.complete_step(run_id, ExperimentStep.VALIDATE)
    return report


def open_store(cfg: ExperimentConfig, experiment: str, store: Optional[ArtifactStore] = None) -> ArtifactStore:
    store = store or ArtifactStore.for_experiment(experiment, cfg.output_dir)
    config = cfg.model_dump(mode="json")
    store.write_manifest_header(experiment, config)
    store.put_json("config", config)
    return store


def _check(value: float, tolerance: float, margin: float, passed: Optional[bool] = None) -> Dict[str, Any]:
    return {"value": value, "tolerance": tolerance, "margin": margin,
            "passed": bool(margin >= 0.0 if passed is None else passed)}


# ----------------------------------------------------------------------------
# Pipelines
# ----------------------------------------------------------------------------

@handle_exceptions(severity=ErrorSeverity.HIGH, category=ErrorCategory.RATES)
def run_design(cfg: ExperimentConfig, store: Optional[ArtifactStore] = None) -> Dict[str, Any]:
    """Design the rate table for the configured cubic and check it reproduces f"""
    design = design_rates_report(target_cubic(cfg), LocalWindow(cfg.model.window_radius, cfg.geometry.d))
    recovered = reaction_polynomial(design.rates)
    passed = recovered.allclose(design.target, atol=1e-10)
    result = {"design": design.to_dict(), "recovered": recovered.to_dict(), "passed": passed}
    open_store(cfg, "design-rates", store).put_json("design", result)
    return result


@handle_exceptions(severity=ErrorSeverity.HIGH, category=ErrorCategory.SOLVER)
def run_wave(cfg: ExperimentConfig, store: Optional[ArtifactStore] = None) -> Dict[str, Any]:
    f = target_cubic(cfg)
    wave = solve_wave(f)
    tails = verify_tails(wave)
    analytic = analytic_cubic_speed(wave.reaction)
    result = {"wave": wave.metadata(), "tails": tails.to_dict(), "analytic_c_star": analytic,
              "speed_error": abs(wave.c_star - analytic),
              "passed": tails.passed and abs(wave.c_star - analytic) < 1e-6}
    store = open_store(cfg, "wave", store)
    store.put_frame("profile", wave.to_frame())
    store.put_json("wave", result)
    return result


def _run_replicas(cfg: ExperimentConfig, bundle: ModelBundle, K: float,
                  u0: ContinuumField) -> List:
    geometry = TorusGeometry(cfg.geometry.d, cfg.geometry.N)
    times = [t for t in cfg.output_times if t <= cfg.t_end]
    spec = ReplicaSpec(d=geometry.d, N=geometry.N, rates=bundle.rates.to_dict(), K=K, t_end=cfg.t_end,
                       observers=times, initial_density=u0.values.reshape(-1), seed=cfg.seed)
    return ReplicaRunner(cfg.workers).run(spec, cfg.replicas)


def _ensemble_profiles(results, block: int, times: Sequence[float]) -> np.ndarray:
    return np.stack([np.mean([empirical_measure(r.at(t), block).densities for r in results], axis=0)
                     for t in times])


@handle_exceptions(severity=ErrorSeverity.HIGH, category=ErrorCategory.SIMULATION)
def run_kmc(cfg: ExperimentConfig, store: Optional[ArtifactStore] = None,
            entropy_proxy: bool = False) -> Dict[str, Any]:
    """Particle replicas from the product measure of u0; saves block densities and snapshots"""
    run = progress_manager.create_run("kmc", [ExperimentStep.VALIDATE, ExperimentStep.DESIGN_RATES,
                                              ExperimentStep.SIMULATE, ExperimentStep.WRITE_OUTPUT])
    _require_valid(cfg, ExperimentKind.KMC, run.run_id)
    progress_manager.start_step(run.run_id, ExperimentStep.DESIGN_RATES)
    bundle = build_model(cfg, with_wave=False)
    progress_manager.complete_step(run.run_id, ExperimentStep.DESIGN_RATES)

    progress_manager.start_step(run.run_id, ExperimentStep.SIMULATE)
    N, K = cfg.geometry.N, cfg.K_for(cfg.geometry.N, cfg.K_exponent)
    results = _run_replicas(cfg, bundle, K, sample_initial(cfg, N))
    progress_manager.complete_step(run.run_id, ExperimentStep.SIMULATE)

    progress_manager.start_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    store = open_store(cfg, "kmc", store)
    frames = []
    for i, r in enumerate(results):
        frame = r.to_frame(cfg.block)
        frame.insert(0, "replica", i)
        frames.append(frame)
        store.put_bytes(f"replica{i:03d}_final", r.final.to_bytes(), suffix=IOUtils.SNAPSHOT_SUFFIX,
                        metadata={"seed": r.seed, "t": r.times[-1]})
    store.put_frame("trajectories", pd.concat(frames, ignore_index=True))
    result = {
        "N": N, "K": K, "replicas": len(results),
        "seeds": [r.seed for r in results],
        "events": [r.events for r in results],
        "absorbed": [r.absorbed for r in results],
        "config_hash": IOUtils.config_hash(cfg.model_dump(mode="json")),
        "passed": True,
    }
    if entropy_proxy:
        result["entropy_proxy"] = run_entropy_proxy(cfg, results=results, bundle=bundle)
    store.put_json("replicas", result)
    progress_manager.complete_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    return result


def run_entropy_proxy(cfg: ExperimentConfig, results=None, bundle: Optional[ModelBundle] = None) -> Dict[str, Any]:
    """Per-block relative entropy between Monte Carlo block densities and block averages of u^N"""
    bundle = bundle or build_model(cfg, with_wave=False)
    N, K = cfg.geometry.N, cfg.K_for(cfg.geometry.N, cfg.K_exponent)
    u0 = sample_initial(cfg, N)
    if results is None:
        results = _run_replicas(cfg, bundle, K, u0)
    times = [t for t in cfg.output_times if t <= cfg.t_end]
    trajectory = solve_pnk(u0.as_lattice(), bundle.f, K, cfg.t_end, times)
    mc = _ensemble_profiles(results, cfg.block, times)
    rows = []
    for t, p in zip(times, mc):
        u = trajectory.at(t)
        m = N // cfg.block
        q = u.reshape(sum(((m, cfg.block) for _ in range(u.ndim)), ())).mean(
            axis=tuple(range(1, 2 * u.ndim, 2)))
        rows.append({"t": t, "entropy_per_block": relative_entropy_product(np.clip(p, 0.0, 1.0), q) / q.size,
                     "max_abs_difference": float(np.abs(p - q).max())})
    return {"times": times, "rows": rows, "passed": all(math.isfinite(r["entropy_per_block"]) for r in rows)}


@dataclass
class HydroPoint:
    """Replicas at one lattice size compared with the moving step function"""
    N: int
    K: float
    summary: Dict[str, Any]
    deviations: pd.DataFrame
    profiles: np.ndarray
    times: List[float]


def _hydro_model(cfg: ExperimentConfig, run_id: str) -> ModelBundle:
    progress_manager.start_step(run_id, ExperimentStep.DESIGN_RATES)
    bundle = build_model(cfg, with_wave=False)
    progress_manager.complete_step(run_id, ExperimentStep.DESIGN_RATES)
    progress_manager.start_step(run_id, ExperimentStep.SOLVE_WAVE)
    if not cfg.model.glauber_off:
        bundle.wave = solve_wave(bundle.f)
        progress_manager.complete_step(run_id, ExperimentStep.SOLVE_WAVE, {"c_star": bundle.c_star})
    else:
        progress_manager.skip_step(run_id, ExperimentStep.SOLVE_WAVE)
    return bundle


def _hydro_compare(cfg: ExperimentConfig, bundle: ModelBundle, K: float, u0: ContinuumField,
                   results: List) -> HydroPoint:
    N, d = cfg.geometry.N, cfg.geometry.d
    m = cfg.model
    front0 = front_from_level(u0.values, m.alpha_star)
    times = [t for t in cfg.output_times if t <= cfg.t_end]
    phis = pairing_functions(d)
    rows = []
    for t in times:
        chi = chi_field(huygens_evolve(front0, bundle.c_star, t), m.alpha_minus, m.alpha_plus, N).values
        limits = {name: continuum_pairing(chi, phi) for name, phi in phis.items()}
        for i, r in enumerate(results):
            snap = r.at(t)
            for name, phi in phis.items():
                empirical = pairing(snap, phi)
                rows.append({"replica": i, "t": t, "phi": name, "empirical": empirical,
                             "limit": limits[name], "deviation": empirical - limits[name]})
    deviations = pd.DataFrame(rows)
    final = deviations[deviations["t"] == times[-1]]
    sup_deviation = float(final.groupby("phi")["deviation"].apply(lambda s: s.abs().mean()).max())
    per_replica = final.groupby("replica")["deviation"].apply(lambda s: s.abs().max())
    mass_std = float(final[final["phi"] == "one"]["empirical"].std(ddof=1)) if len(results) > 1 else 0.0

    profiles = _ensemble_profiles(results, cfg.block, times)
    speed: Optional[Dict[str, Any]] = None
    speed_ok = False
    try:
        estimate = front_speed(Trajectory(d=d, N=N // cfg.block, times=np.asarray(times), values=profiles),
                               m.alpha_star)
        speed = estimate.to_dict()
        reference = bundle.c_star
        if reference != 0.0:
            speed_ok = abs(estimate.speed - reference) <= cfg.speed_tolerance * abs(reference)
        else:
            speed_ok = estimate.contains(0.0)
    except ExtractionError as e:
        logger.warning(f"Front speed not extracted at N={N}: {e}")
        speed = {"error": str(e)}

    summary = {
        "N": N, "K": K, "c_star": bundle.c_star, "replicas": len(results),
        "sup_deviation": sup_deviation, "sup_deviation_ci": StatsUtils.mean_ci(per_replica.to_numpy()),
        "mass_std": mass_std, "speed": speed, "speed_within_tolerance": speed_ok,
        "seeds": [r.seed for r in results],
    }
    return HydroPoint(N=N, K=K, summary=summary, deviations=deviations, profiles=profiles, times=times)


def _profile_frame(point: HydroPoint) -> pd.DataFrame:
    profiles = point.profiles
    return pd.DataFrame({
        "t": np.repeat(point.times, profiles[0].size),
        "block": np.tile(np.arange(profiles[0].size), len(point.times)),
        "density": profiles.reshape(-1)})


@handle_exceptions(severity=ErrorSeverity.HIGH, category=ErrorCategory.SIMULATION)
def run_hydrodynamic(cfg: ExperimentConfig, store: Optional[ArtifactStore] = None) -> Dict[str, Any]:
    """Empirical measure of the particle system against the limit step function"""
    run = progress_manager.create_run("hydro", [
        ExperimentStep.VALIDATE, ExperimentStep.DESIGN_RATES, ExperimentStep.SOLVE_WAVE,
        ExperimentStep.SIMULATE, ExperimentStep.COMPARE, ExperimentStep.WRITE_OUTPUT])
    _require_valid(cfg, ExperimentKind.HYDRO, run.run_id)
    bundle = _hydro_model(cfg, run.run_id)

    progress_manager.start_step(run.run_id, ExperimentStep.SIMULATE)
    K = cfg.K_for(cfg.geometry.N, cfg.K_exponent)
    u0 = sample_initial(cfg, cfg.geometry.N)
    results = _run_replicas(cfg, bundle, K, u0)
    progress_manager.complete_step(run.run_id, ExperimentStep.SIMULATE)

    progress_manager.start_step(run.run_id, ExperimentStep.COMPARE)
    point = _hydro_compare(cfg, bundle, K, u0, results)
    progress_manager.complete_step(run.run_id, ExperimentStep.COMPARE)

    progress_manager.start_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    result = {**point.summary, "passed": point.summary["speed_within_tolerance"]}
    store = open_store(cfg, "hydro", store)
    store.put_frame("deviations", point.deviations)
    store.put_frame("profiles", _profile_frame(point))
    store.put_json("hydro", result)
    progress_manager.complete_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    return result


def sweep_configs(cfg: ExperimentConfig) -> List[ExperimentConfig]:
    """One config per sweep size, with block = N / blocks so every size has the same block grid"""
    sc = cfg.sweep
    if len(sc.N_values) < 2:
        raise DomainError("the hydrodynamic sweep needs at least two lattice sizes")
    if cfg.replicas < 2:
        raise DomainError("mass fluctuations need at least two replicas")
    configs = []
    for N in sorted(set(sc.N_values)):
        if N % sc.blocks:
            raise DomainError(f"sweep.blocks={sc.blocks} must divide N={N}")
        configs.append(cfg.model_copy(update={
            "geometry": cfg.geometry.model_copy(update={"N": N}), "block": N // sc.blocks}))
    return configs


@handle_exceptions(severity=ErrorSeverity.HIGH, category=ErrorCategory.SIMULATION)
def run_hydro_sweep(cfg: ExperimentConfig, store: Optional[ArtifactStore] = None) -> Dict[str, Any]:
    """Hydrodynamic comparison across sweep.N_values.

    Passes when the sup-deviation does not increase with N, the replica spread of the
    mass scales like N^{-d/2}, and the front speed at the largest N is within tolerance.
    """
    run = progress_manager.create_run("hydro-sweep", [
        ExperimentStep.VALIDATE, ExperimentStep.DESIGN_RATES, ExperimentStep.SOLVE_WAVE,
        ExperimentStep.SIMULATE, ExperimentStep.COMPARE, ExperimentStep.WRITE_OUTPUT])
    configs = sweep_configs(cfg)
    for c in configs:
        _require_valid(c, ExperimentKind.HYDRO, run.run_id)
    bundle = _hydro_model(cfg, run.run_id)

    progress_manager.start_step(run.run_id, ExperimentStep.SIMULATE)
    runs = []
    for k, c in enumerate(configs):
        K = c.K_for(c.geometry.N, c.K_exponent)
        u0 = sample_initial(c, c.geometry.N)
        runs.append((c, K, u0, _run_replicas(c, bundle, K, u0)))
        progress_manager.update_step_progress(run.run_id, ExperimentStep.SIMULATE, (k + 1) / len(configs))
    progress_manager.complete_step(run.run_id, ExperimentStep.SIMULATE)

    progress_manager.start_step(run.run_id, ExperimentStep.COMPARE)
    points = [_hydro_compare(c, bundle, K, u0, results) for c, K, u0, results in runs]
    N_values = [p.N for p in points]
    sups = [p.summary["sup_deviation"] for p in points]
    stds = [p.summary["mass_std"] for p in points]
    expected = -0.5 * cfg.geometry.d
    slope, slope_ci = float("nan"), None
    if all(s > 0.0 for s in stds):
        slope = StatsUtils.loglog_slope(N_values, stds)
        if len(points) >= 3:
            fit = StatsUtils.linear_fit(np.log(N_values), np.log(stds))
            slope_ci = [fit.ci_low, fit.ci_high]
    else:
        logger.warning(f"Replica mass spread vanished at some N: {stds}")
    slope_ok = bool(math.isfinite(slope) and (
        abs(slope - expected) <= cfg.sweep.slope_tolerance
        or (slope_ci is not None and slope_ci[0] <= expected <= slope_ci[1])))
    result = {
        "N_values": N_values,
        "points": [p.summary for p in points],
        "sup_deviation_non_increasing": StatsUtils.is_non_increasing(sups),
        "mass_std_slope": slope,
        "mass_std_slope_ci": slope_ci,
        "expected_slope": expected,
        "mass_scaling_ok": slope_ok,
        "speed_within_tolerance": points[-1].summary["speed_within_tolerance"],
    }
    result["passed"] = (result["sup_deviation_non_increasing"] and slope_ok
                        and result["speed_within_tolerance"])
    progress_manager.complete_step(run.run_id, ExperimentStep.COMPARE)

    progress_manager.start_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    store = open_store(cfg, "hydro-sweep", store)
    store.put_frame("sweep", pd.DataFrame([
        {"N": p.N, "K": p.K, "sup_deviation": p.summary["sup_deviation"], "mass_std": p.summary["mass_std"],
         "speed": (p.summary["speed"] or {}).get("speed"),
         "speed_within_tolerance": p.summary["speed_within_tolerance"]} for p in points]))
    store.put_frame("deviations", pd.concat([p.deviations.assign(N=p.N) for p in points], ignore_index=True))
    store.put_json("hydro_sweep", result)
    progress_manager.complete_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    logger.info(f"Hydrodynamic sweep over N={N_values}: mass slope {slope:.3f} (expected {expected}), "
                f"sup deviations {sups}")
    return result


def reference_speed(f: ReactionPolynomial) -> Tuple[ReactionPolynomial, float]:
    """f with roots attached and its wave speed (0 in the balanced case)"""
    report = validate_bistable_unbalanced(f, require_positive=False)
    if report.passed:
        wave = solve_wave(f.with_roots(report.roots))
        return wave.reaction, wave.c_star
    if report.bistable and report.slope_pattern:
        return f.with_roots(report.roots), 0.0
    raise DomainError("reaction is not bistable", {"messages": report.messages})


@handle_exceptions(severity=ErrorSeverity.HIGH, category=ErrorCategory.SOLVER)
def run_pde_ladder(cfg: ExperimentConfig, store: Optional[ArtifactStore] = None,
                   n_outputs: int = 11) -> Dict[str, Any]:
    """solve_pnk across the N ladder: front speeds and off-interface agreement"""
    run = progress_manager.create_run("pde", [ExperimentStep.SOLVE_WAVE, ExperimentStep.SOLVE_PDE,
                                              ExperimentStep.COMPARE, ExperimentStep.WRITE_OUTPUT])
    progress_manager.start_step(run.run_id, ExperimentStep.SOLVE_WAVE)
    f, c_ref = reference_speed(target_cubic(cfg))
    gamma = float(f.derivative()(f.alpha_star))
    progress_manager.complete_step(run.run_id, ExperimentStep.SOLVE_WAVE, {"c_star": c_ref})

    progress_manager.start_step(run.run_id, ExperimentStep.SOLVE_PDE)
    # every rung is compared with the limit on the nodes of the finest lattice
    M_ref = max(cfg.ladder)
    rows = []
    for k, N in enumerate(cfg.ladder):
        K = cfg.K_for(N, cfg.ladder_exponent) if cfg.ladder_exponent is not None else cfg.K
        u0 = sample_initial(cfg, N)
        t_gen = generation_time_pnk(K, gamma)
        if t_gen >= cfg.ladder_t_end:
            raise DomainError(f"ladder_t_end={cfg.ladder_t_end} does not exceed the generation time {t_gen:.4f} at N={N}")
        times = np.linspace(t_gen, cfg.ladder_t_end, n_outputs)
        trajectory = solve_pnk(u0.as_lattice(), f, K, cfg.ladder_t_end, [0.0, *times])
        estimate = front_speed(trajectory, f.alpha_star, t_start=t_gen)

        front = huygens_evolve(front_from_level(u0.values, f.alpha_star), c_ref, cfg.ladder_t_end)
        dist = front.grid_distance(M_ref)
        chi = np.where(dist < 0.0, f.alpha_plus, f.alpha_minus)
        away = np.abs(dist) > cfg.neighborhood_factor / math.sqrt(K)
        uN = LatticeField(TorusGeometry(cfg.geometry.d, N), trajectory.at(cfg.ladder_t_end))
        u = embed_step(uN).sample(M_ref).values
        agreement = float(np.mean(np.abs(u - chi)[away] <= cfg.agreement_delta)) if away.any() else float("nan")
        bounds = gradient_bounds(trajectory, K)
        rows.append({"N": N, "K": K, "t_gen": t_gen, "speed": estimate.speed, "ci_low": estimate.ci_low,
                     "ci_high": estimate.ci_high, "speed_error": abs(estimate.speed - c_ref),
                     "agreement_fraction": agreement, "C_gradient": bounds.C_gradient,
                     "C_laplacian": bounds.C_laplacian})
        progress_manager.update_step_progress(run.run_id, ExperimentStep.SOLVE_PDE, (k + 1) / len(cfg.ladder))
    progress_manager.complete_step(run.run_id, ExperimentStep.SOLVE_PDE)

    progress_manager.start_step(run.run_id, ExperimentStep.COMPARE)
    agreement = [r["agreement_fraction"] for r in rows]
    errors = [r["speed_error"] for r in rows]
    result = {
        "c_star": c_ref,
        "ladder": rows,
        "agreement_monotone": all(b >= a for a, b in zip(agreement, agreement[1:])),
        "speed_error_decreasing": StatsUtils.is_non_increasing(errors),
    }
    result["passed"] = result["agreement_monotone"] and result["speed_error_decreasing"]
    progress_manager.complete_step(run.run_id, ExperimentStep.COMPARE)

    progress_manager.start_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    store = open_store(cfg, "pde", store)
    store.put_frame("ladder", pd.DataFrame(rows))
    store.put_json("pde", result)
    progress_manager.complete_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    return result


@handle_exceptions(severity=ErrorSeverity.HIGH, category=ErrorCategory.GEOMETRY)
def run_certificates(cfg: ExperimentConfig, store: Optional[ArtifactStore] = None) -> Dict[str, Any]:
    """Wave, parameter selection, residuals, sandwich and consistency as one certificate"""
    run = progress_manager.create_run("certify", [
        ExperimentStep.VALIDATE, ExperimentStep.SOLVE_WAVE, ExperimentStep.SELECT_PARAMETERS,
        ExperimentStep.RESIDUALS, ExperimentStep.SANDWICH, ExperimentStep.WRITE_OUTPUT])
    _require_valid(cfg, ExperimentKind.CERTIFY, run.run_id)
    cc = cfg.certificate
    d = cfg.geometry.d
    checks: Dict[str, Dict[str, Any]] = {}

    progress_manager.start_step(run.run_id, ExperimentStep.SOLVE_WAVE)
    bundle = build_model(cfg)
    f, wave = bundle.f, bundle.wave
    tails = verify_tails(wave)
    tail_error = max(abs(tails.lambda_plus_fit / tails.lambda_plus - 1.0),
                     abs(tails.lambda_minus_fit / tails.lambda_minus - 1.0))
    checks["wave_tails"] = _check(tail_error, tails.rate_tolerance, tails.rate_tolerance - tail_error,
                                  passed=tails.passed)
    progress_manager.complete_step(run.run_id, ExperimentStep.SOLVE_WAVE, {"c_star": wave.c_star})

    progress_manager.start_step(run.run_id, ExperimentStep.SELECT_PARAMETERS)
    constants = derived_constants(f, cfg.initial.u_minus, cfg.initial.u_plus)
    beta = constants.beta
    sigma_max = sigma_bound(wave, beta)
    sigma = cc.sigma_override if cc.sigma_override is not None else select_sigma(sigma_max, f)
    checks["slope_inequality"] = _check(sigma, sigma_max, sigma_max - sigma,
                                        passed=slope_inequality_holds(wave, beta, sigma))

    eps = cc.eps
    M = int(math.ceil(cc.points_per_eps / eps))
    u0c = sample_initial(cfg, M)
    front0 = front_from_level(u0c.values, f.alpha_star)
    d0 = select_d0(front0)
    t_topology = first_topology_change(front0, wave.c_star, t_max=max(10.0 * cfg.t_end, 1.0))
    T = settings.certificate.horizon_fraction * t_topology if math.isfinite(t_topology) else math.inf
    horizon = min(T, cfg.t_end)
    if horizon <= 0:
        raise DomainError("certificate horizon is empty; increase t_end")

    t_eps = generation_time_pe(eps, constants.gamma)
    generation = solve_pe(u0c, f, eps, t_eps, [0.0, t_eps])
    gen_report = generation_check(generation, constants, f, u0c.values, cc.delta, M0=math.inf, eps=eps)
    M1 = max(1.0, gen_report.M0_min)
    generation_sweep = None
    if d == 1 and cc.generation_sweep_factors:
        eps_values = sorted({k * eps for k in cc.generation_sweep_factors}, reverse=True)
        if eps_values[0] >= 1.0:
            raise DomainError(f"generation sweep reaches eps={eps_values[0]}; factors must keep eps below 1")
        generation_sweep = sweep_generation_m0(f, constants, initial_profile(cfg), eps_values, cc.delta,
                                               points_per_eps=cc.points_per_eps)
    params = SubSuperParams(sigma=sigma, L=0.0, beta=beta, C_delta_d=laplacian_bound(front0, d0, M),
                            d0=d0, epsilon=eps, kappa=cc.kappa, T=T, sigma_max=sigma_max)
    target = generation.at(t_eps)
    params.L = search_L(target, params, wave, front0, M1)
    lower, upper = build_sub_super(params, wave, front0, 0.0, M)
    initial_margin = float(min((target - lower).min(), (upper - target).min()))
    checks["initial_ordering"] = _check(initial_margin, 0.0, initial_margin)
    progress_manager.complete_step(run.run_id, ExperimentStep.SELECT_PARAMETERS, params.to_dict())

    progress_manager.start_step(run.run_id, ExperimentStep.RESIDUALS)
    res = residual(params, wave, front0, f, np.linspace(0.0, horizon, cc.residual_times), M)
    checks["residual_super"] = _check(res.min_plus, res.target, res.margin_plus)
    checks["residual_sub"] = _check(res.max_minus, -res.target, res.margin_minus)
    progress_manager.complete_step(run.run_id, ExperimentStep.RESIDUALS)

    progress_manager.start_step(run.run_id, ExperimentStep.SANDWICH)
    N = cfg.geometry.N
    K = cfg.K_for(N, cfg.K_exponent)
    tol = settings.solver.ordering_tolerance
    u0N = sample_initial(cfg, N)
    front0N = front_from_level(u0N.values, f.alpha_star)
    d0N = select_d0(front0N)
    t_gen = generation_time_pnk(K, constants.gamma)
    times = np.linspace(t_gen, t_gen + horizon, cc.sandwich_times)
    trajectory = solve_pnk(u0N.as_lattice(), f, K, float(times[-1]), [0.0, *times])
    paramsN = SubSuperParams(sigma=sigma, L=0.0, beta=beta, C_delta_d=laplacian_bound(front0N, d0N, N),
                             d0=d0N, epsilon=1.0 / math.sqrt(K), kappa=cc.kappa, T=T, sigma_max=sigma_max)
    paramsN.L = search_L(trajectory.at(t_gen), paramsN, wave, front0N, M1)
    sandwich_rows = []
    for t in times:
        lo, up = build_sub_super(paramsN, wave, front0N, min(float(t - t_gen), horizon), N)
        u = trajectory.at(float(t))
        sandwich_rows.append({"t": float(t), "margin_lower": float((u - lo).min()),
                              "margin_upper": float((up - u).min()),
                              "violations": int(((u - lo) < -tol).sum() + ((up - u) < -tol).sum())})
    sandwich_margin = min(min(r["margin_lower"], r["margin_upper"]) for r in sandwich_rows)
    checks["sandwich"] = _check(sandwich_margin, tol, sandwich_margin + tol)

    consistency = None
    if d == 1:
        consistency = consistency_bound(paramsN, wave, front0N, 0.5 * horizon, K, cc.consistency_N)
        growth = consistency.growth
        checks["consistency"] = _check(growth, CONSISTENCY_GROWTH, CONSISTENCY_GROWTH - growth,
                                       passed=consistency.non_growing)
    progress_manager.complete_step(run.run_id, ExperimentStep.SANDWICH)

    progress_manager.start_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    certificate = {
        "experiment": "certify",
        "c_star": wave.c_star,
        "constants": constants.to_dict(),
        "horizon": horizon,
        "T": T,
        "generation": gen_report.to_dict(),
        "generation_sweep": generation_sweep,
        "residual_params": params.to_dict(),
        "sandwich_params": {**paramsN.to_dict(), "N": N, "K": K, "t_gen": t_gen},
        "sandwich": sandwich_rows,
        "consistency": consistency.to_dict() if consistency is not None else None,
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }
    store = open_store(cfg, "certify", store)
    store.put_json("certificate", certificate)
    progress_manager.complete_step(run.run_id, ExperimentStep.WRITE_OUTPUT)
    logger.info(f"Certificate {'passed' if certificate['passed'] else 'failed'}: "
                f"{[k for k, v in checks.items() if not v['passed']] or 'all checks'}")
    return certificate


@handle_exceptions(severity=ErrorSeverity.HIGH, category=ErrorCategory.SIMULATION)
def run_oracle(cfg: ExperimentConfig, store: Optional[ArtifactStore] = None) -> Dict[str, Any]:
    """Monte Carlo state frequencies against the exact law on a tiny torus"""
    d = cfg.geometry.d
    geometry = TorusGeometry(d, cfg.oracle_N)
    bundle = build_model(cfg, with_wave=False)
    if cfg.oracle_initial is not None:
        eta0 = Configuration(geometry, cfg.oracle_initial)
    else:
        occ = np.zeros(geometry.n_sites, dtype=np.uint8)
        occ[0] = 1
        eta0 = Configuration(geometry, occ)
    times = list(cfg.oracle_times)
    spec = ReplicaSpec(d=d, N=cfg.oracle_N, rates=bundle.rates.to_dict(), K=cfg.oracle_K, t_end=max(times),
                       observers=times, initial_state=eta0.to_bytes(), seed=cfg.seed)
    results = ReplicaRunner(cfg.workers).run(spec, cfg.replicas)
    alpha = 0.01 / len(times)
    rows = []
    for t in times:
        counts = state_frequencies(results, t)
        exact = exact_distribution(geometry, bundle.rates, cfg.oracle_K, t, eta0)
        test = StatsUtils.chi_square_agreement(counts, exact, alpha=alpha)
        rows.append({"t": t, **test.to_dict(), "exact": exact.tolist(), "counts": counts.tolist()})
    result = {"N": cfg.oracle_N, "d": d, "K": cfg.oracle_K, "replicas": cfg.replicas,
              "initial_state": eta0.state_index(), "rows": rows,
              "passed": all(r["passed"] for r in rows)}
    open_store(cfg, "oracle", store).put_json("oracle", result)
    return result
