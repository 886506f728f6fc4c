"""
Services module initialization
"""

from .lattice_core import TorusGeometry, LocalWindow, Configuration, exchange, flip, translate, read_window
from .glauber_rates import (
    RateFunction, ReactionPolynomial, BistabilityReport, DerivedConstants, RateDesign,
    reaction_polynomial, validate_bistable_unbalanced, design_rates, design_rates_report,
    derived_constants, analytic_cubic_speed, default_model,
)
from .kmc_engine import (
    MarkovState, KMCTrajectory, ReplicaRunner, ReplicaSpec, simulate, step,
    sample_product_measure, empirical_measure, exact_distribution,
)
from .reaction_diffusion import (
    LatticeField, ContinuumField, Trajectory, StepFunction, solve_pnk, solve_pe,
    embed_step, check_comparison, generation_check,
)
from .traveling_wave import WaveProfile, TailReport, solve_wave, verify_tails, sigma_bound
from .front_geometry import (
    FrontState, SubSuperParams, signed_distance, huygens_evolve, cutoff, build_sub_super,
    residual, front_speed,
)
from .experiment_harness import (
    ExperimentConfig, validate_config, run_design, run_wave, run_pde_ladder, run_kmc,
    run_certificates, run_hydrodynamic, run_entropy_proxy, run_oracle,
)

__all__ = [
    "TorusGeometry", "LocalWindow", "Configuration", "exchange", "flip", "translate", "read_window",
    "RateFunction", "ReactionPolynomial", "BistabilityReport", "DerivedConstants", "RateDesign",
    "reaction_polynomial", "validate_bistable_unbalanced", "design_rates", "design_rates_report",
    "derived_constants", "analytic_cubic_speed", "default_model",
    "MarkovState", "KMCTrajectory", "ReplicaRunner", "ReplicaSpec", "simulate", "step",
    "sample_product_measure", "empirical_measure", "exact_distribution",
    "LatticeField", "ContinuumField", "Trajectory", "StepFunction", "solve_pnk", "solve_pe",
    "embed_step", "check_comparison", "generation_check",
    "WaveProfile", "TailReport", "solve_wave", "verify_tails", "sigma_bound",
    "FrontState", "SubSuperParams", "signed_distance", "huygens_evolve", "cutoff", "build_sub_super",
    "residual", "front_speed",
    "ExperimentConfig", "validate_config", "run_design", "run_wave", "run_pde_ladder", "run_kmc",
    "run_certificates", "run_hydrodynamic", "run_entropy_proxy", "run_oracle",
]
