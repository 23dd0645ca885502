"""Minimal and physical solutions of the McKean-Vlasov supercooled Stefan problem."""
from __future__ import annotations

__version__ = "0.1.0"

from .core import (
    BoundaryPath,
    DiracMixture,
    Empirical,
    GridDensity,
    InitialLaw,
    SimulationConfig,
    SubProbabilityGrid,
    TruncatedNormal,
    Uniform,
    blowup_law,
    cdf_eval,
    dominance_check,
    law_from_dict,
    shift_law,
    smooth_law_exponential,
)
from .density import (
    AbsorbingStepPlan,
    absorbing_step,
    apply_boundary_increment,
    gamma_map,
    physical_jump,
)
from .harness import (
    ExperimentReport,
    OrderingViolation,
    left_limit_probe,
    physical_limit_residual,
    right_continuity_probe,
    shift_scan,
)
from .m1 import dense_convergence_report, embed_left, levy_m1_distance
from .particles import cascade_resolve, crossing_diagnostic, simulate
from .solvers import PicardTrace, minimal_picard, physical_timestep, solve_residual

__all__ = [
    "AbsorbingStepPlan",
    "BoundaryPath",
    "DiracMixture",
    "Empirical",
    "ExperimentReport",
    "GridDensity",
    "InitialLaw",
    "OrderingViolation",
    "PicardTrace",
    "SimulationConfig",
    "SubProbabilityGrid",
    "TruncatedNormal",
    "Uniform",
    "absorbing_step",
    "apply_boundary_increment",
    "blowup_law",
    "cascade_resolve",
    "cdf_eval",
    "crossing_diagnostic",
    "dense_convergence_report",
    "dominance_check",
    "embed_left",
    "gamma_map",
    "law_from_dict",
    "left_limit_probe",
    "levy_m1_distance",
    "minimal_picard",
    "physical_jump",
    "physical_limit_residual",
    "physical_timestep",
    "right_continuity_probe",
    "shift_law",
    "shift_scan",
    "simulate",
    "smooth_law_exponential",
    "solve_residual",
]
