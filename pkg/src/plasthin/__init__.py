"""Quasistatic perfect plasticity of thin plates with periodic microstructure.

The package solves the rescaled three-dimensional problem at finite
thickness ``h`` and its two-scale homogenized limit at ``gamma = h / eps``,
and audits energy balance, stability, stress admissibility and two-scale
convergence of the discrete solutions.
"""

from .errors import (
    AssemblyError,
    ConfigurationError,
    ConstraintViolationError,
    ConvergenceError,
    InvalidParameterError,
    PlasthinError,
    PreconditionError,
    RangeError,
    ShapeError,
    UnsupportedGridError,
)
from .discretization import BoundaryDatum, PlateMesh, assemble_Eh, assemble_elastic_system, eval_boundary_datum
from .materials import MaterialLibrary, PhaseMaterial, interface_dissipation, plastic_update
from .microstructure import PhaseMap, build_phase_map, eps_phase_at, interfaces, phase_at
from .solver import (
    EvolutionState,
    IncrementReport,
    PlateProblem,
    SolverConfig,
    incremental_step_h,
    run_evolution_h,
    stability_audit,
)
from .twoscale import TwoScaleProblem, TwoScaleState, assemble_Etilde_gamma, incremental_step_hom, run_evolution_hom
from .audit import AdmissibilityReport, check_Kh, check_Khom, max_plastic_work_check
from .unfolding import UnfoldedField, two_scale_gap, unfold
from .config import ScenarioConfig

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityReport", "AssemblyError", "BoundaryDatum", "ConfigurationError", "ConstraintViolationError",
    "ConvergenceError", "EvolutionState", "IncrementReport", "InvalidParameterError", "MaterialLibrary",
    "PhaseMap", "PhaseMaterial", "PlasthinError", "PlateMesh", "PlateProblem", "PreconditionError", "RangeError",
    "ScenarioConfig", "ShapeError", "SolverConfig", "TwoScaleProblem", "TwoScaleState", "UnfoldedField",
    "UnsupportedGridError", "assemble_Eh", "assemble_Etilde_gamma", "assemble_elastic_system", "build_phase_map",
    "check_Kh", "check_Khom", "eps_phase_at", "eval_boundary_datum", "incremental_step_h", "incremental_step_hom",
    "interface_dissipation", "interfaces", "max_plastic_work_check", "phase_at", "plastic_update",
    "run_evolution_h", "run_evolution_hom", "stability_audit", "two_scale_gap", "unfold",
]
