"""Structured H-infinity design for parameter-dependent interconnected plants.

The package designs static output-feedback gains that are themselves
functions of model parameters, expanded over user-chosen scalar basis
functions and constrained by two access graphs: a control graph that
limits which measurements each subsystem sees, and a design graph that
limits which model parameters each local gain may depend on.  Synthesis
runs a min-max subgradient iteration on the closed-loop H-infinity norm;
evaluation tools include a Hamiltonian norm computer, saddle-point
verification, and competitive-ratio benchmarking against pointwise
optimal baselines.
"""
from .errors import (DimensionError, DomainError, NumericsError, ParseError,
                     SchemaError, StructHinfError, StructureError)
from .expr import BasisSet, Expr, parse_expr
from .hinf import HinfResult, Peak, SpectraplexWeights, freq_response, hinf_norm, \
    sigma_max, spectral_abscissa, uniform_weights
from .ratio import RatioRecord, RatioReport, baseline_optimal, competitive_ratio
from .saddle import (InnerResult, SaddleResult, StepSchedule, TraceRecord,
                     VerifyReport, inner_max, objective, objective_result,
                     solve_saddle, verify_saddle)
from .subgrad import (build_gain_aug, build_param_aug, gain_subgradient,
                      param_subgradient, param_subgradient_direct)
from .sysfile import (Problem, SolverSettings, design_result_to_dict, dump_json,
                      fixture_names, load_fixture, load_gains, load_problem)
from .system import (GainExpansion, Graph, ParamSystem, Partition, StateSpace,
                     ValidationReport, block_mask, eval_strategy, project_gains,
                     project_params, structure_masks, validate_system)

__version__ = "0.1.0"

__all__ = [
    "BasisSet", "Expr", "parse_expr",
    "DimensionError", "DomainError", "NumericsError", "ParseError",
    "SchemaError", "StructHinfError", "StructureError",
    "HinfResult", "Peak", "SpectraplexWeights", "freq_response", "hinf_norm",
    "sigma_max", "spectral_abscissa", "uniform_weights",
    "GainExpansion", "Graph", "ParamSystem", "Partition", "StateSpace",
    "ValidationReport", "block_mask", "eval_strategy", "project_gains",
    "project_params", "structure_masks", "validate_system",
    "build_gain_aug", "build_param_aug", "gain_subgradient",
    "param_subgradient", "param_subgradient_direct",
    "InnerResult", "SaddleResult", "StepSchedule", "TraceRecord",
    "VerifyReport", "inner_max", "objective", "objective_result",
    "solve_saddle", "verify_saddle",
    "RatioRecord", "RatioReport", "baseline_optimal", "competitive_ratio",
    "Problem", "SolverSettings", "design_result_to_dict", "dump_json",
    "fixture_names", "load_fixture", "load_gains", "load_problem",
    "__version__",
]
