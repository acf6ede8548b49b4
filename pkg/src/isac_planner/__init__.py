"""Joint trajectory, power, and time-division planner for cooperative
ISAC UAV missions."""

from .errors import (DegenerateAnchor, DegenerateGeometry,
                     InfeasibleScenario, InfeasibleSensing, InfeasibleStart,
                     InfeasibleSubproblem, ParseError, PlannerError,
                     SolverFailure, ValidationError)
from .geometry import ArrayGeometry, Trajectory
from .planner import (AoState, BENCHMARK_KINDS, compare_schemes,
                      ConvergenceCriteria, evaluate_solution,
                      initialize_state, run_ao, run_benchmark)
from .scenario import (PositionSetting, Scenario, bundled_scenario_path,
                       dbm_to_watts, load_bundled, load_scenario,
                       position_settings, save_scenario,
                       validate_scenario)
from .sensing import BeamCodebook, build_codebook, codebook_from_scenario

__all__ = [
    "AoState", "ArrayGeometry", "BeamCodebook", "BENCHMARK_KINDS",
    "ConvergenceCriteria", "DegenerateAnchor", "DegenerateGeometry",
    "InfeasibleScenario", "InfeasibleSensing", "InfeasibleStart",
    "InfeasibleSubproblem", "ParseError", "PlannerError", "PositionSetting",
    "Scenario", "SolverFailure", "Trajectory", "ValidationError",
    "build_codebook", "bundled_scenario_path", "codebook_from_scenario",
    "compare_schemes",
    "dbm_to_watts", "evaluate_solution", "initialize_state", "load_bundled",
    "load_scenario", "position_settings", "run_ao", "run_benchmark",
    "save_scenario",
    "validate_scenario",
]

__version__ = "0.1.0"
