"""LPV model predictive control for vehicle path tracking and obstacle avoidance.

The package provides an exact LPV embedding of a dynamic bicycle model, a
condensed QP formulation with a dense ADMM solver, LPV MPC with and without a
scheduling trust region, an SQP-based nonlinear MPC baseline and a
closed-loop simulator.
"""
from .config import dump_defaults, load_config, parse_config
from .constraints import BoxLimits, EllipseObstacle, RoadBoundary, TrustRegionConfig
from .controllers import (ControllerConfig, LpvMpcController, NmpcSqpController, lpv_mpc_step,
                          make_controller, nmpc_sqp_step, preset_config)
from .errors import (ConfigError, DegenerateGeometry, DegenerateWaypoint, DimensionMismatch,
                     DomainError, EmptyTrajectory, LpvMpcError, ProjectionFailure)
from .qp import AdmmSettings, DenseAdmmSolver, solve_qp
from .reference import build_reference_window, circular_track
from .sim import (Scenario, TrajectoryLog, feasibility_study, generate_study_scenarios,
                  run_closed_loop, timing_report)
from .vehicle import VehicleParams, dynamics_rhs, lpv_continuous, lpv_discrete, rk4_step

__version__ = "0.1.0"

__all__ = [
    "dump_defaults", "load_config", "parse_config", "BoxLimits", "EllipseObstacle",
    "RoadBoundary", "TrustRegionConfig", "ControllerConfig", "LpvMpcController",
    "NmpcSqpController", "lpv_mpc_step", "make_controller", "nmpc_sqp_step", "preset_config",
    "ConfigError", "DegenerateGeometry", "DegenerateWaypoint", "DimensionMismatch",
    "DomainError", "EmptyTrajectory", "LpvMpcError", "ProjectionFailure", "AdmmSettings",
    "DenseAdmmSolver", "solve_qp", "build_reference_window", "circular_track", "Scenario",
    "TrajectoryLog", "feasibility_study", "generate_study_scenarios", "run_closed_loop",
    "timing_report", "VehicleParams", "dynamics_rhs", "lpv_continuous", "lpv_discrete",
    "rk4_step",
]
