"""Finite-difference ADMM solver for deterministic mean field type control with congestion."""

from .admm import Problem, RunReport, SolverConfig, initialize, solve
from .cases import SCENARIOS, Scenario, get_scenario
from .geometry import Geometry, Kind, NodeClass, build_geometry, classify
from .krylov import KrylovConfig
from .model import CostModel

__all__ = [
    "CostModel",
    "Geometry",
    "Kind",
    "KrylovConfig",
    "NodeClass",
    "Problem",
    "RunReport",
    "SCENARIOS",
    "Scenario",
    "SolverConfig",
    "build_geometry",
    "classify",
    "get_scenario",
    "initialize",
    "solve",
]

__version__ = "0.1.0"
