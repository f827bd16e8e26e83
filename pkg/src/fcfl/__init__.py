"""Simulation and verification toolkit for communication-free learning of graph colourings."""

from .graph import Graph, GraphSpec, build, is_proper, unsatisfied_set
from .engine import Engine, EngineConfig, ResetSchedule, fast_run, make_config

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "GraphSpec",
    "build",
    "is_proper",
    "unsatisfied_set",
    "Engine",
    "EngineConfig",
    "ResetSchedule",
    "fast_run",
    "make_config",
]
