"""Deterministic agent-based energy community simulator with observer/controller
robustness architectures."""

from .model import (ScenarioConfig, AgentSpec, UnitModel, AttackConfig,
                    generate_default_scenario, validate_scenario,
                    load_scenario, save_scenario)
from .runner import Simulation, RunResult, run_scenario

__all__ = ["ScenarioConfig", "AgentSpec", "UnitModel", "AttackConfig",
           "generate_default_scenario", "validate_scenario",
           "load_scenario", "save_scenario",
           "Simulation", "RunResult", "run_scenario"]

__version__ = "0.1.0"
