"""Preprocessing and benchmarking toolkit for bird's-eye-view traffic trajectory datasets."""

from .core import (
    MAX_SCORED_NEIGHBORS, MIN_SCORED_FUTURE, OBS_LEN, PRED_LEN, TARGET_RATE_HZ,
    AgentClass, DataError, Recording, Scenario, ScenarioError, Trajectory, validate_scenario, wrap_angle,
)

__version__ = "0.1.0"
