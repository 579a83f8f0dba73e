"""Scenarios, experiment drivers and the command line interface."""

from .experiments import StabilityVerdict, classify, split_rates, sweep, table1
from .generators import random_overlay
from .scenario import Scenario, built_in_scenarios, load_scenario

__all__ = [
    "Scenario",
    "StabilityVerdict",
    "built_in_scenarios",
    "classify",
    "load_scenario",
    "random_overlay",
    "split_rates",
    "sweep",
    "table1",
]
