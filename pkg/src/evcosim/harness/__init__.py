"""Run harness: scenario documents, the end-to-end runner, and plots."""

from .runner import (
    BaseProfileFeed,
    ConnectedFeed,
    LatencyProbe,
    RunResult,
    run_scenario,
)
from .scenario import (
    BASE_PROFILES,
    FLEET_PROFILES,
    GRID_MODES,
    GRID_PRESETS,
    FleetSection,
    GridSection,
    OutputSection,
    Scenario,
    ScenarioError,
    StationSpec,
    builtin_scenarios,
    load_builtin,
    load_scenario,
    scenario_from_dict,
)

__all__ = [
    "BASE_PROFILES", "FLEET_PROFILES", "GRID_MODES", "GRID_PRESETS",
    "BaseProfileFeed", "ConnectedFeed", "FleetSection", "GridSection",
    "LatencyProbe", "OutputSection", "RunResult", "Scenario",
    "ScenarioError", "StationSpec", "builtin_scenarios", "load_builtin",
    "load_scenario", "run_scenario", "scenario_from_dict",
]
