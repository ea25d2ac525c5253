"""WSCC 9-bus grid: power flow, classical transient dynamics, relays, telemetry."""

from .wscc9 import (
    Branch,
    Bus,
    GridModel,
    Load,
    Machine,
    LOAD_BUSES,
    NSW_HOURLY_MW,
    build_wscc9,
    build_ybus,
    scale_base_profile,
)
from .powerflow import PowerFlowError, PowerFlowSolution, solve_power_flow
from .dynamics import DynamicState, StepError, initialize_dynamics
from .relays import RelayConfig, RelayBank, TripEvent, check_relays
from .simulator import (
    BaseLoadCommand,
    DispatchCommand,
    GridSimulator,
    LoadCommand,
    LoadMailbox,
    Measurement,
    MemorySink,
    RunSummary,
    TelemetryCsvWriter,
    TELEMETRY_COLUMNS,
)

__all__ = [
    "Branch", "Bus", "GridModel", "Load", "Machine", "LOAD_BUSES",
    "NSW_HOURLY_MW", "build_wscc9", "build_ybus", "scale_base_profile",
    "PowerFlowError", "PowerFlowSolution", "solve_power_flow",
    "DynamicState", "StepError", "initialize_dynamics",
    "RelayConfig", "RelayBank", "TripEvent", "check_relays",
    "BaseLoadCommand", "DispatchCommand", "GridSimulator", "LoadCommand",
    "LoadMailbox", "Measurement", "MemorySink", "RunSummary",
    "TelemetryCsvWriter", "TELEMETRY_COLUMNS",
]
