"""EV fleet model: sizing arithmetic, stochastic sessions, load profiles.

The sizing chain turns a provincial vehicle registry into a fleet that
matches the 315 MW study system, and splits stations across the three
load buses.  The stochastic layer draws per-hour Poisson arrivals and
truncated-Gaussian charge durations per station, applies single-plug
blocking, and aggregates to a minute-resolution per-bus load profile.
"""

from .calibration import CalibrationReport, CalibrationTarget, calibrate
from .model import (
    ArrivalEvent,
    ArrivalSample,
    FleetConfig,
    HourlyParams,
    HourRow,
    LoadProfile,
    build_profile,
    connected_count,
    default_params,
    generate_day,
    sample_arrivals,
    sample_duration,
)
from .scaling import (
    EVCS_RATE_KW,
    EVS_PER_EVCS,
    EV_ADOPTION_SHARE,
    REGISTERED_VEHICLES,
    TOTAL_EVCS,
    TOTAL_EVS,
    FleetScale,
    attack_ev_count,
    evcs_split,
    largest_remainder,
    scale_fleet,
)

__all__ = [
    "CalibrationReport", "CalibrationTarget", "calibrate",
    "ArrivalEvent", "ArrivalSample", "FleetConfig", "HourlyParams",
    "HourRow", "LoadProfile", "build_profile", "connected_count",
    "default_params", "generate_day", "sample_arrivals", "sample_duration",
    "EVCS_RATE_KW", "EVS_PER_EVCS", "EV_ADOPTION_SHARE",
    "REGISTERED_VEHICLES", "TOTAL_EVCS", "TOTAL_EVS", "FleetScale",
    "attack_ev_count", "evcs_split", "largest_remainder", "scale_fleet",
]
