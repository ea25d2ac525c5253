"""Fleet sizing arithmetic and proportional splits.

The study system carries 315 MW of load while the source region it
stands in for averages 6,968 MW, so the region's 5,892,206 registered
vehicles shrink by the same ratio.  Half of those are assumed electric,
ten EVs share one charging station, and each station delivers 24 kW.
Every stage rounds to a whole count before the next stage consumes it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

REGISTERED_VEHICLES = 5_892_206
EV_ADOPTION_SHARE = 0.5
EVS_PER_EVCS = 10
EVCS_RATE_KW = 24.0

CASE_LOAD_MW = 315.0
REGION_MEAN_MW = 6_968.0

# frozen outputs of scale_fleet with the defaults above
TOTAL_EVS = 133_184
TOTAL_EVCS = 13_318

# per-bus weights follow the base-case load split 125:90:100
DEFAULT_BUS_WEIGHTS: Mapping[int, float] = {5: 125.0, 6: 90.0, 8: 100.0}


@dataclass(frozen=True)
class FleetScale:
    """Sizing chain outputs, each stage a whole count."""

    scaled_vehicles: int
    ev_count: int
    evcs_count: int


def scale_fleet(
    registered_vehicles: int = REGISTERED_VEHICLES,
    case_load_mw: float = CASE_LOAD_MW,
    region_mean_mw: float = REGION_MEAN_MW,
    ev_share: float = EV_ADOPTION_SHARE,
    evs_per_evcs: int = EVS_PER_EVCS,
) -> FleetScale:
    if registered_vehicles <= 0:
        raise ValueError("registered_vehicles must be positive")
    if case_load_mw <= 0 or region_mean_mw <= 0:
        raise ValueError("load figures must be positive")
    if not 0 <= ev_share <= 1:
        raise ValueError("ev_share must lie in [0, 1]")
    if evs_per_evcs <= 0:
        raise ValueError("evs_per_evcs must be positive")
    scaled = round(registered_vehicles * case_load_mw / region_mean_mw)
    evs = round(scaled * ev_share)
    evcs = round(evs / evs_per_evcs)
    return FleetScale(scaled, evs, evcs)


def attack_ev_count(target_mw: float, rate_kw: float = EVCS_RATE_KW) -> int:
    """How many synchronized EVs produce the target power step."""
    if target_mw < 0 or rate_kw <= 0:
        raise ValueError("target_mw must be >= 0 and rate_kw > 0")
    return round(target_mw * 1000.0 / rate_kw)


def largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Split an integer total proportionally without losing units.

    Each share gets the floor of its exact quota; the leftover units go
    to the largest fractional remainders (ties broken by position).
    """
    if total < 0:
        raise ValueError("total must be >= 0")
    if not weights or any(w < 0 for w in weights):
        raise ValueError("weights must be non-empty and non-negative")
    wsum = float(sum(weights))
    if wsum == 0:
        raise ValueError("weights must not sum to zero")
    quotas = [total * w / wsum for w in weights]
    shares = [int(q) for q in quotas]
    leftover = total - sum(shares)
    order = sorted(range(len(weights)),
                   key=lambda i: (quotas[i] - shares[i], -i), reverse=True)
    for i in order[:leftover]:
        shares[i] += 1
    return shares


def evcs_split(
    total: int = TOTAL_EVCS,
    bus_weights: Mapping[int, float] = DEFAULT_BUS_WEIGHTS,
) -> dict[int, int]:
    """Station count per load bus, proportional to base load."""
    buses = sorted(bus_weights)
    shares = largest_remainder(total, [bus_weights[b] for b in buses])
    return dict(zip(buses, shares))
