"""Scenario files: one YAML document describing a whole co-simulation run.

Validation is deliberately not fail-fast: a scenario author gets every
problem in one pass, not one per attempt.  ``load_scenario`` raises
:class:`ScenarioError` carrying the full list.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources

import yaml

from ..attack.plan import AttackPlan, plan_from_dict
from ..powergrid.relays import RelayConfig
from ..powergrid.wscc9 import GridModel, LOAD_BUSES, build_wscc9

GRID_PRESETS = ("canonical", "low-inertia-evening")
GRID_MODES = ("accelerated", "realtime")
BASE_PROFILES = ("constant", "daily")
FLEET_PROFILES = ("none", "generated")


class ScenarioError(ValueError):
    """Carries every validation problem found in a scenario document."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class GridSection:
    dt_s: float = 1e-3
    duration_s: float = 60.0
    mode: str = "accelerated"
    preset: str = "canonical"
    base_profile: str = "constant"
    over_hz: float = 61.5
    under_hz: float = 58.5
    pickup_s: float = 0.1

    def build_model(self) -> GridModel:
        model = build_wscc9()
        if self.preset == "low-inertia-evening":
            # stressed evening system: little rotating mass, sluggish
            # governors, weak droop; the demand-attack demo condition
            model = model.with_machines(
                h_s=(2.0, 2.0, 2.0), droop=(0.08,) * 3,
                t_gov=(4.0,) * 3, damping=(0.5,) * 3)
        return model

    def relay_config(self) -> RelayConfig:
        return RelayConfig(over_hz=self.over_hz, under_hz=self.under_hz,
                           pickup_s=self.pickup_s)


@dataclass(frozen=True)
class FleetSection:
    profile: str = "none"
    seed: int = 0
    rate_kw: float = 24.0
    clock_minute: int | None = None   # pin short runs to a day minute


@dataclass(frozen=True)
class StationSpec:
    cp_id: str
    bus: int
    aggregate_count: int
    connected_evs: int = 0


@dataclass(frozen=True)
class OutputSection:
    telemetry: str = "telemetry.csv"
    decimation: int = 1
    cms_log: str = "cms.csv"
    attack_log: str = "attack.csv"
    summary: str = "summary.json"


@dataclass(frozen=True)
class Scenario:
    name: str
    grid: GridSection = field(default_factory=GridSection)
    fleet: FleetSection = field(default_factory=FleetSection)
    stations: tuple[StationSpec, ...] = ()
    heartbeat_interval_s: int = 180
    attack: AttackPlan | None = None
    output: OutputSection = field(default_factory=OutputSection)

    def stations_by_bus(self) -> dict[int, StationSpec]:
        return {s.bus: s for s in self.stations}


def _check(doc: dict, key: str, kind, violations: list[str], where: str,
           default=None):
    value = doc.get(key, default)
    if value is None:
        return default
    if kind is float and isinstance(value, int) \
            and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        violations.append(f"{where}.{key}: expected {kind.__name__}, "
                          f"got {type(value).__name__}")
        return default
    return value


def scenario_from_dict(doc: dict) -> Scenario:
    violations: list[str] = []
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario must be a mapping"])
    known = {"name", "description", "grid", "fleet", "topology", "attack",
             "output"}
    for key in doc.keys() - known:
        violations.append(f"unknown top-level section: {key}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        violations.append("name: required non-empty string")
        name = "unnamed"

    g = doc.get("grid") or {}
    grid = GridSection(
        dt_s=_check(g, "dt_s", float, violations, "grid", 1e-3),
        duration_s=_check(g, "duration_s", float, violations, "grid", 60.0),
        mode=_check(g, "mode", str, violations, "grid", "accelerated"),
        preset=_check(g, "preset", str, violations, "grid", "canonical"),
        base_profile=_check(g, "base_profile", str, violations, "grid",
                            "constant"),
        over_hz=_check(g, "over_hz", float, violations, "grid", 61.5),
        under_hz=_check(g, "under_hz", float, violations, "grid", 58.5),
        pickup_s=_check(g, "pickup_s", float, violations, "grid", 0.1),
    )
    if grid.mode not in GRID_MODES:
        violations.append(f"grid.mode: must be one of {GRID_MODES}")
    if grid.preset not in GRID_PRESETS:
        violations.append(f"grid.preset: must be one of {GRID_PRESETS}")
    if grid.base_profile not in BASE_PROFILES:
        violations.append(
            f"grid.base_profile: must be one of {BASE_PROFILES}")
    if not 0.0 < grid.dt_s <= 0.01:
        violations.append("grid.dt_s: must be in (0, 0.01]")
    if grid.duration_s <= 0:
        violations.append("grid.duration_s: must be positive")
    if grid.under_hz >= grid.over_hz:
        violations.append("grid: under_hz must be below over_hz")

    f = doc.get("fleet") or {}
    fleet = FleetSection(
        profile=_check(f, "profile", str, violations, "fleet", "none"),
        seed=_check(f, "seed", int, violations, "fleet", 0),
        rate_kw=_check(f, "rate_kw", float, violations, "fleet", 24.0),
        clock_minute=_check(f, "clock_minute", int, violations, "fleet"),
    )
    if fleet.profile not in FLEET_PROFILES:
        violations.append(f"fleet.profile: must be one of {FLEET_PROFILES}")
    if fleet.rate_kw <= 0:
        violations.append("fleet.rate_kw: must be positive")
    if fleet.clock_minute is not None \
            and not 0 <= fleet.clock_minute < 1440:
        violations.append("fleet.clock_minute: must be in [0, 1440)")

    topo = doc.get("topology") or {}
    interval = _check(topo, "heartbeat_interval_s", int, violations,
                      "topology", 180)
    if interval is not None and interval <= 0:
        violations.append("topology.heartbeat_interval_s: must be positive")
    stations: list[StationSpec] = []
    seen_ids: set[str] = set()
    for i, s in enumerate(topo.get("stations") or []):
        where = f"topology.stations[{i}]"
        if not isinstance(s, dict):
            violations.append(f"{where}: expected a mapping")
            continue
        cp_id = s.get("cp_id")
        if not isinstance(cp_id, str) or not cp_id:
            violations.append(f"{where}.cp_id: required non-empty string")
            continue
        if cp_id in seen_ids:
            violations.append(f"{where}.cp_id: duplicate id {cp_id!r}")
        seen_ids.add(cp_id)
        bus = _check(s, "bus", int, violations, where, -1)
        if bus not in LOAD_BUSES:
            violations.append(f"{where}.bus: must be one of {LOAD_BUSES}")
        agg = _check(s, "aggregate_count", int, violations, where, 1)
        if agg < 1:
            violations.append(f"{where}.aggregate_count: must be >= 1")
        conn = _check(s, "connected_evs", int, violations, where, 0)
        if conn < 0:
            violations.append(f"{where}.connected_evs: must be >= 0")
        stations.append(StationSpec(cp_id, bus, max(agg, 1), max(conn, 0)))

    attack = None
    a = doc.get("attack")
    if a is not None:
        if not isinstance(a, dict):
            violations.append("attack: expected a mapping")
        elif a.get("enabled", True):
            body = {k: v for k, v in a.items() if k != "enabled"}
            try:
                attack = plan_from_dict(body)
            except ValueError as exc:
                violations.append(f"attack: {exc}")
            else:
                station_buses = {s.bus for s in stations}
                for bus in attack.buses:
                    if bus not in station_buses:
                        violations.append(
                            f"attack: bus {bus} has no station in topology")
                if attack.start_s >= grid.duration_s:
                    violations.append(
                        "attack: start_s is past the end of the run")

    o = doc.get("output") or {}
    output = OutputSection(
        telemetry=_check(o, "telemetry", str, violations, "output",
                         "telemetry.csv"),
        decimation=_check(o, "decimation", int, violations, "output", 1),
        cms_log=_check(o, "cms_log", str, violations, "output", "cms.csv"),
        attack_log=_check(o, "attack_log", str, violations, "output",
                          "attack.csv"),
        summary=_check(o, "summary", str, violations, "output",
                       "summary.json"),
    )
    if output.decimation < 1:
        violations.append("output.decimation: must be >= 1")

    if violations:
        raise ScenarioError(violations)
    return Scenario(name=name, grid=grid, fleet=fleet,
                    stations=tuple(stations),
                    heartbeat_interval_s=interval, attack=attack,
                    output=output)


def load_scenario(path: str | os.PathLike) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(yaml.safe_load(fh))


def builtin_scenarios() -> tuple[str, ...]:
    """Names of the scenario files shipped inside the package."""
    root = resources.files("evcosim") / "scenarios"
    return tuple(sorted(entry.name[:-5] for entry in root.iterdir()
                        if entry.name.endswith(".yaml")))


def load_builtin(name: str) -> Scenario:
    root = resources.files("evcosim") / "scenarios"
    entry = root / f"{name}.yaml"
    if not entry.is_file():
        known = ", ".join(builtin_scenarios())
        raise ScenarioError(
            [f"no built-in scenario named {name!r} (available: {known})"])
    return scenario_from_dict(yaml.safe_load(entry.read_text(
        encoding="utf-8")))
