"""WSCC 9-bus test-system data and the daily base-load profile.

Network data is the classic Western System Coordinating Council 9-bus case:
3 machines, 9 branches, 3 loads totaling 315 MW + j115 Mvar on a 100 MVA
system base.  Machine dynamic constants (inertia on the machine MVA rating,
transient reactance on the system base) are the textbook values; droop,
governor lag and damping defaults describe plain primary control.  All of
them are plain dataclass fields, so operating-point studies can override any
subset with :func:`dataclasses.replace`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

N_BUS = 9
LOAD_BUSES = (5, 6, 8)


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str            # "slack" | "pv" | "pq"
    base_kv: float
    v_set: float | None = None   # setpoint for slack/pv buses


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float             # series resistance, pu
    x: float             # series reactance, pu
    b: float             # total line charging susceptance, pu


@dataclass(frozen=True)
class Load:
    bus: int
    p_mw: float
    q_mvar: float


@dataclass(frozen=True)
class Machine:
    bus: int
    mva: float           # machine rating, MVA
    xdp: float           # transient reactance, pu on the system base
    h_s: float           # inertia constant, s on the machine rating
    damping: float = 1.0     # damping coefficient, pu on the machine rating
    droop: float = 0.05      # governor speed droop, pu on the machine rating
    t_gov: float = 0.5       # turbine-governor lag, s
    p_set_mw: float | None = None  # dispatch; None for the slack machine


@dataclass(frozen=True)
class GridModel:
    s_base: float
    f_hz: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    machines: tuple[Machine, ...]
    loads: tuple[Load, ...]

    def bus_index(self, bus_id: int) -> int:
        return bus_id - 1

    def machine_for_bus(self, bus_id: int) -> Machine:
        for m in self.machines:
            if m.bus == bus_id:
                return m
        raise KeyError(f"no machine at bus {bus_id}")

    def with_machines(self, **overrides: tuple | list) -> "GridModel":
        """Return a copy with per-machine field overrides, e.g. h_s=(2, 2, 2)."""
        machines = list(self.machines)
        for name, values in overrides.items():
            if len(values) != len(machines):
                raise ValueError(f"{name}: expected {len(machines)} values")
            machines = [replace(m, **{name: v}) for m, v in zip(machines, values)]
        return replace(self, machines=tuple(machines))


def build_wscc9() -> GridModel:
    """Canonical WSCC 9-bus case on a 100 MVA base."""
    buses = (
        Bus(1, "slack", 16.5, 1.040),
        Bus(2, "pv", 18.0, 1.025),
        Bus(3, "pv", 13.8, 1.025),
        Bus(4, "pq", 230.0),
        Bus(5, "pq", 230.0),
        Bus(6, "pq", 230.0),
        Bus(7, "pq", 230.0),
        Bus(8, "pq", 230.0),
        Bus(9, "pq", 230.0),
    )
    branches = (
        Branch(1, 4, 0.0, 0.0576, 0.0),
        Branch(4, 6, 0.017, 0.092, 0.158),
        Branch(6, 9, 0.039, 0.17, 0.358),
        Branch(3, 9, 0.0, 0.0586, 0.0),
        Branch(8, 9, 0.0119, 0.1008, 0.209),
        Branch(7, 8, 0.0085, 0.072, 0.149),
        Branch(7, 2, 0.0, 0.0625, 0.0),
        Branch(5, 7, 0.032, 0.161, 0.306),
        Branch(4, 5, 0.01, 0.085, 0.176),
    )
    machines = (
        Machine(bus=1, mva=247.5, xdp=0.0608, h_s=23.64, p_set_mw=None),
        Machine(bus=2, mva=192.0, xdp=0.1198, h_s=6.40, p_set_mw=163.0),
        Machine(bus=3, mva=128.0, xdp=0.1813, h_s=3.01, p_set_mw=85.0),
    )
    loads = (
        Load(5, 125.0, 50.0),
        Load(6, 90.0, 30.0),
        Load(8, 100.0, 35.0),
    )
    return GridModel(s_base=100.0, f_hz=60.0, buses=buses,
                     branches=branches, machines=machines, loads=loads)


def build_ybus(model: GridModel) -> np.ndarray:
    """Bus admittance matrix (dense complex, network branches only)."""
    n = len(model.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in model.branches:
        i = model.bus_index(br.from_bus)
        j = model.bus_index(br.to_bus)
        ys = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b
        y[i, i] += ys + ysh
        y[j, j] += ys + ysh
        y[i, j] -= ys
        y[j, i] -= ys
    return y


# Synthetic state-wide daily demand, hourly MW.  Overnight trough at 04:00,
# evening peak at 18:00; the 24 values average to 6,968 MW exactly.
NSW_HOURLY_MW = (
    6420.0, 6180.0, 6010.0, 5920.0, 5897.0, 5960.0,
    6210.0, 6700.0, 7040.0, 7200.0, 7280.0, 7320.0,
    7320.0, 7270.0, 7240.0, 7260.0, 7360.0, 7800.0,
    8214.0, 8100.0, 7700.0, 7300.0, 6921.0, 6610.0,
)


def scale_base_profile(
    profile_mw: "np.ndarray | tuple | list",
    target_avg_mw: float,
) -> tuple[float, dict[int, np.ndarray]]:
    """Scale a demand series so its mean matches the grid's load and split it
    across the three load buses in proportion to the case loads (125:90:100).

    Returns ``(k, per_bus)`` where ``k`` is the scale factor and ``per_bus``
    maps load-bus id to the scaled MW series.
    """
    series = np.asarray(profile_mw, dtype=float)
    if series.size == 0:
        raise ValueError("profile is empty")
    if np.any(series <= 0):
        raise ValueError("profile values must be positive")
    if target_avg_mw <= 0:
        raise ValueError("target average must be positive")
    k = target_avg_mw / float(series.mean())
    loads = build_wscc9().loads
    total = sum(ld.p_mw for ld in loads)
    per_bus = {ld.bus: series * k * (ld.p_mw / total) for ld in loads}
    return k, per_bus
