"""Grid simulator: command mailbox, run loop, relays, telemetry output.

The simulator owns one :class:`DynamicsEngine` plus its state and advances it
step by step.  External components never touch the state directly; they
submit commands to a thread-safe mailbox which is drained exactly once per
step, so a command enqueued before step ``k`` is part of step ``k``'s network
solution and visible in its measurement.
"""

from __future__ import annotations

import csv
import threading
import time
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .dynamics import DynamicLoadParams, DynamicsEngine, DynamicState, StepError
from .powerflow import solve_power_flow
from .relays import RelayBank, RelayConfig, TripEvent
from .wscc9 import GridModel, LOAD_BUSES, build_wscc9


@dataclass(frozen=True)
class LoadCommand:
    """Absolute EV load for one bus (replaces the previous command)."""
    bus: int
    p_kw: float
    q_kvar: float = 0.0
    ts: float = 0.0


@dataclass(frozen=True)
class BaseLoadCommand:
    """Scheduled base-load update (constant-impedance component)."""
    bus: int
    p_mw: float
    q_mvar: float


@dataclass(frozen=True)
class DispatchCommand:
    """Scheduled total-generation target; spread over in-service machines."""
    total_mw: float


class LoadMailbox:
    """Thread-safe command queue drained once per simulation step."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._pending: list = []

    def put(self, cmd) -> None:
        with self._lock:
            self._pending.append(cmd)

    def drain(self) -> list:
        with self._lock:
            cmds, self._pending = self._pending, []
        return cmds


@dataclass(frozen=True)
class Measurement:
    t: float
    f_machine_hz: tuple[float, ...]
    f_coi_hz: float
    v_mag_pu: tuple[float, ...]
    p_load_mw: dict[int, float]
    q_load_mvar: dict[int, float]
    ev_mw: dict[int, float]
    tripped: tuple[str, ...]


TELEMETRY_COLUMNS = (
    ["t_s", "f_coi_hz", "f_g1_hz", "f_g2_hz", "f_g3_hz"]
    + [f"v_bus{i}_pu" for i in range(1, 10)]
    + [f"p_bus{b}_mw" for b in LOAD_BUSES]
    + [f"ev_bus{b}_mw" for b in LOAD_BUSES]
    + ["trip_flags"]
)


def measurement_row(m: Measurement) -> list[str]:
    """Measurement as CSV field strings (shortest round-trip float form)."""
    row = [repr(float(m.t)), repr(float(m.f_coi_hz))]
    row += [repr(float(f)) for f in m.f_machine_hz]
    row += [repr(float(v)) for v in m.v_mag_pu]
    row += [repr(float(m.p_load_mw[b])) for b in LOAD_BUSES]
    row += [repr(float(m.ev_mw[b])) for b in LOAD_BUSES]
    row.append(";".join(m.tripped))
    return row


class TelemetryCsvWriter:
    """RFC 4180 telemetry sink with optional decimation."""

    def __init__(self, path: str, decimation: int = 1) -> None:
        if decimation < 1:
            raise ValueError("decimation must be >= 1")
        self.path = path
        self.decimation = decimation
        self.rows_written = 0
        self._seen = 0
        self._fh: IO[str] = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(TELEMETRY_COLUMNS)

    def write(self, m: Measurement) -> None:
        self._seen += 1
        if self._seen % self.decimation == 0:
            self._writer.writerow(measurement_row(m))
            self.rows_written += 1

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


class MemorySink:
    """Keeps all measurements in memory (tests, plots)."""

    def __init__(self) -> None:
        self.measurements: list[Measurement] = []

    def write(self, m: Measurement) -> None:
        self.measurements.append(m)

    def close(self) -> None:
        pass


@dataclass
class RunSummary:
    mode: str
    dt: float
    duration_s: float
    steps: int
    wall_seconds: float
    trips: list[TripEvent]
    peak_abs_dev_hz: float
    blackout: bool
    partial: bool = False
    reason: str = ""
    pacing_overruns: int = 0
    pacing_max_lag_s: float = 0.0
    pacing_mean_lag_s: float = 0.0
    sink_overflow: int = 0


class GridSimulator:
    """One grid instance: power flow init, stepping, relays, run loop."""

    def __init__(
        self,
        model: GridModel | None = None,
        relay_config: RelayConfig | None = None,
        dt: float = 1e-3,
        load_params: DynamicLoadParams | None = None,
    ) -> None:
        if not 0.0 < dt <= 0.01:
            raise ValueError("dt must be in (0, 10 ms]")
        self.model = model or build_wscc9()
        self.dt = dt
        self.engine = DynamicsEngine(self.model, load_params)
        self.relay_config = relay_config or RelayConfig()
        self.mailbox = LoadMailbox()
        self.state: DynamicState | None = None
        self.relays: RelayBank | None = None
        self.steps = 0
        self.trip_events: list[TripEvent] = []
        self.blackout = False
        self._largest = int(np.argmax([m.mva for m in self.model.machines]))
        self._dispatch0: np.ndarray | None = None

    # ----------------------------------------------------------------- setup

    def initialize(self) -> None:
        sol = solve_power_flow(self.model)
        self.state = self.engine.initialize(sol)
        self.relays = RelayBank(self.relay_config,
                                [m.bus for m in self.model.machines])
        self.steps = 0
        self.trip_events = []
        self.blackout = False
        self._dispatch0 = self.state.pm_ref.copy()

    def dispatch_total_mw(self) -> float:
        """Total scheduled generation from the initial power flow, MW."""
        if self._dispatch0 is None:
            raise RuntimeError("initialize() must be called first")
        return float(np.sum(self._dispatch0 * self.engine.mva))

    # -------------------------------------------------------------- commands

    def submit(self, cmd) -> int:
        """Queue a command; returns the step count at enqueue time.

        The command takes effect in step ``returned_value + 1`` (the next
        step to execute) and is visible in that step's measurement.
        """
        self.mailbox.put(cmd)
        return self.steps

    def _apply(self, cmd) -> None:
        st = self.state
        if isinstance(cmd, LoadCommand):
            i = self.model.bus_index(cmd.bus)
            st.p_ev[i] = cmd.p_kw / 1000.0 / self.model.s_base
            st.q_ev[i] = cmd.q_kvar / 1000.0 / self.model.s_base
        elif isinstance(cmd, BaseLoadCommand):
            i = self.model.bus_index(cmd.bus)
            s_pu = complex(cmd.p_mw, cmd.q_mvar) / self.model.s_base
            st.y_load[i] = np.conj(s_pu) / st.v_ref[i] ** 2
            self.engine.rebuild(st)
        elif isinstance(cmd, DispatchCommand):
            # Equal per-machine pu increment spreads the delta by MVA rating.
            act = st.active
            total0 = float(np.sum(self._dispatch0 * self.engine.mva * act))
            delta_mw = cmd.total_mw - total0
            mva_act = float(np.sum(self.engine.mva[act]))
            if mva_act > 0:
                st.pm_ref = np.where(
                    act, self._dispatch0 + delta_mw / mva_act, st.pm_ref)
        else:
            raise TypeError(f"unknown command type: {type(cmd).__name__}")

    # ------------------------------------------------------------------ step

    def step(self) -> Measurement:
        """Drain the mailbox, advance one RK4 step, run relays.

        Raises :class:`StepError` when the network solution collapses.
        """
        if self.state is None:
            raise RuntimeError("initialize() must be called before step()")
        st = self.state
        for cmd in self.mailbox.drain():
            self._apply(cmd)

        self.engine.step(st, self.dt)

        f0 = self.model.f_hz
        f_mach = f0 * (1.0 + st.omega)
        act = st.active
        weights = self.engine.h * self.engine.mva
        if act.any():
            f_coi = float(np.sum(weights[act] * f_mach[act])
                          / np.sum(weights[act]))
        else:
            f_coi = float("nan")

        p_mw, q_mvar = self.engine.bus_load_power(st)
        ev_mw = self.engine.ev_power_mw(st)

        trips = self.relays.update(st.t, f_mach, act)
        for ev in trips:
            st.active[ev.machine] = False
            self.trip_events.append(ev)
        if trips:
            self.engine.rebuild(st)
        if self.relays.tripped[self._largest] or not st.active.any():
            self.blackout = True

        self.steps += 1
        return Measurement(
            t=st.t,
            f_machine_hz=tuple(float(f) for f in f_mach),
            f_coi_hz=f_coi,
            v_mag_pu=tuple(float(v) for v in np.abs(st.v)),
            p_load_mw={b: float(p_mw[self.model.bus_index(b)]) for b in LOAD_BUSES},
            q_load_mvar={b: float(q_mvar[self.model.bus_index(b)]) for b in LOAD_BUSES},
            ev_mw={b: float(ev_mw[self.model.bus_index(b)]) for b in LOAD_BUSES},
            tripped=tuple(f"g{i + 1}" for i in range(len(act))
                          if self.relays.tripped[i]),
        )

    # ------------------------------------------------------------------- run

    def run(
        self,
        duration_s: float,
        mode: str = "accelerated",
        sinks: Iterable = (),
        stop_on_collapse: bool = True,
    ) -> RunSummary:
        """Run for a fixed horizon in accelerated or wall-clock-paced mode."""
        if mode not in ("accelerated", "realtime"):
            raise ValueError("mode must be 'accelerated' or 'realtime'")
        if self.state is None:
            self.initialize()
        sinks = list(sinks)
        n_steps = round(duration_s / self.dt)
        t_wall0 = time.perf_counter()
        peak = 0.0
        partial = False
        reason = ""
        overruns = 0
        max_lag = 0.0
        lag_sum = 0.0
        k = 0
        for k in range(1, n_steps + 1):
            if mode == "realtime":
                target = t_wall0 + k * self.dt
                lag = time.perf_counter() - target
                if lag > 0:
                    overruns += 1
                    max_lag = max(max_lag, lag)
                    lag_sum += lag
                else:
                    time.sleep(-lag)
            try:
                m = self.step()
            except StepError as exc:
                partial = True
                reason = f"network collapse: {exc}"
                self.blackout = True
                break
            if np.isfinite(m.f_coi_hz):
                peak = max(peak, abs(m.f_coi_hz - self.model.f_hz))
            try:
                for sink in sinks:
                    sink.write(m)
            except Exception as exc:  # sink failure: stop with partial results
                partial = True
                reason = f"telemetry sink failure: {exc}"
                break
            if not self.state.active.any():
                partial = True
                reason = "all machines tripped"
                break
            if stop_on_collapse and self.blackout and not self.state.active.any():
                break
        wall = time.perf_counter() - t_wall0
        return RunSummary(
            mode=mode,
            dt=self.dt,
            duration_s=duration_s,
            steps=self.steps,
            wall_seconds=wall,
            trips=list(self.trip_events),
            peak_abs_dev_hz=peak,
            blackout=self.blackout,
            partial=partial,
            reason=reason,
            pacing_overruns=overruns,
            pacing_max_lag_s=max_lag,
            pacing_mean_lag_s=(lag_sum / overruns if overruns else 0.0),
            sink_overflow=sum(getattr(s, "overflow_count", 0) for s in sinks),
        )
