"""Scenario runner: build the whole co-simulation from one document, run
it on the event kernel, and reduce the run to a summary.

Boot order matters and is fixed here: CMS core first, then every
station (so boot notifications land on a live ledger), then the fleet
baseline feed, then the grid service, and the attack agents last.
Teardown closes every file sink so artifacts are complete on return.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..attack.botnet import AttackLog, BotnetAgent
from ..attack.detect import DivergenceDetector, DivergenceEvent
from ..attack.mitm import MitmAgent, MitmProxy
from ..attack.plan import bus_counts
from ..cms.core import CmsConfig, CmsCore, StationBinding
from ..cms.log import CmsLog
from ..evcs.core import EvcsConfig
from ..fleet.model import FleetConfig, generate_day
from ..kernel import EventKernel
from ..powergrid.relays import TripEvent
from ..powergrid.simulator import (
    BaseLoadCommand,
    DispatchCommand,
    GridSimulator,
    Measurement,
    MemorySink,
    TelemetryCsvWriter,
)
from ..powergrid.powerflow import solve_power_flow
from ..powergrid.wscc9 import NSW_HOURLY_MW, scale_base_profile
from ..runtime.kernelnet import (
    AppGateway,
    GridService,
    KernelClock,
    Station,
    build_station,
)
from .scenario import Scenario

F_NOMINAL_HZ = 60.0


def daily_loads_at(model, minute: float):
    """Case loads rescaled to the daily demand curve at a day minute.

    The hourly curve is minute-interpolated; reactive power keeps the
    case power factor per bus.
    """
    _, per_bus = scale_base_profile(NSW_HOURLY_MW,
                                    sum(ld.p_mw for ld in model.loads))
    h = int(minute // 60) % 24
    frac = (minute % 60) / 60.0
    loads = []
    for ld in model.loads:
        series = per_bus[ld.bus]
        lo, hi = float(series[h]), float(series[(h + 1) % 24])
        p = lo + (hi - lo) * frac
        loads.append(replace(ld, p_mw=p, q_mvar=ld.q_mvar * (p / ld.p_mw)))
    return tuple(loads)


class BaseProfileFeed:
    """Daily demand curve played into the grid as scheduled base load.

    Hourly values are minute-interpolated and each minute is scheduled
    the way a day-ahead dispatcher would: solve the steady-state case
    for that minute, command the load admittances that consume the
    profile at the prevailing voltage, and move scheduled generation to
    the solved total (losses included).  Pure feedforward of a
    published profile, no feedback control loop; the governors only
    ever see the residual between two minute updates.
    """

    def __init__(self, kernel: EventKernel, grid: GridService,
                 start_minute: int = 0, update_period_s: float = 60.0,
                 case_model=None):
        self.kernel = kernel
        self.grid = grid
        self.start_minute = start_minute
        self.update_period_s = update_period_s
        # profile shape comes from the unmodified case, even when the
        # simulator was initialized at some other minute's loads
        self._model = case_model or grid.simulator.model
        self._t0 = 0.0

    def mw_at(self, bus: int, minute: float) -> float:
        for ld in daily_loads_at(self._model, minute):
            if ld.bus == bus:
                return ld.p_mw
        raise KeyError(f"bus {bus} carries no load")

    def start(self, t_end: float) -> None:
        self._t0 = self.kernel.now
        t = self.kernel.now
        while t <= t_end:
            self.kernel.call_at(t, self._update)
            t += self.update_period_s

    def _update(self) -> None:
        minute = (self.start_minute
                  + (self.kernel.now - self._t0) / 60.0) % 1440
        loads = daily_loads_at(self._model, minute)
        sol = solve_power_flow(replace(self._model, loads=loads))
        sim = self.grid.simulator
        v_ref = sim.state.v_ref
        for ld in loads:
            i = self._model.bus_index(ld.bus)
            # the simulator turns (p, q) into an admittance at the t=0
            # reference voltage; re-anchor so the admittance consumes
            # the scheduled power at the prevailing voltage instead
            # (load-model recalibration, no frequency feedback)
            k = (float(np.abs(v_ref[i]))
                 / float(np.abs(sim.state.v[i]))) ** 2
            sim.submit(BaseLoadCommand(ld.bus, ld.p_mw * k, ld.q_mvar * k))
        # generation schedule = profile + the case's loss allowance
        total_gen = float(np.sum(sol.s_machine.real)) * self._model.s_base
        sim.submit(DispatchCommand(total_gen))


class ConnectedFeed:
    """Plugged-in vehicle counts walked along the fleet's day profile.

    Availability only: connected vehicles bound what a start (local,
    remote or hostile) can capture.  No power flows until a charging
    session actually starts.
    """

    def __init__(self, kernel: EventKernel, stations_by_bus, profile,
                 start_minute: int = 0):
        self.kernel = kernel
        self.stations_by_bus = stations_by_bus
        self.profile = profile
        self.start_minute = start_minute
        self._t0 = 0.0

    def start(self, t_end: float) -> None:
        self._t0 = self.kernel.now
        t = self.kernel.now
        while t <= t_end:
            self.kernel.call_at(t, self._update)
            t += 60.0

    def _update(self) -> None:
        minute = int(self.start_minute
                     + (self.kernel.now - self._t0) / 60.0) % 1440
        for bus, evcs in self.stations_by_bus.items():
            evcs.set_connected(self.profile.count_at(bus, minute))


class LatencyProbe:
    """App-to-telemetry latency: accepted start -> first grid step where
    that bus's EV load moves."""

    def __init__(self, bus_of_evcs: dict[str, int]):
        self.bus_of_evcs = bus_of_evcs
        self.samples: list[float] = []
        self._pending: dict[int, float] = {}
        self._last_ev: dict[int, float] = {}

    def on_app_record(self, record) -> None:
        req, resp = record.request, record.response
        if getattr(req, "verb", None) != "start" or resp is None:
            return
        if not resp.ok:
            return
        bus = self.bus_of_evcs.get(req.evcs_id)
        if bus is not None and bus not in self._pending:
            self._pending[bus] = record.t_submit

    def on_measurement(self, m: Measurement) -> None:
        for bus, t0 in list(self._pending.items()):
            before = self._last_ev.get(bus)
            now = m.ev_mw.get(bus, 0.0)
            if before is not None and abs(now - before) > 1e-9:
                self.samples.append(m.t - t0)
                del self._pending[bus]
        self._last_ev = dict(m.ev_mw)


class SummaryTap:
    """Streaming min/max/trip bookkeeping so summaries do not require
    keeping 24 h of measurements in memory."""

    def __init__(self) -> None:
        self.steps = 0
        self.f_min = math.inf
        self.f_max = -math.inf
        self.peak_abs_dev = 0.0

    def __call__(self, m: Measurement) -> None:
        self.steps += 1
        f = m.f_coi_hz
        if math.isnan(f):
            return
        self.f_min = min(self.f_min, f)
        self.f_max = max(self.f_max, f)
        self.peak_abs_dev = max(self.peak_abs_dev, abs(f - F_NOMINAL_HZ))


@dataclass
class RunResult:
    scenario_name: str
    mode: str
    dt_s: float
    duration_s: float
    steps: int
    wall_seconds: float
    peak_abs_dev_hz: float
    f_min_hz: float
    f_max_hz: float
    trips: list[TripEvent]
    blackout: bool
    rows_written: int
    attack_edges: int
    aborted_captures: list[str]
    app_latency_count: int
    app_latency_mean_s: float | None
    app_latency_max_s: float | None
    divergence: DivergenceEvent | None
    files: dict[str, str]
    measurements: list[Measurement] = field(default_factory=list)
    pacing_overruns: int = 0
    pacing_max_lag_s: float = 0.0
    pacing_mean_lag_s: float = 0.0

    def summary_dict(self) -> dict:
        div = None
        if self.divergence is not None:
            div = {
                "t_s": self.divergence.t_s,
                "onset_s": self.divergence.onset_s,
                "worst_mw": self.divergence.worst_mw,
                "buses": list(self.divergence.buses),
            }
        doc = {
            "scenario": self.scenario_name,
            "mode": self.mode,
            "dt_s": self.dt_s,
            "duration_s": self.duration_s,
            "steps": self.steps,
            "wall_seconds": round(self.wall_seconds, 3),
            "peak_abs_dev_hz": self.peak_abs_dev_hz,
            "f_min_hz": self.f_min_hz,
            "f_max_hz": self.f_max_hz,
            "trips": [
                {"machine": f"g{ev.machine + 1}", "bus": ev.bus,
                 "t_s": ev.t, "f_hz": ev.f_hz,
                 "threshold_hz": ev.threshold_hz, "side": ev.side}
                for ev in self.trips
            ],
            "blackout": self.blackout,
            "rows_written": self.rows_written,
            "attack_edges": self.attack_edges,
            "aborted_captures": self.aborted_captures,
            "app_latency": {
                "count": self.app_latency_count,
                "mean_s": self.app_latency_mean_s,
                "max_s": self.app_latency_max_s,
            },
            "divergence": div,
            "files": self.files,
        }
        if self.mode == "realtime":
            doc["pacing"] = {
                "overruns": self.pacing_overruns,
                "max_lag_s": self.pacing_max_lag_s,
                "mean_lag_s": self.pacing_mean_lag_s,
            }
        return doc


def run_scenario(scenario: Scenario, out_dir: str | os.PathLike,
                 keep_memory: bool = False) -> RunResult:
    """Run one accelerated scenario end to end and write its artifacts.

    ``keep_memory`` additionally retains every measurement on the
    result, which plots and tests use; leave it off for long runs.
    """
    if scenario.grid.mode != "accelerated":
        raise ValueError(
            "run_scenario handles accelerated mode; realtime runs go "
            "through evcosim.net.realtime")
    out = os.fspath(out_dir)
    os.makedirs(out, exist_ok=True)
    wall0 = time.perf_counter()

    kernel = EventKernel()
    clock = KernelClock(kernel)
    files = {
        "telemetry": os.path.join(out, scenario.output.telemetry),
        "cms_log": os.path.join(out, scenario.output.cms_log),
        "summary": os.path.join(out, scenario.output.summary),
    }

    cms_log = CmsLog(files["cms_log"])
    cms = CmsCore(
        CmsConfig(
            heartbeat_interval_s=scenario.heartbeat_interval_s,
            rate_kw=scenario.fleet.rate_kw,
            stations={
                s.cp_id: StationBinding(bus=s.bus,
                                        aggregate_count=s.aggregate_count)
                for s in scenario.stations
            },
        ),
        clock, cms_log)

    case_model = scenario.grid.build_model()
    start_minute = scenario.fleet.clock_minute or 0
    sim_model = case_model
    if scenario.grid.base_profile == "daily":
        # initialize the power flow at the start minute's loads so the
        # run opens on the scheduled operating point, not the case one
        sim_model = replace(case_model,
                            loads=daily_loads_at(case_model, start_minute))
    simulator = GridSimulator(sim_model, scenario.grid.relay_config(),
                              dt=scenario.grid.dt_s)
    telemetry = TelemetryCsvWriter(files["telemetry"],
                                   scenario.output.decimation)
    memory = MemorySink() if keep_memory else None
    tap = SummaryTap()
    probe = LatencyProbe({s.cp_id: s.bus for s in scenario.stations})
    detector = DivergenceDetector()

    def feed_detector(m: Measurement) -> None:
        ledger_mw = {b: kw / 1000.0
                     for b, kw in cms.ledger_power_kw().items()}
        detector.feed(m.t, m.ev_mw, ledger_mw)

    sinks = [telemetry] + ([memory] if memory else [])
    grid = GridService(kernel, simulator, sinks=tuple(sinks),
                       listeners=(tap, probe.on_measurement, feed_detector))

    stations: dict[str, Station] = {}
    for spec in scenario.stations:
        stations[spec.cp_id] = build_station(
            kernel, cms,
            EvcsConfig(cp_id=spec.cp_id, bus=spec.bus,
                       aggregate_count=spec.aggregate_count,
                       rate_kw=scenario.fleet.rate_kw),
            connected=spec.connected_evs,
            on_load=grid.apply_load)
    gateway = AppGateway(kernel, cms)
    gateway.observers.append(probe.on_app_record)

    feeds = []
    if scenario.grid.base_profile == "daily":
        feeds.append(BaseProfileFeed(kernel, grid,
                                     start_minute=start_minute,
                                     case_model=case_model))
    if scenario.fleet.profile == "generated":
        profile, _ = generate_day(
            FleetConfig(rate_kw=scenario.fleet.rate_kw),
            seed=scenario.fleet.seed)
        by_bus_evcs = {s.bus: stations[s.cp_id].evcs
                       for s in scenario.stations}
        feeds.append(ConnectedFeed(kernel, by_bus_evcs, profile,
                                   start_minute=start_minute))

    attack_edges = 0
    aborted: list[str] = []
    attack_log = None
    proxies: dict[int, MitmProxy] = {}
    duration = scenario.grid.duration_s
    if scenario.attack is not None:
        plan = scenario.attack
        by_bus = {s.bus: s.cp_id for s in scenario.stations}
        if plan.mode == "botnet":
            files["attack_log"] = os.path.join(out,
                                               scenario.output.attack_log)
            attack_log = AttackLog(files["attack_log"])
            agent = BotnetAgent(kernel, gateway, plan,
                                {b: by_bus[b] for b in plan.buses},
                                rate_kw=scenario.fleet.rate_kw,
                                log=attack_log)
            attack_edges = agent.arm(duration)
            aborted = agent.aborted
        else:
            counts = bus_counts(plan, scenario.fleet.rate_kw)
            for bus in plan.buses:
                proxy = MitmProxy(
                    kernel,
                    keepalive_interval_s=scenario.heartbeat_interval_s)
                st = stations[by_bus[bus]]
                proxy.splice(st.client, st.server)
                proxies[bus] = proxy
            agent = MitmAgent(kernel, proxies, plan, counts=counts)
            attack_edges = agent.arm(duration)

    # power flow first: the feeds need the initial dispatch as their
    # feedforward reference
    simulator.initialize()
    for feed in feeds:
        feed.start(duration)
    grid.start(duration)
    kernel.run_until(duration)

    grid.stop()
    for st in stations.values():
        st.client.close()
        st.server.close()
    telemetry.close()
    cms_log.close()
    if attack_log is not None:
        attack_log.close()

    latencies = probe.samples
    result = RunResult(
        scenario_name=scenario.name,
        mode=scenario.grid.mode,
        dt_s=scenario.grid.dt_s,
        duration_s=duration,
        steps=tap.steps,
        wall_seconds=time.perf_counter() - wall0,
        peak_abs_dev_hz=tap.peak_abs_dev,
        f_min_hz=tap.f_min if tap.steps else float("nan"),
        f_max_hz=tap.f_max if tap.steps else float("nan"),
        trips=list(simulator.trip_events),
        blackout=simulator.blackout,
        rows_written=telemetry.rows_written,
        attack_edges=attack_edges,
        aborted_captures=list(aborted),
        app_latency_count=len(latencies),
        app_latency_mean_s=(sum(latencies) / len(latencies)
                            if latencies else None),
        app_latency_max_s=max(latencies) if latencies else None,
        divergence=detector.flagged,
        files=files,
        measurements=memory.measurements if memory else [],
    )
    with open(files["summary"], "w", encoding="utf-8") as fh:
        json.dump(result.summary_dict(), fh, indent=2)
        fh.write("\n")
    return result
