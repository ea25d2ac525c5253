"""Wall-clock scenario service: the co-simulation over live transports.

Accelerated runs serialize everything on the event kernel; here the
same cores run against real infrastructure instead:

* the grid steps in its own thread, paced to the wall clock,
* stations talk OCPP to the CMS over real WebSockets,
* app traffic (hostile or not) goes through HTTP,
* the optional MitM relay sits in the actual socket path.

Cross-thread traffic converges on two thread-safe seams: the simulator
mailbox (loads in) and the measurement sinks (telemetry out).  Attack
schedules and latency probes are rebased to the grid thread's start so
their timestamps line up with simulator seconds.
"""

from __future__ import annotations

import asyncio
import json
import logging
import math
import os
import threading
import time
from dataclasses import replace

from ..attack.botnet import AttackLog, BotnetAgent
from ..attack.detect import DivergenceDetector
from ..attack.mitm import MitmAgent
from ..attack.plan import bus_counts
from ..cms.core import CmsConfig, CmsCore, StationBinding
from ..cms.log import CmsLog
from ..evcs.core import EvcsConfig
from ..evcs.core import LoadCommand as EvcsLoadCommand
from ..fleet.model import MINUTES_PER_DAY, FleetConfig, generate_day
from ..harness.runner import LatencyProbe, RunResult, SummaryTap
from ..harness.scenario import Scenario
from ..powergrid.simulator import (
    GridSimulator,
    LoadCommand,
    MemorySink,
    RunSummary,
    TelemetryCsvWriter,
)
from .api import AppApiServer, HttpAppGateway
from .clock import LoopScheduler, OffsetClock, RealClock
from .mitmrelay import MitmWsRelay
from .ws import CmsWsServer, EvcsWsClient

log = logging.getLogger(__name__)

BOOT_TIMEOUT_S = 10.0


class LoadBook:
    """Per-charge-point commanded kW, summed per bus into the mailbox.

    Station callbacks land on the loop thread while the grid drains the
    mailbox on its own; the book is the locked meeting point.
    """

    def __init__(self, simulator: GridSimulator, clock) -> None:
        self.simulator = simulator
        self.clock = clock
        self._lock = threading.Lock()
        self._cp_kw: dict[str, tuple[int, float]] = {}

    def apply(self, cmd: EvcsLoadCommand) -> None:
        with self._lock:
            self._cp_kw[cmd.cp_id] = (cmd.bus, cmd.power_kw)
            bus_kw = sum(kw for bus, kw in self._cp_kw.values()
                         if bus == cmd.bus)
        self.simulator.submit(LoadCommand(bus=cmd.bus, p_kw=bus_kw,
                                          ts=self.clock.now()))


class _CallSink:
    """Measurement callback adapted to the sink protocol."""

    def __init__(self, fn) -> None:
        self.fn = fn

    def write(self, m) -> None:
        self.fn(m)

    def close(self) -> None:
        pass


class _LockedProbe:
    """Latency probe with its two entry points serialized: app records
    arrive on the loop thread, measurements on the grid thread.

    Samples use the wall clock on both ends.  Simulator timestamps are
    step counts paced to the wall, so accumulated pacing lag would skew
    (and can even sign-flip) a wall-to-sim difference.
    """

    def __init__(self, probe: LatencyProbe) -> None:
        self.probe = probe
        self.clock = None
        self._lock = threading.Lock()

    def on_app_record(self, record) -> None:
        with self._lock:
            self.probe.on_app_record(record)

    def write(self, m) -> None:
        with self._lock:
            if self.clock is not None:
                m = replace(m, t=self.clock.now())
            self.probe.on_measurement(m)

    def close(self) -> None:
        pass


async def _wait_for_boots(core: CmsCore, cp_ids: list[str]) -> None:
    deadline = time.monotonic() + BOOT_TIMEOUT_S
    while True:
        missing = [cp for cp in cp_ids
                   if cp not in core.bindings
                   or core.records[cp].status == "offline"]
        if not missing:
            return
        if time.monotonic() > deadline:
            raise RuntimeError(f"stations never booted: {missing}")
        await asyncio.sleep(0.01)


async def _connected_feed(stations_by_bus, profile, start_minute: int,
                          duration_s: float, grid_clock) -> None:
    """Walk plugged-in counts along the fleet profile in real minutes."""
    while True:
        t = max(0.0, grid_clock.now())
        minute = int(start_minute + t / 60.0) % MINUTES_PER_DAY
        for bus, evcs in stations_by_bus.items():
            evcs.set_connected(profile.count_at(bus, minute))
        next_t = (math.floor(t / 60.0) + 1) * 60.0
        if next_t > duration_s:
            return
        await asyncio.sleep(max(0.0, next_t - grid_clock.now()))


def run_realtime(scenario: Scenario, out_dir, keep_memory: bool = False,
                 host: str = "127.0.0.1") -> RunResult:
    """Run one realtime scenario end to end and write its artifacts.

    Blocking call for synchronous contexts (CLI, tests); the event loop
    it spins up is torn down before it returns, with every socket
    closed, so back-to-back runs can reuse the same ports.
    """
    if scenario.grid.mode != "realtime":
        raise ValueError("run_realtime handles realtime mode; accelerated "
                         "runs go through evcosim.harness.run_scenario")
    if scenario.grid.base_profile == "daily":
        raise ValueError("the daily base profile is a day-scale workload; "
                         "run it accelerated")
    return asyncio.run(_run(scenario, out_dir, keep_memory, host))


async def _run(scenario: Scenario, out_dir, keep_memory: bool,
               host: str) -> RunResult:
    out = os.fspath(out_dir)
    os.makedirs(out, exist_ok=True)
    wall0 = time.perf_counter()
    clock = RealClock()
    duration = scenario.grid.duration_s

    files = {
        "telemetry": os.path.join(out, scenario.output.telemetry),
        "cms_log": os.path.join(out, scenario.output.cms_log),
        "summary": os.path.join(out, scenario.output.summary),
    }
    cms_log = CmsLog(files["cms_log"])
    core = CmsCore(
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

    simulator = GridSimulator(scenario.grid.build_model(),
                              scenario.grid.relay_config(),
                              dt=scenario.grid.dt_s)
    telemetry = TelemetryCsvWriter(files["telemetry"],
                                   scenario.output.decimation)
    memory = MemorySink() if keep_memory else None
    tap = SummaryTap()
    probe = _LockedProbe(
        LatencyProbe({s.cp_id: s.bus for s in scenario.stations}))
    detector = DivergenceDetector()

    def feed_detector(m) -> None:
        ledger_mw = {b: kw / 1000.0
                     for b, kw in core.ledger_power_kw().items()}
        detector.feed(m.t, m.ev_mw, ledger_mw)

    sinks = [telemetry, _CallSink(tap), probe, _CallSink(feed_detector)]
    if memory is not None:
        sinks.append(memory)
    book = LoadBook(simulator, clock)

    cms_ws = CmsWsServer(core, clock, host=host)
    api = AppApiServer(core, host=host)
    await cms_ws.start()
    await api.start()

    relay = None
    station_url = cms_ws.url
    plan = scenario.attack
    if plan is not None and plan.mode == "mitm":
        relay = MitmWsRelay(cms_ws.url, clock, host=host,
                            keepalive_interval_s=scenario
                            .heartbeat_interval_s)
        await relay.start()
        station_url = relay.url

    stations: dict[str, EvcsWsClient] = {}
    attack_log = None
    gateway = None
    feed_task = None
    grid_thread = None
    try:
        for spec in scenario.stations:
            client = EvcsWsClient(
                EvcsConfig(cp_id=spec.cp_id, bus=spec.bus,
                           aggregate_count=spec.aggregate_count,
                           rate_kw=scenario.fleet.rate_kw),
                station_url, clock,
                connected=spec.connected_evs,
                heartbeat_interval_s=scenario.heartbeat_interval_s,
                on_load=book.apply)
            await client.start()
            stations[spec.cp_id] = client
        await _wait_for_boots(core, list(stations))

        simulator.initialize()
        # grid-relative time base for everything armed from here on
        t0 = clock.now()
        grid_clock = OffsetClock(clock, t0)
        scheduler = LoopScheduler(grid_clock)
        probe.clock = grid_clock

        attack_edges = 0
        aborted: list[str] = []
        if plan is not None:
            by_bus = {s.bus: s.cp_id for s in scenario.stations}
            if plan.mode == "botnet":
                files["attack_log"] = os.path.join(
                    out, scenario.output.attack_log)
                attack_log = AttackLog(files["attack_log"])
                gateway = HttpAppGateway(api.url, grid_clock)
                gateway.observers.append(probe.on_app_record)
                agent = BotnetAgent(scheduler, gateway, plan,
                                    {b: by_bus[b] for b in plan.buses},
                                    rate_kw=scenario.fleet.rate_kw,
                                    log=attack_log)
                attack_edges = agent.arm(duration)
                aborted = agent.aborted
            else:
                proxies = {bus: relay.proxies[by_bus[bus]]
                           for bus in plan.buses}
                agent = MitmAgent(scheduler, proxies, plan,
                                  counts=bus_counts(plan,
                                                    scenario.fleet.rate_kw))
                attack_edges = agent.arm(duration)

        if scenario.fleet.profile == "generated":
            profile, _ = generate_day(
                FleetConfig(rate_kw=scenario.fleet.rate_kw),
                seed=scenario.fleet.seed)
            by_bus_evcs = {s.bus: stations[s.cp_id].evcs
                           for s in scenario.stations}
            feed_task = asyncio.ensure_future(_connected_feed(
                by_bus_evcs, profile, scenario.fleet.clock_minute or 0,
                duration, grid_clock))

        holder: dict[str, RunSummary] = {}

        def drive_grid() -> None:
            holder["summary"] = simulator.run(duration, mode="realtime",
                                              sinks=tuple(sinks))

        grid_thread = threading.Thread(target=drive_grid,
                                       name="grid-realtime", daemon=True)
        grid_thread.start()
        while grid_thread.is_alive():
            await asyncio.sleep(0.02)
        grid_thread.join()
        run = holder["summary"]
        if run.partial:
            log.warning("grid run ended early: %s", run.reason)
    finally:
        if feed_task is not None:
            feed_task.cancel()
            await asyncio.gather(feed_task, return_exceptions=True)
        for client in stations.values():
            await client.close()
        if relay is not None:
            await relay.close()
        await cms_ws.close()
        await api.close()
        if gateway is not None:
            await gateway.close()
        telemetry.close()
        cms_log.close()
        if attack_log is not None:
            attack_log.close()

    latencies = probe.probe.samples
    result = RunResult(
        scenario_name=scenario.name,
        mode="realtime",
        dt_s=scenario.grid.dt_s,
        duration_s=duration,
        steps=run.steps,
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
        pacing_overruns=run.pacing_overruns,
        pacing_max_lag_s=run.pacing_max_lag_s,
        pacing_mean_lag_s=run.pacing_mean_lag_s,
    )
    with open(files["summary"], "w", encoding="utf-8") as fh:
        json.dump(result.summary_dict(), fh, indent=2)
        fh.write("\n")
    return result
