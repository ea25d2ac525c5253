"""Botnet-style demand oscillation through the public app API.

The agent is an ordinary (if hostile) app client: it never touches
OCPP.  At every waveform setpoint it reconciles each bus to the new
vehicle target with stop/start requests, retries a rejected start once
after clearing the stale session, and records what it asked for versus
what the stations actually granted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Mapping

from ..cms.core import AppRequest
from ..fleet.scaling import EVCS_RATE_KW
from .plan import AttackPlan, bus_counts
from .waveform import setpoints

ATTACK_LOG_HEADER = ("t_s", "bus", "edge", "requested_count",
                     "achieved_count", "latency_ms")


class AttackLog:
    """CSV trace of every actuation edge the agent drives."""

    def __init__(self, path: str):
        self.path = path
        self._fh: IO[str] = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(ATTACK_LOG_HEADER)

    def write(self, t_s: float, bus: int, edge: str, requested: int,
              achieved: int, latency_ms: float) -> None:
        self._writer.writerow([repr(float(t_s)), bus, edge, requested,
                               achieved, repr(float(latency_ms))])
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


@dataclass
class _BusState:
    evcs_id: str
    full_count: int
    target: int = 0
    retried: bool = False


class BotnetAgent:
    """Schedules waveform setpoints and drives them via app requests.

    `gateway` must expose ``submit(AppRequest, callback) -> record``
    with ``record.t_submit``/``t_handled`` and a deferred ``response``;
    the deterministic app gateway and the HTTP client adapter both do.
    """

    def __init__(self, kernel, gateway, plan: AttackPlan,
                 evcs_by_bus: Mapping[int, str],
                 rate_kw: float = EVCS_RATE_KW,
                 log: AttackLog | None = None,
                 id_tag: str = "bot",
                 probe_delay_s: float = 0.05,
                 steps_per_period: int = 16):
        missing = [b for b in plan.buses if b not in evcs_by_bus]
        if missing:
            raise ValueError(f"no charge point for buses {missing}")
        self.kernel = kernel
        self.gateway = gateway
        self.plan = plan
        self.log = log
        self.id_tag = id_tag
        self.probe_delay_s = probe_delay_s
        self.steps_per_period = steps_per_period
        counts = bus_counts(plan, rate_kw)
        self.rate_kw = rate_kw
        self.buses = {
            bus: _BusState(evcs_by_bus[bus], counts[bus])
            for bus in plan.buses
        }
        self.edges_driven = 0
        self.aborted: list[str] = []

    def arm(self, t_end: float) -> int:
        """Schedule every setpoint in [start_s, t_end); returns count."""
        horizon = t_end - self.plan.start_s
        points = setpoints(self.plan.waveform, horizon,
                           self.steps_per_period)
        for t_rel, mw in points:
            frac = (mw / self.plan.waveform.magnitude_mw
                    if self.plan.waveform.magnitude_mw else 0.0)
            self.kernel.call_at(self.plan.start_s + t_rel,
                                self._apply_setpoint, frac)
        return len(points)

    # -- actuation ----------------------------------------------------

    def _apply_setpoint(self, frac: float) -> None:
        for bus, state in self.buses.items():
            target = round(state.full_count * frac)
            if target == state.target:
                continue
            had_open = state.target > 0
            state.target = target
            state.retried = False
            if had_open:
                # a count change means stop, then start at the new size
                self._stop(bus, state, then_start=target > 0)
            elif target > 0:
                self._start(bus, state)

    def _start(self, bus: int, state: _BusState) -> None:
        t_edge = self.kernel.now
        req = AppRequest("start", state.evcs_id, count=state.target,
                         id_tag=self.id_tag)
        self.gateway.submit(
            req, lambda resp: self._on_start_response(bus, state, t_edge,
                                                      resp))
        self.edges_driven += 1

    def _stop(self, bus: int, state: _BusState,
              then_start: bool = False) -> None:
        t_edge = self.kernel.now
        req = AppRequest("stop", state.evcs_id)

        def done(resp) -> None:
            if self.log is not None:
                self.log.write(t_edge, bus, "off", state.target, 0,
                               (self.kernel.now - t_edge) * 1000.0)
            if then_start and state.target > 0:
                # let the stop pipeline drain before the fresh start
                self.kernel.call_later(self.probe_delay_s,
                                       lambda: self._start(bus, state))

        self.gateway.submit(req, done)
        self.edges_driven += 1

    def _on_start_response(self, bus: int, state: _BusState, t_edge: float,
                           resp) -> None:
        latency_ms = (self.kernel.now - t_edge) * 1000.0
        if resp.outcome == "accepted":
            self.kernel.call_later(
                self.probe_delay_s,
                lambda: self._probe(bus, state, t_edge, latency_ms))
            return
        if resp.reason in ("busy", "capacity") and not state.retried:
            # stale transaction in the way: clear it and try once more
            state.retried = True
            self._stop(bus, state, then_start=True)
            return
        self.aborted.append(f"bus {bus}: start rejected ({resp.reason})")
        if self.log is not None:
            self.log.write(t_edge, bus, "on", state.target, 0, latency_ms)

    def _probe(self, bus: int, state: _BusState, t_edge: float,
               latency_ms: float) -> None:
        def done(resp) -> None:
            txn = (resp.status or {}).get("transaction")
            achieved = txn["evCount"] if txn else 0
            if self.log is not None:
                self.log.write(t_edge, bus, "on", state.target, achieved,
                               latency_ms)
            if achieved == 0 and state.target > 0:
                self.aborted.append(
                    f"bus {bus}: no vehicles captured at start")

        self.gateway.submit(AppRequest("status", state.evcs_id), done)
