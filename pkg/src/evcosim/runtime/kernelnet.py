"""Deterministic wiring: OCPP sessions, grid stepping and the app API
all driven by one event kernel.

Each piece here adapts a transport-free core to the kernel:

* :class:`OcppEndpoint` pairs a protocol session with inbound/outbound
  wires and implements the runtime port the CMS/EVCS cores call
  (send_call, reply, schedule, clocks).
* :class:`GridService` owns the grid simulator and schedules one step
  per dt; load commands go through the simulator mailbox, so a command
  enqueued between steps is part of the next step's solution.
* :class:`AppGateway` defers every app request by one kernel event,
  mirroring the hop a real HTTP call makes before the CMS handles it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..cms.core import CmsBinding, CmsCore
from ..evcs.core import EvcsConfig, EvcsCore
from ..evcs.core import LoadCommand as EvcsLoadCommand
from ..evcs.store import KvStore
from ..kernel import EventKernel, Wire
from ..ocpp.session import Session, SessionConfig
from ..powergrid.simulator import GridSimulator, LoadCommand, Measurement


class KernelClock:
    """Clock port over the kernel's virtual time."""

    def __init__(self, kernel: EventKernel):
        self._kernel = kernel

    def now(self) -> float:
        return self._kernel.now

    def wall_iso(self) -> str:
        return self._kernel.wall_iso()


class OcppEndpoint:
    """One side of an OCPP link, driven by kernel events.

    Incoming frames arrive via :meth:`rx` (the peer's wire delivers
    there); outgoing frames leave through ``out_wire``, which
    ``connect_pair`` installs.  Session events are handed to the
    attached consumer, and the session's next_wakeup deadline is kept
    armed as a kernel timer.
    """

    def __init__(self, kernel: EventKernel, config: SessionConfig):
        self.kernel = kernel
        self.session = Session(config)
        self.out_wire: Wire | None = None
        self.consumer: Callable | None = None
        self.closed = False
        self.peer: "OcppEndpoint | None" = None
        self._timer = None

    def attach(self, consumer: Callable) -> None:
        self.consumer = consumer

    # -- runtime port used by the cores -------------------------------

    def now(self) -> float:
        return self.kernel.now

    def wall_iso(self) -> str:
        return self.kernel.wall_iso()

    def send_call(self, action: str, payload: dict) -> str:
        uid, eff = self.session.send_call(self.kernel.now, action, payload)
        self._flush(eff)
        return uid

    def reply(self, unique_id: str, payload: dict) -> None:
        self._flush(self.session.reply(self.kernel.now, unique_id, payload))

    def reply_error(self, unique_id: str, code: str, description: str = "",
                    details: dict | None = None) -> None:
        self._flush(self.session.reply_error(self.kernel.now, unique_id,
                                             code, description, details))

    def schedule(self, delay: float, fn: Callable):
        return self.kernel.call_later(delay, fn)

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        if self.out_wire is not None:
            self.out_wire.close()
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None
        self._flush(self.session.on_disconnected(self.kernel.now),
                    rearm=False)
        peer = self.peer
        if peer is not None and not peer.closed:
            self.kernel.call_later(0.0, peer.close)

    # -- kernel-driven plumbing ----------------------------------------

    def open(self) -> None:
        self._flush(self.session.on_connected(self.kernel.now))

    def rx(self, text: str) -> None:
        if not self.closed:
            self._flush(self.session.on_frame(self.kernel.now, text))

    def _tick(self) -> None:
        self._timer = None
        self._flush(self.session.on_tick(self.kernel.now))

    def _flush(self, effects, rearm: bool = True) -> None:
        for frame in effects.frames:
            if self.out_wire is not None:
                self.out_wire.send(frame)
        for event in effects.events:
            if self.consumer is not None:
                self.consumer(event)
        if rearm and not self.closed:
            self._rearm()

    def _rearm(self) -> None:
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None
        wake = self.session.next_wakeup()
        if wake is not None:
            self._timer = self.kernel.call_at(max(wake, self.kernel.now),
                                              self._tick)


def connect_pair(kernel: EventKernel, client: OcppEndpoint,
                 server: OcppEndpoint, latency: float = 0.0) -> None:
    """Join two endpoints with symmetric wires and open both sessions."""
    client.out_wire = Wire(kernel, server.rx, latency)
    server.out_wire = Wire(kernel, client.rx, latency)
    client.peer = server
    server.peer = client
    server.open()
    client.open()


class GridService:
    """Kernel-paced grid stepping plus per-charge-point load bookkeeping.

    Simulator LoadCommands are absolute per bus, but several charge
    points can sit on one bus, so the service tracks each charge
    point's commanded kW and submits the per-bus sum.
    """

    def __init__(self, kernel: EventKernel, simulator: GridSimulator,
                 sinks: tuple = (), listeners: tuple = ()):
        self.kernel = kernel
        self.simulator = simulator
        self.sinks = list(sinks)
        self.listeners = list(listeners)
        self.latest: Measurement | None = None
        self.stopped = False
        self._cp_kw: dict[str, tuple[int, float]] = {}
        self._k = 0
        self._t0 = 0.0
        self._t_end = 0.0
        self._handle = None

    def start(self, t_end: float) -> None:
        if self.simulator.state is None:
            self.simulator.initialize()
        # relabel simulator time onto the kernel clock so measurements,
        # relay timestamps and scheduled events share one time base
        self.simulator.state.t = self.kernel.now
        self._t0 = self.kernel.now
        self._t_end = t_end
        self._k = 0
        self._arm_next()

    def _arm_next(self) -> None:
        self._k += 1
        t_next = self._t0 + self._k * self.simulator.dt
        if t_next <= self._t_end + 1e-12:
            self._handle = self.kernel.call_at(t_next, self._step_event)
        else:
            self._handle = None

    def _step_event(self) -> None:
        m = self.simulator.step()
        self.latest = m
        for sink in self.sinks:
            sink.write(m)
        for listener in self.listeners:
            listener(m)
        if not self.simulator.state.active.any():
            self.stopped = True
            self._handle = None
            return
        self._arm_next()

    def stop(self) -> None:
        self.stopped = True
        if self._handle is not None:
            self._handle.cancel()
            self._handle = None

    # -- load entry point for charge points --------------------------------

    def apply_load(self, cmd: EvcsLoadCommand) -> None:
        self._cp_kw[cmd.cp_id] = (cmd.bus, cmd.power_kw)
        bus_kw = sum(kw for bus, kw in self._cp_kw.values()
                     if bus == cmd.bus)
        self.simulator.submit(LoadCommand(bus=cmd.bus, p_kw=bus_kw,
                                          ts=self.kernel.now))

    def ev_kw_by_bus(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for bus, kw in self._cp_kw.values():
            out[bus] = out.get(bus, 0.0) + kw
        return out


@dataclass
class Station:
    """One charge point fully wired to the CMS over kernel wires."""

    evcs: EvcsCore
    client: OcppEndpoint
    server: OcppEndpoint
    binding: CmsBinding


def build_station(kernel: EventKernel, cms_core: CmsCore,
                  evcs_config: EvcsConfig, *, connected: int = 0,
                  store: KvStore | None = None,
                  on_load: Callable | None = None,
                  hmi_out: Callable | None = None,
                  latency: float = 0.0,
                  connect: bool = True) -> Station:
    """Assemble EVCS core, both session endpoints and the CMS binding.

    The client session's boot payload reflects any firmware version the
    store restored, which is why the core is built before its endpoint.
    """
    interval = cms_core.config.heartbeat_interval_s
    evcs = EvcsCore(evcs_config, port=None, on_load=on_load, store=store,
                    hmi_out=hmi_out)
    client = OcppEndpoint(kernel, SessionConfig(
        role="cp", heartbeat_interval_s=interval,
        boot_payload=evcs.boot_payload()))
    evcs.port = client
    client.attach(evcs.on_session_event)
    server = OcppEndpoint(kernel, SessionConfig(
        role="cms", heartbeat_interval_s=interval))
    binding = CmsBinding(cms_core, evcs_config.cp_id, server)
    server.attach(binding.on_session_event)
    evcs.set_connected(connected)
    if connect:
        connect_pair(kernel, client, server, latency)
    return Station(evcs, client, server, binding)


@dataclass
class AppCallRecord:
    request: object
    response: object | None
    t_submit: float
    t_handled: float | None


class AppGateway:
    """Mobile-app facade: requests hop one kernel event before the CMS."""

    def __init__(self, kernel: EventKernel, cms_core):
        self.kernel = kernel
        self.cms_core = cms_core
        self.records: list[AppCallRecord] = []
        self.observers: list[Callable[[AppCallRecord], None]] = []

    def submit(self, request, callback: Callable | None = None) -> AppCallRecord:
        record = AppCallRecord(request, None, self.kernel.now, None)
        self.records.append(record)

        def handle() -> None:
            record.response = self.cms_core.handle_app_request(request)
            record.t_handled = self.kernel.now
            if callback is not None:
                callback(record.response)
            for observer in self.observers:
                observer(record)

        self.kernel.call_later(0.0, handle)
        return record
