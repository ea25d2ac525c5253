"""OCPP over real WebSockets.

The protocol state machine is the same sans-IO `Session` the
deterministic runner drives; this module gives it a live socket.  A
`WsOcppPort` owns one connection: received text frames go into the
session, outbound frames leave through a single writer task (strict
FIFO, like the kernel wires), and the session's next_wakeup deadline is
kept armed as a loop timer so heartbeats and call timeouts fire at the
right wall time.

Server side, the CMS accepts connections at ``/ocpp/{chargePointId}``
and requires the ``ocpp1.6`` subprotocol, refusing the handshake
otherwise.  Client side, `EvcsWsClient` dials the same route for one
plaza controller.
"""

from __future__ import annotations

import asyncio
import http
import logging
from typing import Callable
from urllib.parse import unquote, urlsplit

from websockets.asyncio.client import connect as ws_connect
from websockets.asyncio.server import serve as ws_serve
from websockets.exceptions import ConnectionClosed, NegotiationError

from ..cms.core import CmsBinding, CmsCore
from ..evcs.core import EvcsConfig, EvcsCore
from ..evcs.store import KvStore
from ..ocpp.session import Session, SessionConfig

log = logging.getLogger(__name__)

OCPP_SUBPROTOCOL = "ocpp1.6"
ROUTE_PREFIX = "/ocpp/"


def charge_point_id(path: str) -> str | None:
    """Extract the charge point id from a ``/ocpp/{id}`` request path."""
    route = urlsplit(path).path
    if not route.startswith(ROUTE_PREFIX):
        return None
    cp_id = unquote(route[len(ROUTE_PREFIX):])
    if not cp_id or "/" in cp_id:
        return None
    return cp_id


def _require_ocpp_subprotocol(connection, offered):
    if OCPP_SUBPROTOCOL in offered:
        return OCPP_SUBPROTOCOL
    raise NegotiationError(f"subprotocol {OCPP_SUBPROTOCOL} required")


class WsOcppPort:
    """Runtime port for one live OCPP connection.

    Implements the same surface as the kernel endpoint (now, wall_iso,
    send_call, reply, reply_error, schedule, close), so CmsBinding and
    EvcsCore run on it unchanged.  All entry points must be called from
    the event loop thread.
    """

    def __init__(self, ws, config: SessionConfig, clock) -> None:
        self.ws = ws
        self.session = Session(config)
        self.clock = clock
        self.consumer: Callable | None = None
        self.closed = False
        self._loop = asyncio.get_running_loop()
        self._outbox: asyncio.Queue = asyncio.Queue()
        self._timer: asyncio.TimerHandle | None = None

    def attach(self, consumer: Callable) -> None:
        self.consumer = consumer

    # -- runtime port used by the cores -------------------------------

    def now(self) -> float:
        return self.clock.now()

    def wall_iso(self) -> str:
        return self.clock.wall_iso()

    def send_call(self, action: str, payload: dict) -> str:
        uid, eff = self.session.send_call(self.now(), action, payload)
        self._flush(eff)
        return uid

    def reply(self, unique_id: str, payload: dict) -> None:
        self._flush(self.session.reply(self.now(), unique_id, payload))

    def reply_error(self, unique_id: str, code: str, description: str = "",
                    details: dict | None = None) -> None:
        self._flush(self.session.reply_error(self.now(), unique_id, code,
                                             description, details))

    def schedule(self, delay: float, fn: Callable):
        return self._loop.call_later(max(0.0, delay), fn)

    def close(self) -> None:
        """Flush queued frames, then close the socket (idempotent)."""
        if self.closed:
            return
        self.closed = True
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None
        self._flush(self.session.on_disconnected(self.now()), rearm=False)
        self._outbox.put_nowait(None)

    # -- socket plumbing ----------------------------------------------

    async def run(self) -> None:
        """Pump the connection until either side closes it."""
        writer = asyncio.ensure_future(self._write_outbox())
        self._flush(self.session.on_connected(self.now()))
        try:
            async for frame in self.ws:
                if isinstance(frame, bytes):
                    frame = frame.decode("utf-8", errors="replace")
                self._flush(self.session.on_frame(self.now(), frame))
        except ConnectionClosed:
            pass
        finally:
            self.close()
            await writer

    async def _write_outbox(self) -> None:
        # single writer preserves frame order; the None sentinel closes
        # the socket only after everything queued before it went out
        while True:
            frame = await self._outbox.get()
            if frame is None:
                break
            try:
                await self.ws.send(frame)
            except ConnectionClosed:
                break
        await self.ws.close()

    def _tick(self) -> None:
        self._timer = None
        if not self.closed:
            self._flush(self.session.on_tick(self.now()))

    def _flush(self, effects, rearm: bool = True) -> None:
        for frame in effects.frames:
            self._outbox.put_nowait(frame)
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
            self._timer = self._loop.call_later(max(0.0, wake - self.now()),
                                                self._tick)


class CmsWsServer:
    """WebSocket front end binding each connection to the CMS core."""

    def __init__(self, core: CmsCore, clock, host: str = "127.0.0.1",
                 port: int = 0) -> None:
        self.core = core
        self.clock = clock
        self.host = host
        self.port = port
        self._server = None

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}"

    async def start(self) -> None:
        self._server = await ws_serve(
            self._handle, self.host, self.port,
            subprotocols=[OCPP_SUBPROTOCOL],
            select_subprotocol=_require_ocpp_subprotocol,
            process_request=self._check_route)
        self.port = self._server.sockets[0].getsockname()[1]

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    def _check_route(self, connection, request):
        if charge_point_id(request.path) is None:
            return connection.respond(
                http.HTTPStatus.NOT_FOUND,
                f"route must be {ROUTE_PREFIX}{{chargePointId}}\n")
        return None

    async def _handle(self, connection) -> None:
        cp_id = charge_point_id(connection.request.path)
        port = WsOcppPort(
            connection,
            SessionConfig(
                role="cms",
                heartbeat_interval_s=self.core.config.heartbeat_interval_s),
            self.clock)
        binding = CmsBinding(self.core, cp_id, port)
        port.attach(binding.on_session_event)
        log.debug("charge point %s connected", cp_id)
        await port.run()
        log.debug("charge point %s disconnected", cp_id)


class EvcsWsClient:
    """One plaza controller connected to a CMS websocket endpoint.

    No automatic reconnect: a severed link ends the pump task, and the
    owner decides whether to dial again.
    """

    def __init__(self, config: EvcsConfig, url: str, clock, *,
                 connected: int = 0,
                 heartbeat_interval_s: float = 180.0,
                 store: KvStore | None = None,
                 on_load: Callable | None = None,
                 hmi_out: Callable | None = None) -> None:
        self.config = config
        self.url = url.rstrip("/")
        self.clock = clock
        self.heartbeat_interval_s = heartbeat_interval_s
        self.evcs = EvcsCore(config, port=None, on_load=on_load,
                             store=store, hmi_out=hmi_out)
        self._initial_connected = connected
        self.port: WsOcppPort | None = None
        self._task: asyncio.Task | None = None

    async def start(self) -> None:
        ws = await ws_connect(f"{self.url}{ROUTE_PREFIX}{self.config.cp_id}",
                              subprotocols=[OCPP_SUBPROTOCOL])
        port = WsOcppPort(
            ws,
            SessionConfig(role="cp",
                          heartbeat_interval_s=self.heartbeat_interval_s,
                          boot_payload=self.evcs.boot_payload()),
            self.clock)
        self.evcs.port = port
        port.attach(self.evcs.on_session_event)
        self.evcs.set_connected(self._initial_connected)
        self.port = port
        self._task = asyncio.ensure_future(port.run())

    async def close(self) -> None:
        if self.port is not None:
            self.port.close()
        if self._task is not None:
            await self._task
            self._task = None
