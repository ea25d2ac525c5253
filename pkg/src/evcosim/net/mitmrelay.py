"""WebSocket middlebox hosting the OCPP interception logic.

Stations dial the relay exactly as they would the CMS (same route
shape, same subprotocol); the relay dials the real CMS upstream and
places one `MitmProxy` in the frame path per connection.  The proxy's
frame handlers are transport-free, so the deterministic splice and this
relay share every byte of interception behaviour.
"""

from __future__ import annotations

import asyncio
import http
import logging

from websockets.asyncio.client import connect as ws_connect
from websockets.asyncio.server import serve as ws_serve
from websockets.exceptions import ConnectionClosed

from ..attack.mitm import MitmProxy
from .clock import LoopScheduler
from .ws import (
    OCPP_SUBPROTOCOL,
    ROUTE_PREFIX,
    _require_ocpp_subprotocol,
    charge_point_id,
)

log = logging.getLogger(__name__)


class _WsSender:
    """Wire-shaped adapter: ``send`` queues a frame for one socket."""

    def __init__(self, ws) -> None:
        self.ws = ws
        self.open = True
        self._queue: asyncio.Queue = asyncio.Queue()
        self._task = asyncio.ensure_future(self._pump())

    def send(self, text: str) -> None:
        if self.open:
            self._queue.put_nowait(text)

    async def _pump(self) -> None:
        while True:
            frame = await self._queue.get()
            if frame is None:
                break
            try:
                await self.ws.send(frame)
            except ConnectionClosed:
                break
        await self.ws.close()

    async def close(self) -> None:
        if self.open:
            self.open = False
            self._queue.put_nowait(None)
        await self._task


class MitmWsRelay:
    """Listens like a CMS, dials the real one, intercepts in between."""

    def __init__(self, upstream_url: str, clock, host: str = "127.0.0.1",
                 port: int = 0, id_tag: str = "ghost",
                 keepalive_interval_s: float = 180.0) -> None:
        self.upstream_url = upstream_url.rstrip("/")
        self.clock = clock
        self.host = host
        self.port = port
        self.id_tag = id_tag
        self.keepalive_interval_s = keepalive_interval_s
        self.proxies: dict[str, MitmProxy] = {}
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

    async def _handle(self, station) -> None:
        cp_id = charge_point_id(station.request.path)
        upstream = await ws_connect(
            f"{self.upstream_url}{ROUTE_PREFIX}{cp_id}",
            subprotocols=[OCPP_SUBPROTOCOL])
        proxy = MitmProxy(LoopScheduler(self.clock), id_tag=self.id_tag,
                          keepalive_interval_s=self.keepalive_interval_s)
        to_server = _WsSender(upstream)
        to_client = _WsSender(station)
        proxy.to_server = to_server
        proxy.to_client = to_client
        self.proxies[cp_id] = proxy
        log.debug("intercepting %s", cp_id)

        async def pump(source, handler) -> None:
            try:
                async for frame in source:
                    if isinstance(frame, bytes):
                        frame = frame.decode("utf-8", errors="replace")
                    handler(frame)
            except ConnectionClosed:
                pass

        legs = (asyncio.ensure_future(pump(station, proxy.from_client)),
                asyncio.ensure_future(pump(upstream, proxy.from_server)))
        # either side hanging up tears down the whole splice
        await asyncio.wait(legs, return_when=asyncio.FIRST_COMPLETED)
        for leg in legs:
            leg.cancel()
        await asyncio.gather(*legs, return_exceptions=True)
        proxy.cancel_keepalive()
        await to_server.close()
        await to_client.close()
