"""HTTP app API: the operator/mobile surface of the CMS over real HTTP.

Three routes, mirroring the in-kernel app gateway verb for verb:

* ``POST /api/v1/start``  body ``{"evcsId": ..., "count": ..., "idTag": ...}``
* ``POST /api/v1/stop``   body ``{"evcsId": ...}``
* ``GET  /api/v1/status/{evcsId}``

Every response carries ``requestId`` and ``outcome``; rejections use
4xx status codes.  `HttpAppGateway` is the matching client, shaped like
the deterministic gateway so the botnet agent can drive either.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Callable

import httpx
import uvicorn
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from ..cms.core import AppRequest, AppResponse, CmsCore
from ..runtime.kernelnet import AppCallRecord

log = logging.getLogger(__name__)


class StartBody(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    evcs_id: str = Field(alias="evcsId")
    count: int = 1
    id_tag: str = Field(default="app", alias="idTag")
    request_id: str = Field(default="", alias="requestId")


class StopBody(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    evcs_id: str = Field(alias="evcsId")
    request_id: str = Field(default="", alias="requestId")


def _as_json(resp: AppResponse) -> JSONResponse:
    body: dict = {"requestId": resp.request_id, "outcome": resp.outcome}
    if resp.reason:
        body["reason"] = resp.reason
    if resp.status is not None:
        body["status"] = resp.status
    return JSONResponse(status_code=resp.http_status, content=body)


def build_app_api(core: CmsCore) -> FastAPI:
    """FastAPI application delegating every route to the CMS core."""
    app = FastAPI(title="charging app API", docs_url=None, redoc_url=None,
                  openapi_url=None)

    @app.post("/api/v1/start")
    async def start(body: StartBody) -> JSONResponse:
        return _as_json(core.handle_app_request(AppRequest(
            "start", body.evcs_id, count=body.count, id_tag=body.id_tag,
            request_id=body.request_id)))

    @app.post("/api/v1/stop")
    async def stop(body: StopBody) -> JSONResponse:
        return _as_json(core.handle_app_request(AppRequest(
            "stop", body.evcs_id, request_id=body.request_id)))

    @app.get("/api/v1/status/{evcs_id}")
    async def status(evcs_id: str) -> JSONResponse:
        return _as_json(core.handle_app_request(AppRequest(
            "status", evcs_id)))

    return app


class AppApiServer:
    """Uvicorn host for the app API on an ephemeral or fixed port."""

    def __init__(self, core: CmsCore, host: str = "127.0.0.1",
                 port: int = 0) -> None:
        self.host = host
        self.port = port
        self.app = build_app_api(core)
        self._server = uvicorn.Server(uvicorn.Config(
            self.app, host=host, port=port, log_level="warning",
            access_log=False))
        self._task: asyncio.Task | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    async def start(self) -> None:
        self._task = asyncio.ensure_future(self._server.serve())
        while not self._server.started:
            if self._task.done():
                self._task.result()
                raise RuntimeError("app API server exited during startup")
            await asyncio.sleep(0.01)
        self.port = self._server.servers[0].sockets[0].getsockname()[1]

    async def close(self) -> None:
        if self._task is not None:
            self._server.should_exit = True
            await self._task
            self._task = None


class HttpAppGateway:
    """App-API client with the deterministic gateway's submit contract.

    ``submit`` returns immediately with a record whose ``response`` and
    ``t_handled`` fill in when the HTTP round trip lands; the callback
    fires then.  Transport failures surface as a rejected response with
    ``http_status`` 0 rather than an exception, since an attacker's
    little script would shrug and move on exactly the same way.
    """

    def __init__(self, base_url: str, clock,
                 client: httpx.AsyncClient | None = None) -> None:
        self.clock = clock
        self.client = client or httpx.AsyncClient(base_url=base_url,
                                                  timeout=10.0)
        self.records: list[AppCallRecord] = []
        self.observers: list[Callable[[AppCallRecord], None]] = []

    def submit(self, request: AppRequest,
               callback: Callable | None = None) -> AppCallRecord:
        record = AppCallRecord(request, None, self.clock.now(), None)
        self.records.append(record)
        asyncio.get_running_loop().create_task(
            self._roundtrip(record, callback))
        return record

    async def _roundtrip(self, record: AppCallRecord,
                         callback: Callable | None) -> None:
        req = record.request
        try:
            if req.verb == "status":
                r = await self.client.get(f"/api/v1/status/{req.evcs_id}")
            elif req.verb == "start":
                r = await self.client.post("/api/v1/start", json={
                    "evcsId": req.evcs_id, "count": req.count,
                    "idTag": req.id_tag})
            else:
                r = await self.client.post("/api/v1/stop",
                                           json={"evcsId": req.evcs_id})
            body = r.json()
            response = AppResponse(body.get("requestId", ""),
                                   body.get("outcome", "rejected"),
                                   body.get("reason", ""),
                                   body.get("status"),
                                   r.status_code)
        except httpx.HTTPError as exc:
            log.warning("app call failed: %s", exc)
            response = AppResponse("", "rejected", f"transport: {exc}",
                                   http_status=0)
        record.response = response
        record.t_handled = self.clock.now()
        if callback is not None:
            callback(response)
        for observer in self.observers:
            observer(record)

    async def close(self) -> None:
        await self.client.aclose()
