"""Realtime transports: WebSocket OCPP, the HTTP app API, and the
wall-clock scenario service."""

from .api import AppApiServer, HttpAppGateway, build_app_api
from .clock import LoopScheduler, OffsetClock, RealClock
from .mitmrelay import MitmWsRelay
from .realtime import LoadBook, run_realtime
from .ws import (
    OCPP_SUBPROTOCOL,
    ROUTE_PREFIX,
    CmsWsServer,
    EvcsWsClient,
    WsOcppPort,
    charge_point_id,
)

__all__ = [
    "AppApiServer",
    "HttpAppGateway",
    "build_app_api",
    "LoopScheduler",
    "OffsetClock",
    "RealClock",
    "MitmWsRelay",
    "LoadBook",
    "run_realtime",
    "OCPP_SUBPROTOCOL",
    "ROUTE_PREFIX",
    "CmsWsServer",
    "EvcsWsClient",
    "WsOcppPort",
    "charge_point_id",
]
