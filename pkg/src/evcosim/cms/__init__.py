"""Central management service: app API core, OCPP server logic, ledger.

The core is transport-free.  Per-connection bindings consume session
events from whatever carries the frames (deterministic in-process pipes
or real WebSockets) and mutate one serialized ledger; the HTTP layer is
a thin adapter over :meth:`CmsCore.handle_app_request`.
"""

from .core import (
    AppRequest,
    AppResponse,
    ChargePointRecord,
    CmsBinding,
    CmsConfig,
    CmsCore,
    StationBinding,
    Transaction,
)
from .log import CMS_LOG_HEADER, CmsLog, LedgerSnapshot, replay_log

__all__ = [
    "AppRequest", "AppResponse", "ChargePointRecord", "CmsBinding",
    "CmsConfig", "CmsCore", "StationBinding", "Transaction",
    "CMS_LOG_HEADER", "CmsLog", "LedgerSnapshot", "replay_log",
]
