"""CMS ledger, app-request handling, and per-connection OCPP bindings.

All mutations funnel through one :class:`CmsCore` instance; bindings and
the app adapter call into it from whatever task model the transport
uses, so the core itself stays single-threaded-equivalent (the
deterministic runner serializes naturally; the realtime adapter wraps
calls in one lock).
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping

from ..ocpp import session as ocpp_session
from ..ocpp.session import (
    CallAnswered,
    CallFailed,
    CallReceived,
    LivenessBreach,
    LivenessRestored,
    PhaseChanged,
    Violation,
)
from . import log as cms_log
from .log import CmsLog

DEFAULT_HEARTBEAT_INTERVAL_S = 180
DEFAULT_RATE_KW = 24.0


@dataclass(frozen=True)
class StationBinding:
    """Topology knowledge: which bus a charge point feeds, and its size."""

    bus: int | None
    aggregate_count: int = 1

    def __post_init__(self):
        if self.aggregate_count < 1:
            raise ValueError("aggregate_count must be >= 1")


@dataclass(frozen=True)
class CmsConfig:
    heartbeat_interval_s: int = DEFAULT_HEARTBEAT_INTERVAL_S
    rate_kw: float = DEFAULT_RATE_KW
    stations: Mapping[str, StationBinding] = field(default_factory=dict)
    reject_boot_ids: tuple[str, ...] = ()
    deny_tags: tuple[str, ...] = ()


@dataclass
class ChargePointRecord:
    cp_id: str
    status: str = "available"  # available | busy | error | offline
    aggregate_count: int = 1
    bus: int | None = None
    last_heartbeat_s: float | None = None
    last_heartbeat_iso: str = ""
    interval_s: int = DEFAULT_HEARTBEAT_INTERVAL_S
    configuration: dict[str, str] = field(default_factory=dict)
    pending_ev_count: int = 0
    boots: int = 0


@dataclass
class Transaction:
    transaction_id: int
    cp_id: str
    id_tag: str
    ev_count: int
    power_kw: float
    start_s: float
    start_iso: str
    stop_s: float | None = None
    stop_iso: str | None = None
    state: str = "open"  # open | closed | interrupted
    last_meter: dict | None = None

    @property
    def open(self) -> bool:
        return self.state == "open"


@dataclass(frozen=True)
class AppRequest:
    verb: str  # start | stop | status
    evcs_id: str
    count: int = 1
    id_tag: str = "app"
    request_id: str = ""

    def __post_init__(self):
        if self.verb not in ("start", "stop", "status"):
            raise ValueError(f"unknown verb {self.verb!r}")


@dataclass(frozen=True)
class AppResponse:
    request_id: str
    outcome: str  # accepted | rejected | status
    reason: str = ""
    status: dict | None = None
    http_status: int = 200

    @property
    def ok(self) -> bool:
        return self.outcome != "rejected"


class CmsCore:
    """The single ledger authority behind the app API and OCPP server."""

    def __init__(self, config: CmsConfig, clock, log: CmsLog | None = None):
        """`clock` provides now() -> float seconds and wall_iso() -> str."""
        self.config = config
        self.clock = clock
        self.log = log
        self.records: dict[str, ChargePointRecord] = {}
        self.transactions: dict[int, Transaction] = {}
        self.bindings: dict[str, "CmsBinding"] = {}
        self._txn_ids = itertools.count(1)
        self._req_ids = itertools.count(1)
        self._lock = threading.RLock()

    # -- logging helpers -----------------------------------------------

    def _log(self, cp_id: str, event: str, txn: int | None = None,
             ev_count: int | None = None, power_kw: float | None = None,
             detail: str = "") -> None:
        if self.log is not None:
            self.log.append(self.clock.wall_iso(), cp_id, event, txn,
                            ev_count, power_kw, detail)

    # -- ledger views ----------------------------------------------------

    def open_transaction_for(self, cp_id: str) -> Transaction | None:
        for txn in self.transactions.values():
            if txn.cp_id == cp_id and txn.open:
                return txn
        return None

    def ledger_power_kw(self) -> dict[int, float]:
        """Commanded EV power per bus from open transactions.

        Locked: the realtime grid thread polls this while sessions
        mutate the ledger on the loop thread.
        """
        with self._lock:
            out: dict[int, float] = {}
            for txn in self.transactions.values():
                if not txn.open:
                    continue
                record = self.records.get(txn.cp_id)
                if record is None or record.bus is None:
                    continue
                out[record.bus] = out.get(record.bus, 0.0) + txn.power_kw
            return out

    def status_document(self, cp_id: str) -> dict:
        record = self.records[cp_id]
        txn = self.open_transaction_for(cp_id)
        doc = {
            "evcsId": cp_id,
            "status": record.status,
            "lastHeartbeat": record.last_heartbeat_iso,
            "interval": record.interval_s,
            "aggregateCount": record.aggregate_count,
            "transaction": None,
        }
        if txn is not None:
            doc["transaction"] = {
                "transactionId": txn.transaction_id,
                "idTag": txn.id_tag,
                "evCount": txn.ev_count,
                "powerKw": txn.power_kw,
                "start": txn.start_iso,
            }
        return doc

    # -- app API -----------------------------------------------------------

    def handle_app_request(self, req: AppRequest) -> AppResponse:
        with self._lock:
            request_id = req.request_id or f"r{next(self._req_ids)}"
            self._log(req.evcs_id, "app_request", ev_count=req.count,
                      detail=f"{request_id} {req.verb}")
            record = self.records.get(req.evcs_id)
            if record is None:
                return AppResponse(request_id, "rejected", "unknown-evcs",
                                   http_status=404)
            if req.verb == "status":
                return AppResponse(request_id, "status",
                                   status=self.status_document(req.evcs_id))
            binding = self.bindings.get(req.evcs_id)
            if record.status == "offline" or binding is None:
                return AppResponse(request_id, "rejected", "offline",
                                   http_status=409)
            if req.verb == "start":
                return self._app_start(request_id, req, record, binding)
            return self._app_stop(request_id, req, record, binding)

    def _app_start(self, request_id, req, record, binding) -> AppResponse:
        if req.count < 1:
            return AppResponse(request_id, "rejected", "invalid-count",
                               http_status=400)
        open_txn = self.open_transaction_for(req.evcs_id)
        if open_txn is not None:
            reason = ("capacity"
                      if open_txn.ev_count >= record.aggregate_count
                      else "busy")
            return AppResponse(request_id, "rejected", reason,
                               http_status=409)
        uid = binding.remote_start(req.id_tag, req.count)
        self._log(req.evcs_id, "remote_start", ev_count=req.count,
                  detail=f"{request_id} idTag={req.id_tag} uid={uid}")
        return AppResponse(request_id, "accepted", http_status=202)

    def _app_stop(self, request_id, req, record, binding) -> AppResponse:
        txn = self.open_transaction_for(req.evcs_id)
        if txn is None:
            return AppResponse(request_id, "rejected", "no-transaction",
                               http_status=409)
        uid = binding.remote_stop(txn.transaction_id)
        self._log(req.evcs_id, "remote_stop", txn=txn.transaction_id,
                  detail=f"{request_id} uid={uid}")
        return AppResponse(request_id, "accepted", http_status=202)

    # -- protocol-event entry points (called by bindings) -------------------

    def on_boot(self, binding: "CmsBinding", payload: dict) -> dict:
        with self._lock:
            cp_id = binding.cp_id
            now_iso = self.clock.wall_iso()
            if cp_id in self.config.reject_boot_ids:
                self._log(cp_id, "boot_rejected")
                return {"status": "Rejected", "currentTime": now_iso,
                        "interval": self.config.heartbeat_interval_s}
            stale = self.bindings.get(cp_id)
            # register the replacement first so the stale close-out does
            # not read as this charge point going offline
            self.bindings[cp_id] = binding
            if stale is not None and stale is not binding:
                self._log(cp_id, "session_replaced")
                stale.close()
            station = self.config.stations.get(cp_id)
            record = self.records.get(cp_id)
            if record is None:
                record = ChargePointRecord(cp_id)
                self.records[cp_id] = record
            for txn in self.transactions.values():
                if txn.cp_id == cp_id and txn.open:
                    self._interrupt(txn, "reboot before stop")
            record.status = "available"
            record.boots += 1
            record.interval_s = self.config.heartbeat_interval_s
            if station is not None:
                record.bus = station.bus
                record.aggregate_count = station.aggregate_count
            record.configuration.update({
                "vendor": payload.get("chargePointVendor", ""),
                "model": payload.get("chargePointModel", ""),
                "firmwareVersion": payload.get("firmwareVersion", ""),
            })
            self._log(cp_id, cms_log.EVENT_BOOT,
                      ev_count=record.aggregate_count,
                      detail=f"{payload.get('chargePointVendor', '')} "
                             f"{payload.get('chargePointModel', '')}".strip())
            return {"status": "Accepted", "currentTime": now_iso,
                    "interval": self.config.heartbeat_interval_s}

    def _interrupt(self, txn: Transaction, why: str) -> None:
        txn.state = "interrupted"
        txn.stop_s = self.clock.now()
        txn.stop_iso = self.clock.wall_iso()
        self._log(txn.cp_id, cms_log.EVENT_INTERRUPTED,
                  txn=txn.transaction_id, ev_count=txn.ev_count,
                  power_kw=0.0, detail=why)

    def on_heartbeat(self, cp_id: str) -> dict:
        with self._lock:
            record = self.records[cp_id]
            record.last_heartbeat_s = self.clock.now()
            record.last_heartbeat_iso = self.clock.wall_iso()
            return {"currentTime": record.last_heartbeat_iso}

    def on_authorize(self, cp_id: str, payload: dict) -> dict:
        with self._lock:
            record = self.records[cp_id]
            id_tag = payload.get("idTag", "")
            ev_count = int(payload.get("evCount", 0))
            if not id_tag:
                status = "Invalid"
            elif id_tag in self.config.deny_tags:
                status = "Blocked"
            else:
                status = "Accepted"
                record.pending_ev_count = ev_count
            self._log(cp_id, "authorize", ev_count=ev_count,
                      detail=f"idTag={id_tag} {status}")
            return {"idTagInfo": {"status": status}}

    def on_start_transaction(self, cp_id: str, payload: dict) -> dict:
        with self._lock:
            record = self.records[cp_id]
            ev_count = int(payload.get("evCount", record.pending_ev_count))
            record.pending_ev_count = 0
            txn_id = next(self._txn_ids)
            power_kw = ev_count * self.config.rate_kw
            txn = Transaction(
                transaction_id=txn_id,
                cp_id=cp_id,
                id_tag=payload.get("idTag", ""),
                ev_count=ev_count,
                power_kw=power_kw,
                start_s=self.clock.now(),
                start_iso=self.clock.wall_iso(),
            )
            self.transactions[txn_id] = txn
            record.status = "busy"
            self._log(cp_id, cms_log.EVENT_TXN_START, txn=txn_id,
                      ev_count=ev_count, power_kw=power_kw,
                      detail=f"idTag={txn.id_tag}")
            return {"transactionId": txn_id,
                    "idTagInfo": {"status": "Accepted"}}

    def on_stop_transaction(self, cp_id: str, payload: dict) -> dict:
        with self._lock:
            txn = self.transactions.get(int(payload["transactionId"]))
            if txn is None or not txn.open:
                self._log(cp_id, "stop_unknown",
                          txn=int(payload["transactionId"]),
                          detail="no matching open transaction")
                return {"idTagInfo": {"status": "Accepted"}}
            txn.state = "closed"
            txn.stop_s = self.clock.now()
            txn.stop_iso = self.clock.wall_iso()
            record = self.records[cp_id]
            record.status = "available"
            self._log(cp_id, cms_log.EVENT_TXN_STOP, txn=txn.transaction_id,
                      ev_count=txn.ev_count, power_kw=0.0,
                      detail=f"reason={payload.get('reason', '')} "
                             f"meterStop={payload.get('meterStop', '')}")
            return {"idTagInfo": {"status": "Accepted"}}

    def on_meter_values(self, cp_id: str, payload: dict) -> dict:
        with self._lock:
            txn_id = payload.get("transactionId")
            txn = self.transactions.get(txn_id) if txn_id else None
            flat: dict[str, str] = {}
            for mv in payload.get("meterValue", []):
                for sv in mv.get("sampledValue", []):
                    flat[sv.get("measurand", "value")] = sv.get("value", "")
            power = flat.get("Power.Active.Import")
            if txn is not None:
                txn.last_meter = flat
                self._log(cp_id, cms_log.EVENT_METER, txn=txn.transaction_id,
                          ev_count=txn.ev_count,
                          power_kw=float(power) if power else None,
                          detail=";".join(f"{k}={v}" for k, v in
                                          sorted(flat.items())))
            else:
                self._log(cp_id, "meter_unknown",
                          txn=txn_id if txn_id else None,
                          detail="sample for unknown transaction")
            return {}

    def on_status_notification(self, cp_id: str, payload: dict) -> dict:
        with self._lock:
            mapped = {
                "Available": "available",
                "Preparing": "available",
                "Charging": "busy",
                "SuspendedEV": "busy",
                "Finishing": "available",
                "Unavailable": "offline",
                "Faulted": "error",
            }[payload["status"]]
            record = self.records[cp_id]
            record.status = mapped
            self._log(cp_id, cms_log.EVENT_STATUS, detail=mapped)
            return {}

    def on_firmware_status(self, cp_id: str, payload: dict) -> dict:
        self._log(cp_id, "firmware_status", detail=payload["status"])
        return {}

    def mark_offline(self, cp_id: str, why: str) -> None:
        with self._lock:
            record = self.records.get(cp_id)
            if record is None or record.status == "offline":
                return
            record.status = "offline"
            self._log(cp_id, cms_log.EVENT_OFFLINE, detail=why)
            for txn in self.transactions.values():
                if txn.cp_id == cp_id and txn.open:
                    self._interrupt(txn, f"charge point offline ({why})")

    def mark_online(self, cp_id: str) -> None:
        with self._lock:
            record = self.records.get(cp_id)
            if record is not None and record.status == "offline":
                record.status = "available"
                self._log(cp_id, cms_log.EVENT_ONLINE)

    def on_disconnect(self, binding: "CmsBinding") -> None:
        with self._lock:
            if self.bindings.get(binding.cp_id) is binding:
                del self.bindings[binding.cp_id]
                self.mark_offline(binding.cp_id, "disconnect")


class CmsBinding:
    """Glue between one server-side OCPP session and the core ledger.

    The transport adapter owns the session object and forwards its
    events here; `port` exposes reply/send/close operations on that
    session.  `cp_id` comes from the connection path, mirroring the
    standard ws://host/ocpp/{chargePointId} addressing.
    """

    def __init__(self, core: CmsCore, cp_id: str, port):
        self.core = core
        self.cp_id = cp_id
        self.port = port
        self._pending: dict[str, tuple[str, Callable | None]] = {}

    # -- outbound commands ------------------------------------------------

    def _call(self, action: str, payload: dict,
              callback: Callable | None) -> str:
        uid = self.port.send_call(action, payload)
        self._pending[uid] = (action, callback)
        return uid

    def remote_start(self, id_tag: str, ev_count: int,
                     callback: Callable | None = None) -> str:
        return self._call("RemoteStartTransaction",
                          {"idTag": id_tag, "evCount": ev_count},
                          callback or self._log_result)

    def remote_stop(self, transaction_id: int,
                    callback: Callable | None = None) -> str:
        return self._call("RemoteStopTransaction",
                          {"transactionId": transaction_id},
                          callback or self._log_result)

    def set_display(self, msg_id: int, text: str, priority: str | None =
                    None, callback: Callable | None = None) -> str:
        payload = {"id": msg_id, "message": text}
        if priority:
            payload["priority"] = priority
        return self._call("SetDisplayMessage", payload, callback)

    def get_display(self, callback: Callable | None = None,
                    ids: list[int] | None = None) -> str:
        payload = {"id": ids} if ids is not None else {}
        return self._call("GetDisplayMessages", payload, callback)

    def clear_display(self, msg_id: int,
                      callback: Callable | None = None) -> str:
        return self._call("ClearDisplayMessage", {"id": msg_id}, callback)

    def update_firmware(self, location: str, retrieve_iso: str,
                        callback: Callable | None = None) -> str:
        return self._call("UpdateFirmware",
                          {"location": location,
                           "retrieveDate": retrieve_iso}, callback)

    def set_charging_profile(self, limit_w: float,
                             callback: Callable | None = None) -> str:
        payload = {
            "connectorId": 0,
            "csChargingProfiles": {
                "chargingProfileId": 1,
                "stackLevel": 0,
                "chargingProfilePurpose": "ChargePointMaxProfile",
                "chargingProfileKind": "Absolute",
                "chargingSchedule": {
                    "chargingRateUnit": "W",
                    "chargingSchedulePeriod": [
                        {"startPeriod": 0, "limit": float(limit_w)},
                    ],
                },
            },
        }
        return self._call("SetChargingProfile", payload, callback)

    def get_configuration(self, callback: Callable | None = None) -> str:
        return self._call("GetConfiguration", {}, callback)

    def close(self) -> None:
        self.port.close()

    def _log_result(self, action: str, ok: bool, payload: dict) -> None:
        status = payload.get("status", "") if ok else "failed"
        self.core._log(self.cp_id, f"{_snake(action)}_result", detail=status)

    # -- inbound session events -------------------------------------------

    def on_session_event(self, event) -> None:
        if isinstance(event, CallReceived):
            self._dispatch_call(event)
        elif isinstance(event, CallAnswered):
            action, cb = self._pending.pop(event.unique_id,
                                           (event.action, None))
            if cb is not None:
                cb(action, True, event.payload)
        elif isinstance(event, CallFailed):
            action, cb = self._pending.pop(event.unique_id,
                                           (event.action, None))
            self.core._log(self.cp_id, "call_failed",
                           detail=f"{action} {event.reason} {event.code}")
            if cb is not None:
                cb(action, False, {"reason": event.reason,
                                   "code": event.code})
        elif isinstance(event, LivenessBreach):
            self.core.mark_offline(self.cp_id,
                                   f"silent {event.silent_s:.0f}s")
        elif isinstance(event, LivenessRestored):
            self.core.mark_online(self.cp_id)
        elif isinstance(event, Violation):
            self.core._log(self.cp_id, "protocol_violation",
                           detail=event.detail)
        elif isinstance(event, PhaseChanged):
            if event.phase == ocpp_session.PHASE_CLOSED:
                self.core.on_disconnect(self)

    def _dispatch_call(self, event: CallReceived) -> None:
        handlers = {
            "BootNotification": lambda p: self.core.on_boot(self, p),
            "Heartbeat": lambda p: self.core.on_heartbeat(self.cp_id),
            "Authorize": lambda p: self.core.on_authorize(self.cp_id, p),
            "StartTransaction":
                lambda p: self.core.on_start_transaction(self.cp_id, p),
            "StopTransaction":
                lambda p: self.core.on_stop_transaction(self.cp_id, p),
            "MeterValues":
                lambda p: self.core.on_meter_values(self.cp_id, p),
            "StatusNotification":
                lambda p: self.core.on_status_notification(self.cp_id, p),
            "FirmwareStatusNotification":
                lambda p: self.core.on_firmware_status(self.cp_id, p),
        }
        handler = handlers.get(event.action)
        if handler is None:
            self.port.reply_error(event.unique_id, "NotSupported",
                                  f"{event.action} not handled here")
            return
        if event.action != "BootNotification" \
                and self.cp_id not in self.core.records:
            self.port.reply_error(event.unique_id, "SecurityError",
                                  "charge point has never booted")
            return
        self.port.reply(event.unique_id, handler(event.payload))
        if event.action != "BootNotification":
            self.core.mark_online(self.cp_id)


def _snake(action: str) -> str:
    out = []
    for i, ch in enumerate(action):
        if ch.isupper() and i:
            out.append("_")
        out.append(ch.lower())
    return "".join(out)
