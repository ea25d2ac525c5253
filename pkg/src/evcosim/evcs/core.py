"""Aggregate charge-point emulator.

One emulator instance fronts every charger on a bus and speaks to the
central system as a single charge point, so a start for 3,750 vehicles
is one transaction whose ``evCount`` carries the fleet size.  The core
is transport-free: the runtime adapter owns the OCPP session and passes
its events in, and power changes leave through a LoadCommand callback
that the grid picks up on its next step.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable

from ..ocpp.session import (
    CallAnswered,
    CallFailed,
    CallReceived,
    LivenessBreach,
    LivenessRestored,
    PhaseChanged,
    Violation,
)
from ..ocpp import session as ocpp_session
from .store import KvStore

DEFAULT_METER_PERIOD_S = 60.0

# pipeline states of the one aggregate connector
IDLE = "idle"
AUTHORIZING = "authorizing"
STARTING = "starting"
BUSY = "busy"
STOPPING = "stopping"

_PRIORITY_RANK = {"AlwaysFront": 0, "InFront": 1, "NormalCycle": 2}
_VERSION_RE = re.compile(r"(\d+\.\d+\.\d+)")


@dataclass(frozen=True)
class LoadCommand:
    """Absolute power demand of one charge point; not a delta."""

    cp_id: str
    bus: int
    power_kw: float


@dataclass(frozen=True)
class EvcsConfig:
    cp_id: str
    bus: int
    aggregate_count: int
    rate_kw: float = 24.0
    vendor: str = "evcosim"
    model: str = "plaza-aggregate"
    firmware_version: str = "1.0.0"
    meter_period_s: float = DEFAULT_METER_PERIOD_S

    def __post_init__(self):
        if self.aggregate_count < 1:
            raise ValueError("aggregate_count must be >= 1")
        if self.rate_kw <= 0:
            raise ValueError("rate_kw must be positive")


@dataclass
class ActivePipeline:
    id_tag: str
    granted: int
    origin: str  # "remote" | "local"
    transaction_id: int | None = None


class EvcsCore:
    """State machine behind one emulated charge point.

    `port` is the runtime adapter around the OCPP session: send_call /
    reply / reply_error / schedule / now / wall_iso.  `on_load` receives
    a LoadCommand whenever the commanded power changes.
    """

    def __init__(self, config: EvcsConfig, port,
                 on_load: Callable[[LoadCommand], None] | None = None,
                 store: KvStore | None = None,
                 hmi_out: Callable[[str], None] | None = None):
        self.config = config
        self.port = port
        self.on_load = on_load or (lambda cmd: None)
        self.store = store
        self.hmi_out = hmi_out or (lambda line: None)
        self.phase = IDLE
        self.active: ActivePipeline | None = None
        self.connected_evs = 0
        self.cms_live = False
        self.firmware_version = config.firmware_version
        self.energy_kwh = 0.0
        self.profile_limit_w: float | None = None
        self.displays: dict[int, tuple[str, str]] = {}
        self.power_kw = 0.0
        self.notes: list[str] = []
        self._pending: dict[str, str] = {}  # uid -> action
        self._meter_handle = None
        self._recovered_txn: str = ""
        self._lock = threading.RLock()
        if store is not None:
            self.energy_kwh = float(store.get("energy_wh", "0")) / 1000.0
            self.firmware_version = store.get("firmware.version",
                                              config.firmware_version)
            self._recovered_txn = store.get("txn.id", "")

    # -- helpers -----------------------------------------------------------

    @property
    def rate_eff_kw(self) -> float:
        """Per-vehicle charge rate after any charging-profile cap."""
        if self.profile_limit_w is None:
            return self.config.rate_kw
        return min(self.config.rate_kw, self.profile_limit_w / 1000.0)

    def boot_payload(self) -> dict:
        return {
            "chargePointVendor": self.config.vendor,
            "chargePointModel": self.config.model,
            "firmwareVersion": self.firmware_version,
        }

    def _note(self, text: str) -> None:
        self.notes.append(text)
        self.hmi_out(f"HMI> {text}")

    def _persist(self, key: str, value: str) -> None:
        if self.store is not None:
            self.store.put(self.port.wall_iso(), key, value)

    def _send(self, action: str, payload: dict) -> str:
        uid = self.port.send_call(action, payload)
        self._pending[uid] = action
        return uid

    def _command_power(self, power_kw: float) -> None:
        self.power_kw = power_kw
        self.on_load(LoadCommand(self.config.cp_id, self.config.bus,
                                 power_kw))

    def _status_notification(self, status: str) -> None:
        self._send("StatusNotification", {
            "connectorId": 1,
            "errorCode": "NoError",
            "status": status,
            "timestamp": self.port.wall_iso(),
        })

    # -- start/stop pipeline ------------------------------------------------

    def _begin(self, id_tag: str, requested: int, origin: str) -> str:
        """Returns '' on success, else a rejection reason."""
        if self.phase != IDLE:
            return "busy"
        granted = min(requested, self.connected_evs)
        if granted < 1:
            return "no EVs connected"
        self.active = ActivePipeline(id_tag, granted, origin)
        self.phase = AUTHORIZING
        self._send("Authorize", {"idTag": id_tag, "evCount": granted})
        return ""

    def _abort(self, why: str) -> None:
        self._note(f"start aborted: {why}")
        self.active = None
        self.phase = IDLE
        if self.power_kw:
            self._command_power(0.0)

    def _on_authorize_conf(self, payload: dict) -> None:
        if self.phase != AUTHORIZING or self.active is None:
            return
        status = payload["idTagInfo"]["status"]
        if status != "Accepted":
            self._abort(f"authorization {status}")
            return
        self.phase = STARTING
        self._send("StartTransaction", {
            "connectorId": 1,
            "idTag": self.active.id_tag,
            "meterStart": int(self.energy_kwh * 1000),
            "timestamp": self.port.wall_iso(),
            "evCount": self.active.granted,
        })

    def _on_start_conf(self, payload: dict) -> None:
        if self.phase != STARTING or self.active is None:
            return
        if payload["idTagInfo"]["status"] != "Accepted":
            self._abort("transaction refused")
            return
        self.active.transaction_id = payload["transactionId"]
        self.phase = BUSY
        self._persist("txn.id", str(self.active.transaction_id))
        self._persist("txn.ev_count", str(self.active.granted))
        self._status_notification("Charging")
        self._command_power(self.active.granted * self.rate_eff_kw)
        self._meter_handle = self.port.schedule(self.config.meter_period_s,
                                                self._meter_tick)
        self._note(f"charging {self.active.granted} EVs, "
                   f"transaction {self.active.transaction_id}")

    def _finish(self, reason: str) -> None:
        if self.phase != BUSY or self.active is None:
            return
        self.phase = STOPPING
        if self._meter_handle is not None:
            self._meter_handle.cancel()
            self._meter_handle = None
        self._command_power(0.0)
        self._send("StopTransaction", {
            "transactionId": self.active.transaction_id,
            "meterStop": int(self.energy_kwh * 1000),
            "timestamp": self.port.wall_iso(),
            "reason": reason,
        })

    def _on_stop_conf(self) -> None:
        self._persist("txn.id", "")
        self._persist("txn.ev_count", "")
        self.active = None
        self.phase = IDLE
        self._status_notification("Available")
        self._note("transaction closed")

    def _meter_tick(self) -> None:
        if self.phase != BUSY or self.active is None:
            return
        self.energy_kwh += self.power_kw * self.config.meter_period_s / 3600.0
        self._persist("energy_wh", str(int(self.energy_kwh * 1000)))
        self._send("MeterValues", {
            "connectorId": 1,
            "transactionId": self.active.transaction_id,
            "meterValue": [{
                "timestamp": self.port.wall_iso(),
                "sampledValue": [
                    {"value": str(int(self.energy_kwh * 1000)),
                     "measurand": "Energy.Active.Import.Register",
                     "unit": "Wh"},
                    {"value": f"{self.power_kw:.1f}",
                     "measurand": "Power.Active.Import",
                     "unit": "kW"},
                ],
            }],
        })
        self._meter_handle = self.port.schedule(self.config.meter_period_s,
                                                self._meter_tick)

    # -- local operator console ---------------------------------------------

    def set_connected(self, n: int) -> None:
        """Vehicles physically plugged in; capacity for future starts."""
        with self._lock:
            if n < 0:
                raise ValueError("connected count must be >= 0")
            self.connected_evs = n

    def hmi(self, line: str) -> list[str]:
        with self._lock:
            out: list[str] = []
            words = line.strip().split()
            if not words:
                return ["HMI> empty command"]
            verb = words[0].lower()
            if verb == "start":
                out.append(self._hmi_start(words[1:]))
            elif verb == "stop":
                if self.phase == BUSY and self.active is not None:
                    self._finish("Local")
                    out.append("HMI> stop requested")
                else:
                    out.append("HMI> stop rejected: no active transaction")
            elif verb == "status":
                txn = (self.active.transaction_id
                       if self.active is not None else "-")
                evs = self.active.granted if self.active is not None else 0
                out.append(
                    f"HMI> state={self.phase} txn={txn} evs={evs} "
                    f"power_kw={self.power_kw:.1f} "
                    f"energy_kwh={self.energy_kwh:.3f} "
                    f"connected={self.connected_evs} "
                    f"cms={'up' if self.cms_live else 'down'}")
            elif verb == "screen":
                if not self.displays:
                    out.append("HMI> (no messages)")
                for msg_id, (text, priority) in sorted(
                        self.displays.items(),
                        key=lambda kv: (_PRIORITY_RANK[kv[1][1]], kv[0])):
                    out.append(f"HMI> [{priority}] {msg_id}: {text}")
            else:
                out.append(f"HMI> unknown command: {verb}")
            return out

    def _hmi_start(self, args: list[str]) -> str:
        if len(args) != 2 or not args[1].isdigit():
            return "HMI> usage: start <idTag> <count>"
        if not self.cms_live:
            return "HMI> start rejected: no CMS link"
        id_tag, count = args[0], int(args[1])
        why = self._begin(id_tag, count, "local")
        if why:
            return f"HMI> start rejected: {why}"
        granted = self.active.granted if self.active is not None else 0
        return f"HMI> start requested for {granted} EVs (tag {id_tag})"

    # -- inbound session events ----------------------------------------------

    def on_session_event(self, event) -> None:
        with self._lock:
            if isinstance(event, PhaseChanged):
                self._on_phase(event.phase)
            elif isinstance(event, CallReceived):
                self._dispatch_call(event)
            elif isinstance(event, CallAnswered):
                self._on_answered(event)
            elif isinstance(event, CallFailed):
                self._on_failed(event)
            elif isinstance(event, LivenessBreach):
                self.cms_live = False
                self._note(f"CMS silent for {event.silent_s:.0f}s")
            elif isinstance(event, LivenessRestored):
                self.cms_live = True
            elif isinstance(event, Violation):
                self._note(f"protocol violation: {event.detail}")

    def _on_phase(self, phase: str) -> None:
        if phase == ocpp_session.PHASE_ACCEPTED:
            self.cms_live = True
            if self._recovered_txn:
                self._note(f"power-loss recovery: transaction "
                           f"{self._recovered_txn} was open at shutdown")
                self._persist("txn.id", "")
                self._persist("txn.ev_count", "")
                self._recovered_txn = ""
            self._status_notification("Available")
            self._command_power(0.0)
        elif phase == ocpp_session.PHASE_CLOSED:
            self.cms_live = False
            if self._meter_handle is not None:
                self._meter_handle.cancel()
                self._meter_handle = None
            if self.phase == BUSY:
                # power stays up; the link died, not the chargers
                self._note("link lost while charging")
            else:
                self.phase = IDLE
                self.active = None

    def _on_answered(self, event: CallAnswered) -> None:
        self._pending.pop(event.unique_id, None)
        if event.action == "Authorize":
            self._on_authorize_conf(event.payload)
        elif event.action == "StartTransaction":
            self._on_start_conf(event.payload)
        elif event.action == "StopTransaction":
            self._on_stop_conf()

    def _on_failed(self, event: CallFailed) -> None:
        self._pending.pop(event.unique_id, None)
        if event.action in ("Authorize", "StartTransaction") \
                and self.phase in (AUTHORIZING, STARTING):
            self._abort(f"{event.action} failed ({event.reason})")
        elif event.action == "StopTransaction" and self.phase == STOPPING:
            # give up waiting; the ledger side will reconcile at next boot
            self._on_stop_conf()

    # -- inbound commands from the central system -----------------------------

    def _dispatch_call(self, event: CallReceived) -> None:
        handlers = {
            "RemoteStartTransaction": self._on_remote_start,
            "RemoteStopTransaction": self._on_remote_stop,
            "GetConfiguration": self._on_get_configuration,
            "SetChargingProfile": self._on_set_charging_profile,
            "UpdateFirmware": self._on_update_firmware,
            "SetDisplayMessage": self._on_set_display,
            "GetDisplayMessages": self._on_get_displays,
            "ClearDisplayMessage": self._on_clear_display,
        }
        handler = handlers.get(event.action)
        if handler is None:
            self.port.reply_error(event.unique_id, "NotSupported",
                                  f"{event.action} not handled here")
            return
        self.port.reply(event.unique_id, handler(event.payload))

    def _on_remote_start(self, payload: dict) -> dict:
        why = self._begin(payload["idTag"], int(payload.get("evCount", 1)),
                          "remote")
        return {"status": "Rejected" if why else "Accepted"}

    def _on_remote_stop(self, payload: dict) -> dict:
        txn_id = int(payload["transactionId"])
        if self.phase == BUSY and self.active is not None \
                and self.active.transaction_id == txn_id:
            self._finish("Remote")
            return {"status": "Accepted"}
        return {"status": "Rejected"}

    def _on_get_configuration(self, payload: dict) -> dict:
        table = {
            "HeartbeatInterval": (False, ""),  # session owns the value
            "NumberOfConnectors": (True, str(self.config.aggregate_count)),
            "MeterValueSampleInterval":
                (False, str(int(self.config.meter_period_s))),
            "ChargeRateKw": (True, repr(self.config.rate_kw)),
            "FirmwareVersion": (True, self.firmware_version),
        }
        wanted = payload.get("key")
        keys = table.keys() if wanted is None else wanted
        known = [{"key": k, "readonly": table[k][0], "value": table[k][1]}
                 for k in keys if k in table]
        unknown = [k for k in keys if k not in table]
        conf: dict = {"configurationKey": known}
        if unknown:
            conf["unknownKey"] = unknown
        return conf

    def _on_set_charging_profile(self, payload: dict) -> dict:
        schedule = payload["csChargingProfiles"]["chargingSchedule"]
        if schedule["chargingRateUnit"] != "W":
            return {"status": "NotSupported"}
        self.profile_limit_w = float(
            schedule["chargingSchedulePeriod"][0]["limit"])
        if self.phase == BUSY and self.active is not None:
            # recommand live so the cap bites without a restart
            self._command_power(self.active.granted * self.rate_eff_kw)
        return {"status": "Accepted"}

    # -- firmware update walk -------------------------------------------------

    def _on_update_firmware(self, payload: dict) -> dict:
        delay = max(0.0, _seconds_until(payload["retrieveDate"],
                                        self.port.wall_iso()))
        location = payload["location"]
        self.port.schedule(delay, lambda: self._firmware_step(location,
                                                              "Downloading"))
        return {}

    def _firmware_step(self, location: str, status: str) -> None:
        with self._lock:
            self._send("FirmwareStatusNotification", {"status": status})
            fetchable = location.startswith(
                ("http://", "https://", "ftp://", "file://"))
            version = _VERSION_RE.search(location)
            after: str | None = {
                "Downloading": "Downloaded" if fetchable else "DownloadFailed",
                "Downloaded": "Installing",
                "Installing":
                    "Installed" if version else "InstallationFailed",
            }.get(status)
            if after is None:
                if status == "Installed" and version:
                    self.firmware_version = version.group(1)
                    self._persist("firmware.version", self.firmware_version)
                    self._note(f"firmware now {self.firmware_version}")
                elif status in ("DownloadFailed", "InstallationFailed"):
                    self._note(f"firmware update failed: {status}")
                return
            self.port.schedule(1.0,
                               lambda: self._firmware_step(location, after))

    # -- display messages -------------------------------------------------

    def _on_set_display(self, payload: dict) -> dict:
        self.displays[payload["id"]] = (
            payload["message"], payload.get("priority", "NormalCycle"))
        return {"status": "Accepted"}

    def _on_get_displays(self, payload: dict) -> dict:
        wanted = payload.get("id")
        items = sorted(self.displays.items())
        if wanted is not None:
            items = [(i, v) for i, v in items if i in wanted]
        return {"messages": [
            {"id": i, "priority": priority, "message": text}
            for i, (text, priority) in items
        ]}

    def _on_clear_display(self, payload: dict) -> dict:
        if payload["id"] in self.displays:
            del self.displays[payload["id"]]
            return {"status": "Accepted"}
        return {"status": "Unknown"}


def _seconds_until(target_iso: str, now_iso: str) -> float:
    def parse(s: str) -> datetime:
        return datetime.fromisoformat(s[:-1] + "+00:00"
                                      if s.endswith("Z") else s)
    return (parse(target_iso) - parse(now_iso)).total_seconds()
