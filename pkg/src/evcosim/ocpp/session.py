"""Sans-IO OCPP session state machines for both ends of a connection.

A :class:`Session` owns one WebSocket's worth of protocol state: the
boot handshake, the single-outstanding-Call rule with a FIFO queue
behind it, uniqueId assignment and correlation, the 30 s call timeout,
client heartbeat emission, and the server-side silence watchdog.

The session never touches a socket or a clock.  Every entry point takes
``now`` (seconds on the caller's timeline) and returns an
:class:`Effects` bundle: wire frames to transmit plus event objects for
the owning application.  Identical inputs therefore produce identical
outputs, byte for byte, whichever transport drives it.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field as dc_field
from typing import Mapping

from . import frames, schemas
from .frames import Call, CallError, CallResult, FrameError
from .schemas import OcppError, SchemaViolation, UnknownActionError

DEFAULT_HEARTBEAT_INTERVAL_S = 180.0
DEFAULT_CALL_TIMEOUT_S = 30.0
DEFAULT_BOOT_RETRY_S = 10.0

PHASE_CONNECTING = "connecting"
PHASE_BOOTING = "booting"
PHASE_ACCEPTED = "accepted"
PHASE_CLOSED = "closed"


class CorrelationError(OcppError):
    """A CallResult or CallError does not match any outstanding Call."""


def correlate(outstanding: Mapping[str, str], frame) -> str:
    """Return the action that a reply frame answers.

    ``outstanding`` maps uniqueId to action for Calls awaiting a reply.
    An unmatched or wrongly typed frame raises :class:`CorrelationError`,
    which callers surface as a protocol violation.
    """
    if not isinstance(frame, (CallResult, CallError)):
        raise CorrelationError(f"frame {type(frame).__name__} is not a reply")
    action = outstanding.get(frame.unique_id)
    if action is None:
        raise CorrelationError(
            f"no outstanding Call with uniqueId {frame.unique_id!r}"
        )
    return action


# ---------------------------------------------------------------------------
# events handed to the owning application


@dataclass(frozen=True)
class PhaseChanged:
    phase: str


@dataclass(frozen=True)
class CallReceived:
    unique_id: str
    action: str
    payload: dict


@dataclass(frozen=True)
class CallAnswered:
    unique_id: str
    action: str
    payload: dict


@dataclass(frozen=True)
class CallFailed:
    unique_id: str
    action: str
    reason: str  # "timeout" | "call-error" | "bad-conf" | "closed"
    code: str = ""
    description: str = ""


@dataclass(frozen=True)
class Violation:
    detail: str


@dataclass(frozen=True)
class LivenessBreach:
    silent_s: float


@dataclass(frozen=True)
class LivenessRestored:
    silent_s: float


@dataclass
class Effects:
    """Frames to put on the wire and events for the application."""

    frames: list[str] = dc_field(default_factory=list)
    events: list = dc_field(default_factory=list)

    def merge(self, other: "Effects") -> "Effects":
        self.frames.extend(other.frames)
        self.events.extend(other.events)
        return self


@dataclass(frozen=True)
class SessionConfig:
    role: str  # "cp" | "cms"
    heartbeat_interval_s: float = DEFAULT_HEARTBEAT_INTERVAL_S
    call_timeout_s: float = DEFAULT_CALL_TIMEOUT_S
    boot_retry_s: float = DEFAULT_BOOT_RETRY_S
    strict: bool = True
    display_dialect: bool = True
    boot_payload: dict | None = None

    def __post_init__(self):
        if self.role not in ("cp", "cms"):
            raise ValueError(f"role must be 'cp' or 'cms', got {self.role!r}")
        if self.heartbeat_interval_s <= 0 or self.call_timeout_s <= 0:
            raise ValueError("intervals must be positive")


@dataclass
class _Outbound:
    unique_id: str
    action: str
    sent_t: float


@dataclass
class _Queued:
    unique_id: str
    action: str
    payload: dict


_DEFAULT_BOOT = {
    "chargePointVendor": "evcosim",
    "chargePointModel": "aggregate-evcs",
}


class Session:
    """Protocol state for one endpoint of one OCPP-J connection."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.role = config.role
        self.phase = PHASE_CONNECTING
        self.heartbeat_interval_s = config.heartbeat_interval_s
        self._uid_counter = 0
        self._outbound: _Outbound | None = None
        self._queue: deque[_Queued] = deque()
        self._inbound: dict[str, str] = {}
        self._last_send: float | None = None
        self._last_rx: float | None = None
        self._boot_retry_at: float | None = None
        self._breached = False

    # -- introspection ------------------------------------------------

    @property
    def outstanding(self) -> dict[str, str]:
        """uniqueId -> action for our Calls awaiting a reply."""
        if self._outbound is None:
            return {}
        return {self._outbound.unique_id: self._outbound.action}

    @property
    def pending_inbound(self) -> dict[str, str]:
        """uniqueId -> action for peer Calls we have not answered yet."""
        return dict(self._inbound)

    def queued_count(self) -> int:
        return len(self._queue)

    def silent_for(self, now: float) -> float:
        if self._last_rx is None:
            return 0.0
        return now - self._last_rx

    def _next_uid(self) -> str:
        self._uid_counter += 1
        return str(self._uid_counter)

    # -- lifecycle ----------------------------------------------------

    def on_connected(self, now: float) -> Effects:
        """The transport is up.  The client side starts its boot handshake."""
        eff = Effects()
        if self.phase == PHASE_CLOSED:
            raise OcppError("session is closed; create a new one")
        if self.role == "cp":
            self.phase = PHASE_BOOTING
            eff.events.append(PhaseChanged(PHASE_BOOTING))
            eff.merge(self._send_boot(now))
        return eff

    def on_disconnected(self, now: float) -> Effects:
        """The transport dropped.  Fail every call still in flight."""
        eff = Effects()
        if self._outbound is not None:
            eff.events.append(CallFailed(
                self._outbound.unique_id, self._outbound.action, "closed",
            ))
            self._outbound = None
        while self._queue:
            q = self._queue.popleft()
            eff.events.append(CallFailed(q.unique_id, q.action, "closed"))
        self._inbound.clear()
        self._boot_retry_at = None
        if self.phase != PHASE_CLOSED:
            self.phase = PHASE_CLOSED
            eff.events.append(PhaseChanged(PHASE_CLOSED))
        return eff

    def _send_boot(self, now: float) -> Effects:
        payload = self.config.boot_payload or _DEFAULT_BOOT
        self._boot_retry_at = None
        return self._transmit_call(now, self._next_uid(),
                                   "BootNotification", payload)

    # -- sending ------------------------------------------------------

    def send_call(self, now: float, action: str, payload: dict) -> tuple[str, Effects]:
        """Queue or transmit a Call; returns its assigned uniqueId.

        Only one Call may await a reply at a time, so anything beyond
        that sits in a FIFO until the reply (or timeout) frees the slot.
        Before boot acceptance the only Call a client puts on the wire
        is BootNotification; everything else waits.
        """
        if self.phase == PHASE_CLOSED:
            raise OcppError("session is closed")
        spec = schemas.lookup(action,
                              display_dialect=self.config.display_dialect)
        if spec.initiator != self.role:
            raise OcppError(
                f"{action} is initiated by {spec.initiator!r}, "
                f"this endpoint is {self.role!r}"
            )
        uid = self._next_uid()
        if self._outbound is None and self._may_transmit(action):
            return uid, self._transmit_call(now, uid, action, payload)
        self._queue.append(_Queued(uid, action, payload))
        return uid, Effects()

    def _may_transmit(self, action: str) -> bool:
        if self.phase == PHASE_ACCEPTED:
            return True
        return action == "BootNotification" and self.role == "cp"

    def _transmit_call(self, now: float, uid: str, action: str,
                       payload: dict) -> Effects:
        text = frames.encode(Call(uid, action, payload),
                             display_dialect=self.config.display_dialect)
        self._outbound = _Outbound(uid, action, now)
        self._last_send = now
        return Effects(frames=[text])

    def _pump_queue(self, now: float) -> Effects:
        eff = Effects()
        if self._outbound is None and self._queue:
            head = self._queue[0]
            if self._may_transmit(head.action):
                self._queue.popleft()
                eff.merge(self._transmit_call(
                    now, head.unique_id, head.action, head.payload))
        return eff

    def reply(self, now: float, unique_id: str, payload: dict) -> Effects:
        """Answer a pending inbound Call with a CallResult."""
        action = self._inbound.get(unique_id)
        if action is None:
            raise OcppError(f"no pending inbound Call {unique_id!r}")
        # encode first: a rejected payload must leave the slot answerable
        text = frames.encode(CallResult(unique_id, payload), action=action,
                             display_dialect=self.config.display_dialect)
        del self._inbound[unique_id]
        self._last_send = now
        eff = Effects(frames=[text])
        if self.role == "cms" and action == "BootNotification":
            eff.merge(self._after_boot_reply(now, payload))
        return eff

    def reply_error(self, now: float, unique_id: str, code: str,
                    description: str = "", details: dict | None = None) -> Effects:
        """Answer a pending inbound Call with a CallError."""
        if self._inbound.pop(unique_id, None) is None:
            raise OcppError(f"no pending inbound Call {unique_id!r}")
        text = frames.encode(CallError(unique_id, code, description,
                                       details or {}))
        self._last_send = now
        return Effects(frames=[text])

    def _after_boot_reply(self, now: float, payload: dict) -> Effects:
        eff = Effects()
        if payload.get("status") == "Accepted" and self.phase != PHASE_ACCEPTED:
            interval = payload.get("interval", 0)
            if interval and interval > 0:
                self.heartbeat_interval_s = float(interval)
            self.phase = PHASE_ACCEPTED
            self._breached = False
            eff.events.append(PhaseChanged(PHASE_ACCEPTED))
            eff.merge(self._pump_queue(now))
        return eff

    # -- receiving ----------------------------------------------------

    def on_frame(self, now: float, text: str | bytes) -> Effects:
        """Feed one wire message in; get frames out plus app events."""
        if self.phase == PHASE_CLOSED:
            raise OcppError("session is closed")
        eff = Effects()
        self._note_rx(now, eff)
        try:
            frame = frames.decode(text, strict=self.config.strict,
                                  display_dialect=self.config.display_dialect)
        except (UnknownActionError, SchemaViolation) as exc:
            eff.merge(self._reject_call(text, exc))
            return eff
        except FrameError as exc:
            eff.events.append(Violation(f"unparseable frame: {exc}"))
            return eff
        if isinstance(frame, Call):
            eff.merge(self._on_call(now, frame))
        else:
            eff.merge(self._on_reply(now, frame))
        return eff

    def _note_rx(self, now: float, eff: Effects) -> None:
        prev = self._last_rx
        self._last_rx = now
        if self._breached:
            self._breached = False
            eff.events.append(LivenessRestored(
                0.0 if prev is None else now - prev))

    def _reject_call(self, text: str | bytes, exc: OcppError) -> Effects:
        """Turn a bad inbound Call into a CallError, if it was a Call."""
        eff = Effects()
        eff.events.append(Violation(str(exc)))
        try:
            if isinstance(text, bytes):
                text = text.decode("utf-8")
            body = json.loads(text)
            if (isinstance(body, list) and len(body) == 4
                    and body[0] == frames.MESSAGE_TYPE_CALL
                    and isinstance(body[1], str) and body[1]):
                code = ("NotImplemented"
                        if isinstance(exc, UnknownActionError)
                        else "FormationViolation")
                eff.frames.append(frames.encode(
                    CallError(body[1], code, str(exc))))
        except (ValueError, FrameError):
            pass
        return eff

    def _on_call(self, now: float, call: Call) -> Effects:
        eff = Effects()
        spec = schemas.lookup(call.action,
                              display_dialect=self.config.display_dialect)
        if spec.initiator == self.role:
            # the peer sent an action only we may initiate
            eff.events.append(Violation(
                f"{call.action} arrived from the wrong direction"))
            eff.frames.append(frames.encode(CallError(
                call.unique_id, "NotSupported",
                f"{call.action} is not accepted by this endpoint")))
            return eff
        if (self.role == "cms" and self.phase != PHASE_ACCEPTED
                and call.action != "BootNotification"):
            eff.events.append(Violation(
                f"{call.action} before boot acceptance"))
            eff.frames.append(frames.encode(CallError(
                call.unique_id, "SecurityError",
                "charge point has not completed its boot handshake")))
            return eff
        if call.unique_id in self._inbound:
            eff.events.append(Violation(
                f"duplicate uniqueId {call.unique_id!r} ignored"))
            return eff
        if self._inbound:
            eff.events.append(Violation(
                "peer opened a second Call before the first was answered"))
        self._inbound[call.unique_id] = call.action
        eff.events.append(CallReceived(call.unique_id, call.action,
                                       call.payload))
        return eff

    def _on_reply(self, now: float, frame) -> Effects:
        eff = Effects()
        try:
            action = correlate(self.outstanding, frame)
        except CorrelationError as exc:
            eff.events.append(Violation(str(exc)))
            return eff
        self._outbound = None
        if isinstance(frame, CallError):
            eff.events.append(CallFailed(
                frame.unique_id, action, "call-error",
                code=frame.error_code, description=frame.error_description))
            if action == "BootNotification" and self.role == "cp":
                self._schedule_boot_retry(now)
        else:
            try:
                schemas.validate_payload(
                    action, "conf", frame.payload,
                    strict=self.config.strict,
                    display_dialect=self.config.display_dialect)
            except SchemaViolation as exc:
                eff.events.append(Violation(str(exc)))
                eff.events.append(CallFailed(
                    frame.unique_id, action, "bad-conf",
                    description=str(exc)))
                eff.merge(self._pump_queue(now))
                return eff
            if action == "BootNotification" and self.role == "cp":
                eff.merge(self._on_boot_conf(now, frame.payload))
            eff.events.append(CallAnswered(frame.unique_id, action,
                                           frame.payload))
        eff.merge(self._pump_queue(now))
        return eff

    def _on_boot_conf(self, now: float, payload: dict) -> Effects:
        eff = Effects()
        if payload["status"] == "Accepted":
            if payload["interval"] > 0:
                self.heartbeat_interval_s = float(payload["interval"])
            self.phase = PHASE_ACCEPTED
            self._boot_retry_at = None
            self._last_send = now  # heartbeat cadence starts at acceptance
            eff.events.append(PhaseChanged(PHASE_ACCEPTED))
        else:
            # Pending/Rejected: try again after the interval the server set
            delay = payload["interval"] if payload["interval"] > 0 \
                else self.config.boot_retry_s
            self._boot_retry_at = now + delay
        return eff

    def _schedule_boot_retry(self, now: float) -> None:
        if self.phase == PHASE_BOOTING:
            self._boot_retry_at = now + self.config.boot_retry_s

    # -- timers ---------------------------------------------------------

    def next_wakeup(self) -> float | None:
        """Earliest time at which on_tick would do something, or None."""
        deadlines = []
        if self._outbound is not None:
            deadlines.append(self._outbound.sent_t
                             + self.config.call_timeout_s)
        if self._boot_retry_at is not None:
            deadlines.append(self._boot_retry_at)
        if (self.role == "cp" and self.phase == PHASE_ACCEPTED
                and self._outbound is None and self._last_send is not None):
            deadlines.append(self._last_send + self.heartbeat_interval_s)
        if (self.role == "cms" and self.phase == PHASE_ACCEPTED
                and not self._breached and self._last_rx is not None):
            deadlines.append(self._last_rx + 2.0 * self.heartbeat_interval_s)
        return min(deadlines) if deadlines else None

    def on_tick(self, now: float) -> Effects:
        """Fire every timer whose deadline has passed."""
        eff = Effects()
        if self.phase == PHASE_CLOSED:
            return eff
        ob = self._outbound
        if ob is not None and now >= ob.sent_t + self.config.call_timeout_s:
            self._outbound = None
            eff.events.append(CallFailed(ob.unique_id, ob.action, "timeout"))
            if ob.action == "BootNotification" and self.role == "cp":
                self._schedule_boot_retry(now)
            eff.merge(self._pump_queue(now))
        if self._boot_retry_at is not None and now >= self._boot_retry_at \
                and self.phase == PHASE_BOOTING and self._outbound is None:
            eff.merge(self._send_boot(now))
        if (self.role == "cp" and self.phase == PHASE_ACCEPTED
                and self._outbound is None and not self._queue
                and self._last_send is not None):
            due = self._last_send + self.heartbeat_interval_s
            if now >= due:
                # anchor the cadence to the deadline, not the tick time
                eff.merge(self._transmit_call(due, self._next_uid(),
                                              "Heartbeat", {}))
        if (self.role == "cms" and self.phase == PHASE_ACCEPTED
                and not self._breached and self._last_rx is not None):
            silent = now - self._last_rx
            if silent >= 2.0 * self.heartbeat_interval_s:
                self._breached = True
                eff.events.append(LivenessBreach(silent))
        return eff
