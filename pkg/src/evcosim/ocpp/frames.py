"""OCPP-J wire frames and the JSON codec.

Three frame shapes travel over the socket, each a JSON array:

    [2, "<uniqueId>", "<Action>", {<payload>}]        Call
    [3, "<uniqueId>", {<payload>}]                    CallResult
    [4, "<uniqueId>", "<code>", "<description>", {}]  CallError

``encode`` always validates Call payloads against the action schema and
serializes payload keys in schema declaration order, so a given frame has
exactly one byte representation.  ``decode`` offers a strict mode that
rejects unknown payload fields and a lenient mode that tolerates them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import schemas
from .schemas import OcppError, SchemaViolation, UnknownActionError

__all__ = [
    "Call", "CallResult", "CallError", "Frame",
    "OcppError", "FrameError", "SchemaViolation", "UnknownActionError",
    "ERROR_CODES", "encode", "decode",
]


class FrameError(OcppError):
    """The message is not a well-formed OCPP-J frame."""


MESSAGE_TYPE_CALL = 2
MESSAGE_TYPE_CALL_RESULT = 3
MESSAGE_TYPE_CALL_ERROR = 4

# OCPP-J 1.6 error codes.  The misspelling of "Occurence" is normative.
ERROR_CODES = (
    "NotImplemented",
    "NotSupported",
    "InternalError",
    "ProtocolError",
    "SecurityError",
    "FormationViolation",
    "PropertyConstraintViolation",
    "OccurenceConstraintViolation",
    "TypeConstraintViolation",
    "GenericError",
)

MAX_UNIQUE_ID_LEN = 36


@dataclass(frozen=True)
class Call:
    unique_id: str
    action: str
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CallResult:
    unique_id: str
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CallError:
    unique_id: str
    error_code: str
    error_description: str = ""
    error_details: dict = field(default_factory=dict)


Frame = Call | CallResult | CallError


def _check_unique_id(uid: object) -> str:
    if not isinstance(uid, str) or not uid or len(uid) > MAX_UNIQUE_ID_LEN:
        raise FrameError(
            f"uniqueId must be a non-empty string of at most "
            f"{MAX_UNIQUE_ID_LEN} characters, got {uid!r}"
        )
    return uid


def encode(
    frame: Frame,
    *,
    action: str | None = None,
    display_dialect: bool = True,
) -> str:
    """Serialize a frame to its canonical JSON text.

    Call payloads are validated against the request schema.  For a
    CallResult the originating action is not part of the frame; pass it
    via ``action`` to get confirmation-schema validation and key
    ordering, otherwise the payload is emitted with its own key order.
    """
    _check_unique_id(frame.unique_id)
    if isinstance(frame, Call):
        spec = schemas.lookup(frame.action, display_dialect=display_dialect)
        payload = schemas.validate_payload(
            frame.action, "req", frame.payload,
            strict=True, display_dialect=display_dialect,
        )
        ordered = schemas.ordered_payload(spec.req, payload)
        body = [MESSAGE_TYPE_CALL, frame.unique_id, frame.action, ordered]
    elif isinstance(frame, CallResult):
        payload = frame.payload
        if not isinstance(payload, dict):
            raise SchemaViolation("CallResult payload must be an object")
        if action is not None:
            spec = schemas.lookup(action, display_dialect=display_dialect)
            payload = schemas.validate_payload(
                action, "conf", payload,
                strict=True, display_dialect=display_dialect,
            )
            payload = schemas.ordered_payload(spec.conf, payload)
        body = [MESSAGE_TYPE_CALL_RESULT, frame.unique_id, payload]
    elif isinstance(frame, CallError):
        if frame.error_code not in ERROR_CODES:
            raise SchemaViolation(f"unknown error code {frame.error_code!r}")
        if not isinstance(frame.error_details, dict):
            raise SchemaViolation("CallError details must be an object")
        body = [
            MESSAGE_TYPE_CALL_ERROR,
            frame.unique_id,
            frame.error_code,
            str(frame.error_description),
            frame.error_details,
        ]
    else:
        raise TypeError(f"not an OCPP frame: {frame!r}")
    return json.dumps(body, separators=(",", ":"), ensure_ascii=False)


def decode(
    text: str | bytes,
    *,
    strict: bool = True,
    display_dialect: bool = True,
) -> Frame:
    """Parse wire text into a frame.

    Call payloads are validated against the request schema here because
    the action is carried in the frame.  CallResult payloads can only be
    checked once the frame is correlated with its originating Call, so
    they are shape-checked (must be an object) and left to the session.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameError(f"frame is not valid UTF-8: {exc}") from exc
    try:
        body = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FrameError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(body, list) or not body:
        raise FrameError("frame must be a non-empty JSON array")
    mtype = body[0]
    if mtype == MESSAGE_TYPE_CALL:
        if len(body) != 4:
            raise FrameError(f"Call frame must have 4 elements, got {len(body)}")
        uid = _check_unique_id(body[1])
        action = body[2]
        if not isinstance(action, str) or not action:
            raise FrameError(f"action must be a non-empty string, got {action!r}")
        payload = body[3]
        if not isinstance(payload, dict):
            raise FrameError("Call payload must be a JSON object")
        payload = schemas.validate_payload(
            action, "req", payload,
            strict=strict, display_dialect=display_dialect,
        )
        return Call(uid, action, payload)
    if mtype == MESSAGE_TYPE_CALL_RESULT:
        if len(body) != 3:
            raise FrameError(
                f"CallResult frame must have 3 elements, got {len(body)}"
            )
        uid = _check_unique_id(body[1])
        payload = body[2]
        if not isinstance(payload, dict):
            raise FrameError("CallResult payload must be a JSON object")
        return CallResult(uid, payload)
    if mtype == MESSAGE_TYPE_CALL_ERROR:
        if len(body) != 5:
            raise FrameError(
                f"CallError frame must have 5 elements, got {len(body)}"
            )
        uid = _check_unique_id(body[1])
        code, desc, details = body[2], body[3], body[4]
        if not isinstance(code, str):
            raise FrameError("errorCode must be a string")
        if strict and code not in ERROR_CODES:
            raise FrameError(f"unknown errorCode {code!r}")
        if not isinstance(desc, str):
            raise FrameError("errorDescription must be a string")
        if not isinstance(details, dict):
            raise FrameError("errorDetails must be a JSON object")
        return CallError(uid, code, desc, details)
    raise FrameError(f"unknown MessageTypeId {mtype!r}")
