"""OCPP 1.6-J protocol layer: frame codec, payload schemas, session machines.

The codec and the session state machines perform no I/O and never read the
wall clock; adapters feed them frames and timestamps.  That keeps protocol
behavior identical between the deterministic in-process transport and the
real WebSocket transport.
"""

from .frames import (
    Call,
    CallError,
    CallResult,
    FrameError,
    OcppError,
    SchemaViolation,
    UnknownActionError,
    decode,
    encode,
)
from .schemas import (
    ACTIONS,
    ActionSpec,
    CORE_ACTIONS,
    DISPLAY_ACTIONS,
    initiator_of,
    validate_payload,
)
from .session import (
    CallAnswered,
    CallFailed,
    CallReceived,
    Effects,
    LivenessBreach,
    LivenessRestored,
    PhaseChanged,
    Session,
    SessionConfig,
    Violation,
    correlate,
)

OCPP_SUBPROTOCOL = "ocpp1.6"
WS_PATH_PREFIX = "/ocpp/"

__all__ = [
    "Call", "CallError", "CallResult", "FrameError", "OcppError",
    "SchemaViolation", "UnknownActionError", "decode", "encode",
    "ACTIONS", "ActionSpec", "CORE_ACTIONS", "DISPLAY_ACTIONS",
    "initiator_of", "validate_payload",
    "CallAnswered", "CallFailed", "CallReceived", "Effects",
    "LivenessBreach", "LivenessRestored", "PhaseChanged",
    "Session", "SessionConfig", "Violation", "correlate",
    "OCPP_SUBPROTOCOL", "WS_PATH_PREFIX",
]
