"""Payload schemas for the supported OCPP 1.6 action set.

Each action carries a request schema (the Call payload) and a
confirmation schema (the CallResult payload), plus the endpoint allowed
to initiate it: ``"cp"`` for the charge point, ``"cms"`` for the central
system.

Two testbed extensions ride on otherwise stock 1.6 payloads: an optional
``evCount`` on Authorize.req, StartTransaction.req and
RemoteStartTransaction.req, because one emulated charge point fronts a
whole plaza of EVs and the fleet size must travel with the
authorization.  The display-message trio is borrowed from the 2.0.1
vocabulary but framed as plain 1.6 actions; it is gated behind a dialect
flag so a stock-1.6 peer can be emulated by turning it off.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime


class OcppError(Exception):
    """Base class for protocol-layer failures."""


class UnknownActionError(OcppError):
    """The frame names an action outside the supported table."""


class SchemaViolation(OcppError):
    """A payload does not satisfy the action's schema."""


@dataclass(frozen=True)
class Field:
    """One payload field: name, JSON kind, and value constraints."""

    name: str
    kind: str  # string | integer | number | boolean | datetime | object | array
    required: bool = True
    enum: tuple[str, ...] | None = None
    fields: tuple["Field", ...] | None = None  # nested object members
    item: "Field | None" = None  # array element spec (name ignored)
    min_value: float | None = None
    max_length: int | None = None
    nonempty: bool = False


@dataclass(frozen=True)
class ActionSpec:
    name: str
    initiator: str  # "cp" | "cms"
    req: tuple[Field, ...]
    conf: tuple[Field, ...]
    dialect: str = "core"  # "core" | "display"


def _parse_iso8601(value: str) -> datetime:
    # fromisoformat on older interpreters rejects a literal Z suffix
    text = value[:-1] + "+00:00" if value.endswith("Z") else value
    return datetime.fromisoformat(text)


_ID_TAG_INFO = Field(
    "idTagInfo", "object",
    fields=(
        Field("status", "string",
              enum=("Accepted", "Blocked", "Expired", "Invalid")),
        Field("parentIdTag", "string", required=False, max_length=20),
    ),
)

_SAMPLED_VALUE = Field(
    "sampledValue", "array", nonempty=True,
    item=Field(
        "", "object",
        fields=(
            Field("value", "string"),
            Field("context", "string", required=False),
            Field("measurand", "string", required=False),
            Field("unit", "string", required=False),
        ),
    ),
)

_CHARGING_SCHEDULE = Field(
    "chargingSchedule", "object",
    fields=(
        Field("chargingRateUnit", "string", enum=("W", "A")),
        Field(
            "chargingSchedulePeriod", "array", nonempty=True,
            item=Field(
                "", "object",
                fields=(
                    Field("startPeriod", "integer", min_value=0),
                    Field("limit", "number", min_value=0),
                ),
            ),
        ),
        Field("duration", "integer", required=False, min_value=0),
    ),
)

_DISPLAY_MESSAGE = Field(
    "", "object",
    fields=(
        Field("id", "integer", min_value=0),
        Field("priority", "string", required=False,
              enum=("AlwaysFront", "InFront", "NormalCycle")),
        Field("message", "string", nonempty=True, max_length=512),
    ),
)


def _spec(name, initiator, req, conf, dialect="core"):
    return ActionSpec(name, initiator, tuple(req), tuple(conf), dialect)


ACTIONS: dict[str, ActionSpec] = {
    spec.name: spec
    for spec in (
        # charge point -> central system
        _spec(
            "BootNotification", "cp",
            req=(
                Field("chargePointVendor", "string", nonempty=True,
                      max_length=20),
                Field("chargePointModel", "string", nonempty=True,
                      max_length=20),
                Field("chargePointSerialNumber", "string", required=False,
                      max_length=25),
                Field("firmwareVersion", "string", required=False,
                      max_length=50),
            ),
            conf=(
                Field("status", "string",
                      enum=("Accepted", "Pending", "Rejected")),
                Field("currentTime", "datetime"),
                Field("interval", "integer", min_value=0),
            ),
        ),
        _spec(
            "Heartbeat", "cp",
            req=(),
            conf=(Field("currentTime", "datetime"),),
        ),
        _spec(
            "Authorize", "cp",
            req=(
                # empty tags must reach the server so it can answer Invalid
                Field("idTag", "string", max_length=20),
                Field("evCount", "integer", required=False, min_value=0),
            ),
            conf=(_ID_TAG_INFO,),
        ),
        _spec(
            "StartTransaction", "cp",
            req=(
                Field("connectorId", "integer", min_value=1),
                Field("idTag", "string", nonempty=True, max_length=20),
                Field("meterStart", "integer", min_value=0),
                Field("timestamp", "datetime"),
                Field("evCount", "integer", required=False, min_value=0),
            ),
            conf=(
                Field("transactionId", "integer"),
                _ID_TAG_INFO,
            ),
        ),
        _spec(
            "StopTransaction", "cp",
            req=(
                Field("transactionId", "integer"),
                Field("meterStop", "integer", min_value=0),
                Field("timestamp", "datetime"),
                Field("reason", "string", required=False),
            ),
            conf=(
                Field("idTagInfo", "object", required=False,
                      fields=_ID_TAG_INFO.fields),
            ),
        ),
        _spec(
            "MeterValues", "cp",
            req=(
                Field("connectorId", "integer", min_value=0),
                Field("transactionId", "integer", required=False),
                Field(
                    "meterValue", "array", nonempty=True,
                    item=Field(
                        "", "object",
                        fields=(
                            Field("timestamp", "datetime"),
                            _SAMPLED_VALUE,
                        ),
                    ),
                ),
            ),
            conf=(),
        ),
        _spec(
            "StatusNotification", "cp",
            req=(
                Field("connectorId", "integer", min_value=0),
                Field("errorCode", "string"),
                Field("status", "string",
                      enum=("Available", "Preparing", "Charging",
                            "SuspendedEV", "Finishing", "Unavailable",
                            "Faulted")),
                Field("timestamp", "datetime", required=False),
                Field("info", "string", required=False, max_length=50),
            ),
            conf=(),
        ),
        _spec(
            "FirmwareStatusNotification", "cp",
            req=(
                Field("status", "string",
                      enum=("Idle", "Downloading", "Downloaded",
                            "DownloadFailed", "Installing", "Installed",
                            "InstallationFailed")),
            ),
            conf=(),
        ),
        # central system -> charge point
        _spec(
            "RemoteStartTransaction", "cms",
            req=(
                Field("idTag", "string", nonempty=True, max_length=20),
                Field("connectorId", "integer", required=False, min_value=1),
                Field("evCount", "integer", required=False, min_value=0),
            ),
            conf=(Field("status", "string", enum=("Accepted", "Rejected")),),
        ),
        _spec(
            "RemoteStopTransaction", "cms",
            req=(Field("transactionId", "integer"),),
            conf=(Field("status", "string", enum=("Accepted", "Rejected")),),
        ),
        _spec(
            "GetConfiguration", "cms",
            req=(
                Field("key", "array", required=False,
                      item=Field("", "string", max_length=50)),
            ),
            conf=(
                Field(
                    "configurationKey", "array", required=False,
                    item=Field(
                        "", "object",
                        fields=(
                            Field("key", "string", max_length=50),
                            Field("readonly", "boolean"),
                            Field("value", "string", required=False,
                                  max_length=500),
                        ),
                    ),
                ),
                Field("unknownKey", "array", required=False,
                      item=Field("", "string", max_length=50)),
            ),
        ),
        _spec(
            "SetChargingProfile", "cms",
            req=(
                Field("connectorId", "integer", min_value=0),
                Field(
                    "csChargingProfiles", "object",
                    fields=(
                        Field("chargingProfileId", "integer"),
                        Field("stackLevel", "integer", min_value=0),
                        Field("chargingProfilePurpose", "string",
                              enum=("ChargePointMaxProfile",
                                    "TxDefaultProfile", "TxProfile")),
                        Field("chargingProfileKind", "string",
                              enum=("Absolute", "Recurring", "Relative")),
                        _CHARGING_SCHEDULE,
                    ),
                ),
            ),
            conf=(
                Field("status", "string",
                      enum=("Accepted", "Rejected", "NotSupported")),
            ),
        ),
        _spec(
            "UpdateFirmware", "cms",
            req=(
                Field("location", "string", nonempty=True),
                Field("retrieveDate", "datetime"),
                Field("retries", "integer", required=False, min_value=0),
                Field("retryInterval", "integer", required=False,
                      min_value=0),
            ),
            conf=(),
        ),
        _spec(
            "SetDisplayMessage", "cms",
            req=(
                Field("id", "integer", min_value=0),
                Field("priority", "string", required=False,
                      enum=("AlwaysFront", "InFront", "NormalCycle")),
                Field("message", "string", nonempty=True, max_length=512),
            ),
            conf=(Field("status", "string", enum=("Accepted", "Rejected")),),
            dialect="display",
        ),
        _spec(
            "GetDisplayMessages", "cms",
            req=(
                Field("id", "array", required=False,
                      item=Field("", "integer", min_value=0)),
            ),
            conf=(
                Field("messages", "array", required=False,
                      item=_DISPLAY_MESSAGE),
            ),
            dialect="display",
        ),
        _spec(
            "ClearDisplayMessage", "cms",
            req=(Field("id", "integer", min_value=0),),
            conf=(Field("status", "string", enum=("Accepted", "Unknown")),),
            dialect="display",
        ),
    )
}

CORE_ACTIONS = tuple(
    name for name, spec in ACTIONS.items() if spec.dialect == "core"
)
DISPLAY_ACTIONS = tuple(
    name for name, spec in ACTIONS.items() if spec.dialect == "display"
)


def lookup(action: str, *, display_dialect: bool = True) -> ActionSpec:
    spec = ACTIONS.get(action)
    if spec is None:
        raise UnknownActionError(f"unsupported action {action!r}")
    if spec.dialect == "display" and not display_dialect:
        raise UnknownActionError(
            f"action {action!r} requires the display-message dialect"
        )
    return spec


def initiator_of(action: str) -> str:
    return lookup(action).initiator


def _check_value(field: Field, value: object, path: str) -> None:
    kind = field.kind
    if kind == "string" or kind == "datetime":
        if not isinstance(value, str):
            raise SchemaViolation(f"{path}: expected string, got {value!r}")
        if field.nonempty and not value:
            raise SchemaViolation(f"{path}: must not be empty")
        if field.max_length is not None and len(value) > field.max_length:
            raise SchemaViolation(
                f"{path}: exceeds {field.max_length} characters"
            )
        if field.enum is not None and value not in field.enum:
            raise SchemaViolation(
                f"{path}: {value!r} not one of {sorted(field.enum)}"
            )
        if kind == "datetime":
            try:
                _parse_iso8601(value)
            except ValueError:
                raise SchemaViolation(
                    f"{path}: {value!r} is not an ISO 8601 timestamp"
                ) from None
    elif kind == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaViolation(f"{path}: expected integer, got {value!r}")
        if field.min_value is not None and value < field.min_value:
            raise SchemaViolation(f"{path}: must be >= {field.min_value:g}")
    elif kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaViolation(f"{path}: expected number, got {value!r}")
        if field.min_value is not None and value < field.min_value:
            raise SchemaViolation(f"{path}: must be >= {field.min_value:g}")
    elif kind == "boolean":
        if not isinstance(value, bool):
            raise SchemaViolation(f"{path}: expected boolean, got {value!r}")
    elif kind == "object":
        if not isinstance(value, dict):
            raise SchemaViolation(f"{path}: expected object, got {value!r}")
        _check_fields(field.fields or (), value, strict=True, path=path)
    elif kind == "array":
        if not isinstance(value, list):
            raise SchemaViolation(f"{path}: expected array, got {value!r}")
        if field.nonempty and not value:
            raise SchemaViolation(f"{path}: must not be empty")
        if field.item is not None:
            for i, element in enumerate(value):
                _check_value(field.item, element, f"{path}[{i}]")
    else:  # pragma: no cover - table construction error
        raise AssertionError(f"unknown field kind {kind!r}")


def _check_fields(
    fields: tuple[Field, ...], payload: dict, *, strict: bool, path: str
) -> None:
    known = {f.name for f in fields}
    if strict:
        for key in payload:
            if key not in known:
                raise SchemaViolation(f"{path}: unexpected field {key!r}")
    for field in fields:
        if field.name not in payload:
            if field.required:
                raise SchemaViolation(
                    f"{path}: missing required field {field.name!r}"
                )
            continue
        _check_value(field, payload[field.name], f"{path}.{field.name}")


def validate_payload(
    action: str,
    kind: str,
    payload: dict,
    *,
    strict: bool = True,
    display_dialect: bool = True,
) -> dict:
    """Check a payload against an action schema and return it unchanged.

    ``kind`` selects ``"req"`` or ``"conf"``.  Strict mode rejects
    fields outside the schema; lenient mode ignores them but still
    enforces types and required fields, matching the usual
    liberal-in/conservative-out split.
    """
    if kind not in ("req", "conf"):
        raise ValueError(f"kind must be 'req' or 'conf', got {kind!r}")
    spec = lookup(action, display_dialect=display_dialect)
    if not isinstance(payload, dict):
        raise SchemaViolation(f"{action}.{kind}: payload must be an object")
    _check_fields(
        spec.req if kind == "req" else spec.conf,
        payload, strict=strict, path=f"{action}.{kind}",
    )
    return payload


def ordered_payload(fields: tuple[Field, ...], payload: dict) -> dict:
    """Rebuild a validated payload with keys in schema order, recursively."""
    out: dict = {}
    for field in fields:
        if field.name not in payload:
            continue
        value = payload[field.name]
        if field.kind == "object" and field.fields and isinstance(value, dict):
            value = ordered_payload(field.fields, value)
        elif field.kind == "array" and field.item is not None \
                and isinstance(value, list):
            item = field.item
            if item.kind == "object" and item.fields:
                value = [
                    ordered_payload(item.fields, el) if isinstance(el, dict)
                    else el
                    for el in value
                ]
        out[field.name] = value
    return out
