"""Aggregate charge-point emulator: protocol pipeline, HMI, persistence."""

from .core import (
    ActivePipeline,
    DEFAULT_METER_PERIOD_S,
    EvcsConfig,
    EvcsCore,
    LoadCommand,
)
from .store import KvStore

__all__ = [
    "ActivePipeline",
    "DEFAULT_METER_PERIOD_S",
    "EvcsConfig",
    "EvcsCore",
    "KvStore",
    "LoadCommand",
]
