"""Runtime adapters that put the transport-free cores on a clock."""

from .kernelnet import (
    AppCallRecord,
    AppGateway,
    GridService,
    KernelClock,
    OcppEndpoint,
    Station,
    build_station,
    connect_pair,
)

__all__ = [
    "AppCallRecord",
    "AppGateway",
    "GridService",
    "KernelClock",
    "OcppEndpoint",
    "Station",
    "build_station",
    "connect_pair",
]
