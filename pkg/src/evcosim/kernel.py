"""Deterministic discrete-event kernel for the accelerated co-simulation mode.

Every component in accelerated mode is driven by callbacks scheduled on one
:class:`EventKernel`.  Events with equal timestamps fire in insertion order,
so a run is a pure function of (config, seeds) and telemetry is reproducible
byte for byte.  Realtime mode does not use this kernel; it runs the same
component cores on asyncio + threads instead.
"""

from __future__ import annotations

import heapq
from datetime import datetime, timedelta, timezone
from typing import Any, Callable

# Fixed wall-clock origin for accelerated runs: sim second 0 maps here, so
# ISO timestamps in logs and OCPP payloads are reproducible across runs.
SIM_EPOCH = datetime(2023, 6, 1, 0, 0, 0, tzinfo=timezone.utc)


class EventHandle:
    """Cancellation token returned by the schedule calls."""

    __slots__ = ("cancelled",)

    def __init__(self) -> None:
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class EventKernel:
    """Priority-queue event scheduler with a virtual clock.

    Tie-break is a monotonically increasing sequence number: two events
    scheduled for the same instant run in the order they were scheduled.
    Exceptions raised by callbacks propagate to the caller of ``run_until``.
    """

    def __init__(self, start: float = 0.0, epoch: datetime = SIM_EPOCH) -> None:
        self.now = start
        self.epoch = epoch
        self._heap: list[tuple[float, int, EventHandle, Callable, tuple]] = []
        self._seq = 0

    def call_at(self, t: float, fn: Callable, *args: Any) -> EventHandle:
        if t < self.now:
            raise ValueError(f"cannot schedule in the past: {t} < {self.now}")
        handle = EventHandle()
        heapq.heappush(self._heap, (t, self._seq, handle, fn, args))
        self._seq += 1
        return handle

    def call_later(self, delay: float, fn: Callable, *args: Any) -> EventHandle:
        return self.call_at(self.now + delay, fn, *args)

    def run_until(self, t_end: float) -> None:
        """Run every event with timestamp <= t_end, then set now = t_end."""
        while self._heap and self._heap[0][0] <= t_end:
            t, _, handle, fn, args = heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self.now = t
            fn(*args)
        self.now = max(self.now, t_end)

    def run_until_idle(self) -> None:
        while self._heap:
            t, _, handle, fn, args = heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self.now = t
            fn(*args)

    def pending(self) -> int:
        return sum(1 for e in self._heap if not e[2].cancelled)

    # Wall-clock view used for ISO timestamps in logs and payloads.
    def wall_datetime(self) -> datetime:
        return self.epoch + timedelta(seconds=self.now)

    def wall_iso(self) -> str:
        return self.wall_datetime().isoformat().replace("+00:00", "Z")


class Wire:
    """Unidirectional FIFO message link with a fixed delivery latency.

    Zero latency still defers delivery by one kernel event, which keeps
    causality explicit: a message sent while the grid is mid-step is seen by
    the next step, never the current one.
    """

    def __init__(self, kernel: EventKernel, deliver: Callable[[Any], None],
                 latency: float = 0.0) -> None:
        self.kernel = kernel
        self.deliver = deliver
        self.latency = latency
        self.open = True

    def send(self, msg: Any) -> None:
        if not self.open:
            return
        self.kernel.call_later(self.latency, self._deliver_if_open, msg)

    def _deliver_if_open(self, msg: Any) -> None:
        if self.open:
            self.deliver(msg)

    def close(self) -> None:
        self.open = False
