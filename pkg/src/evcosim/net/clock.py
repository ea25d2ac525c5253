"""Wall-clock time sources for the realtime transports.

The deterministic stack runs on the event kernel's virtual clock; here
the same ports are backed by the machine clock instead.  `RealClock`
satisfies the clock protocol the cores expect (now / wall_iso) and
`LoopScheduler` satisfies the scheduling protocol the attack agents
expect (now / call_at / call_later), mapped onto a running asyncio
event loop.
"""

from __future__ import annotations

import asyncio
import time
from datetime import datetime, timezone
from typing import Any, Callable


class RealClock:
    """Monotonic seconds since construction, plus UTC wall timestamps."""

    def __init__(self) -> None:
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0

    def wall_iso(self) -> str:
        return (datetime.now(timezone.utc).isoformat()
                .replace("+00:00", "Z"))


class OffsetClock:
    """The same clock rebased to a chosen origin.

    The realtime runner rebases agent and gateway timestamps to the
    grid thread's start, so attack schedules and latency probes line up
    with the run-relative seconds the simulator emits.
    """

    def __init__(self, base, origin: float) -> None:
        self.base = base
        self.origin = origin

    def now(self) -> float:
        return self.base.now() - self.origin

    def wall_iso(self) -> str:
        return self.base.wall_iso()


class LoopScheduler:
    """Kernel-shaped scheduling facade over the running event loop.

    Exposes ``now`` (in the given clock's time base) plus ``call_at`` /
    ``call_later``; callbacks run on the loop thread.
    """

    def __init__(self, clock,
                 loop: asyncio.AbstractEventLoop | None = None) -> None:
        self.clock = clock
        self.loop = loop or asyncio.get_running_loop()

    @property
    def now(self) -> float:
        return self.clock.now()

    def wall_iso(self) -> str:
        return self.clock.wall_iso()

    def call_at(self, t: float, fn: Callable, *args: Any):
        return self.loop.call_later(max(0.0, t - self.now), fn, *args)

    def call_later(self, delay: float, fn: Callable, *args: Any):
        return self.loop.call_later(max(0.0, delay), fn, *args)
