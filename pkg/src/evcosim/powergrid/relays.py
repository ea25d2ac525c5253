"""Generator frequency protection: definite-time over/under relays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RelayConfig:
    """Per-generator frequency relay settings.

    A trip fires when a machine's frequency stays beyond a threshold for the
    full pickup delay.  ``enabled`` may shorten to fewer machines than the
    model has; missing entries default to True.
    """
    over_hz: float = 61.5
    under_hz: float = 58.5
    pickup_s: float = 0.1
    enabled: tuple[bool, ...] = ()

    def is_enabled(self, machine: int) -> bool:
        if machine < len(self.enabled):
            return self.enabled[machine]
        return True


@dataclass(frozen=True)
class TripEvent:
    machine: int           # machine index
    bus: int               # machine bus id
    t: float               # trip time, s
    f_hz: float            # frequency at trip
    threshold_hz: float
    side: str              # "over" | "under"


class RelayBank:
    """Stateful pickup timers for one simulation run.

    ``update`` is idempotent per machine: once tripped, a machine never
    produces another event.
    """

    def __init__(self, config: RelayConfig, machine_buses: list[int]) -> None:
        self.config = config
        self.machine_buses = machine_buses
        n = len(machine_buses)
        self._over_since = np.full(n, np.nan)
        self._under_since = np.full(n, np.nan)
        self.tripped = np.zeros(n, dtype=bool)

    def update(self, t: float, f_hz: np.ndarray,
               in_service: np.ndarray) -> list[TripEvent]:
        cfg = self.config
        events: list[TripEvent] = []
        for i in range(len(self.machine_buses)):
            if self.tripped[i] or not in_service[i] or not cfg.is_enabled(i):
                continue
            f = float(f_hz[i])
            if f > cfg.over_hz:
                if np.isnan(self._over_since[i]):
                    self._over_since[i] = t
                elif t - self._over_since[i] >= cfg.pickup_s:
                    self.tripped[i] = True
                    events.append(TripEvent(i, self.machine_buses[i], t, f,
                                            cfg.over_hz, "over"))
                    continue
            else:
                self._over_since[i] = np.nan
            if f < cfg.under_hz:
                if np.isnan(self._under_since[i]):
                    self._under_since[i] = t
                elif t - self._under_since[i] >= cfg.pickup_s:
                    self.tripped[i] = True
                    events.append(TripEvent(i, self.machine_buses[i], t, f,
                                            cfg.under_hz, "under"))
            else:
                self._under_since[i] = np.nan
        return events


def check_relays(config: RelayConfig, times: np.ndarray,
                 freqs_hz: np.ndarray,
                 machine_buses: list[int] | None = None) -> list[TripEvent]:
    """Replay a frequency history (times x machines) through fresh relays."""
    freqs = np.atleast_2d(np.asarray(freqs_hz, dtype=float))
    if freqs.shape[0] != len(times):
        freqs = freqs.T
    n = freqs.shape[1]
    buses = machine_buses if machine_buses is not None else list(range(1, n + 1))
    bank = RelayBank(config, buses)
    in_service = np.ones(n, dtype=bool)
    events: list[TripEvent] = []
    for k, t in enumerate(times):
        events.extend(bank.update(float(t), freqs[k], in_service))
    return events
