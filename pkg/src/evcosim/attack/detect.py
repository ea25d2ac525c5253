"""Grid-side defense: spot load the operator's ledger cannot explain.

The detector compares measured EV power per bus against what the
central system believes it commanded.  Transient skew during ordinary
start/stop handshakes lasts well under a second, so a divergence only
counts once it exceeds the threshold continuously for the dwell time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping


@dataclass
class DivergenceEvent:
    t_s: float          # when the dwell completed and the flag raised
    onset_s: float      # when the divergence first exceeded the threshold
    worst_mw: float
    buses: tuple[int, ...]


@dataclass
class DivergenceDetector:
    threshold_mw: float = 1.0
    dwell_s: float = 1.0
    flagged: DivergenceEvent | None = None
    _onset: float | None = field(default=None, repr=False)
    _worst: float = field(default=0.0, repr=False)
    _buses: set = field(default_factory=set, repr=False)

    def feed(self, t_s: float, telemetry_mw: Mapping[int, float],
             ledger_mw: Mapping[int, float]) -> bool:
        """Compare one sample; returns True once a divergence is latched."""
        if self.flagged is not None:
            return True
        over: list[int] = []
        worst = 0.0
        for bus in set(telemetry_mw) | set(ledger_mw):
            gap = abs(telemetry_mw.get(bus, 0.0) - ledger_mw.get(bus, 0.0))
            if gap > self.threshold_mw:
                over.append(bus)
                worst = max(worst, gap)
        if not over:
            self._onset = None
            self._worst = 0.0
            self._buses.clear()
            return False
        if self._onset is None:
            self._onset = t_s
        self._worst = max(self._worst, worst)
        self._buses.update(over)
        if t_s - self._onset >= self.dwell_s:
            self.flagged = DivergenceEvent(
                t_s=t_s, onset_s=self._onset, worst_mw=self._worst,
                buses=tuple(sorted(self._buses)))
            return True
        return False
