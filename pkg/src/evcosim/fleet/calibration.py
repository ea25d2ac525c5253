"""Re-runnable check that the shipped parameters hit published aggregates.

Three targets, evaluated on seed-averaged outcomes:

  * daily mean station occupancy between 30% and 32%,
  * peak connected load of at least 225 MW, falling in the afternoon,
  * at least 90 MW connected continuously from 11:20 through midnight.

The report lists every target with its measured value and pass/fail so
a recalibration run shows exactly which constraint moved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import FleetConfig, HourlyParams, default_params, generate_day

ATTACK_WINDOW_START_MIN = 680   # 11:20
AFTERNOON_START_MIN = 720       # 12:00
AFTERNOON_END_MIN = 1080        # 18:00


@dataclass(frozen=True)
class CalibrationTarget:
    name: str
    measured: float
    requirement: str
    passed: bool

    def format(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: {self.measured:.4g} ({self.requirement})"


@dataclass(frozen=True)
class CalibrationReport:
    targets: tuple[CalibrationTarget, ...]
    seeds: tuple[int, ...]

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.targets)

    def format(self) -> str:
        lines = [f"calibration over {len(self.seeds)} seeds "
                 f"({self.seeds[0]}..{self.seeds[-1]})"]
        lines += [t.format() for t in self.targets]
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def calibrate(
    params: HourlyParams | None = None,
    config: FleetConfig | None = None,
    seeds: Sequence[int] = tuple(range(30)),
) -> CalibrationReport:
    """Generate one day per seed and grade the averaged outcomes."""
    if not seeds:
        raise ValueError("need at least one seed")
    params = params or default_params()
    config = config or FleetConfig()
    mean_occ = []
    peaks = []
    peak_minutes = []
    window_mins = []
    for seed in seeds:
        profile, _ = generate_day(config, params, seed)
        total = profile.total_counts()
        mean_occ.append(total.mean() / config.total_evcs)
        p_mw = profile.total_p_mw()
        peaks.append(float(p_mw.max()))
        peak_minutes.append(int(p_mw.argmax()))
        window_mins.append(float(p_mw[ATTACK_WINDOW_START_MIN:].min()))
    occ = float(np.mean(mean_occ))
    peak = float(np.mean(peaks))
    peak_minute = float(np.mean(peak_minutes))
    floor = float(np.mean(window_mins))
    targets = (
        CalibrationTarget(
            "daily mean occupancy fraction", occ,
            "within [0.30, 0.32]", 0.30 <= occ <= 0.32),
        CalibrationTarget(
            "peak connected load MW", peak,
            ">= 225 MW", peak >= 225.0),
        CalibrationTarget(
            "peak minute of day", peak_minute,
            "in the afternoon [720, 1080)",
            AFTERNOON_START_MIN <= peak_minute < AFTERNOON_END_MIN),
        CalibrationTarget(
            "minimum connected load MW over 11:20-24:00", floor,
            ">= 90 MW", floor >= 90.0),
    )
    return CalibrationReport(targets, tuple(seeds))
