"""Load-oscillation waveforms.

A demand attack is a periodic power target: a square wave (all captured
vehicles on, then all off) or a raised-cosine "sine" sweep that ramps
the fleet smoothly between zero and full magnitude.  Values are the
attacker's *target* megawatts; what the stations actually deliver
depends on how many vehicles the start pipeline captures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

WAVEFORM_KINDS = ("square", "sine")


@dataclass(frozen=True)
class WaveformSpec:
    kind: str
    period_s: float
    duty: float = 0.5           # square only: on-fraction of each cycle
    magnitude_mw: float = 90.0

    def __post_init__(self):
        if self.kind not in WAVEFORM_KINDS:
            raise ValueError(f"kind must be one of {WAVEFORM_KINDS}")
        if self.period_s <= 0:
            raise ValueError("period_s must be positive")
        if not 0.0 < self.duty <= 1.0:
            raise ValueError("duty must be in (0, 1]")
        if self.magnitude_mw < 0:
            raise ValueError("magnitude_mw must be >= 0")


def waveform_value(spec: WaveformSpec, t_rel: float) -> float:
    """Target MW at t_rel seconds after the attack start (0 before it)."""
    if t_rel < 0:
        return 0.0
    phase = math.fmod(t_rel, spec.period_s)
    if spec.kind == "square":
        on = phase < spec.duty * spec.period_s
        return spec.magnitude_mw if on else 0.0
    return spec.magnitude_mw * (1.0 - math.cos(
        2.0 * math.pi * phase / spec.period_s)) / 2.0


def setpoints(spec: WaveformSpec, horizon_s: float,
              steps_per_period: int = 16) -> list[tuple[float, float]]:
    """(t_rel, target MW) changes over [0, horizon).

    Square waves change exactly at their on/off edges.  Sine sweeps are
    quantized into a staircase the attacker can realize through
    start/stop commands; consecutive equal targets are merged.
    """
    if horizon_s <= 0:
        return []
    points: list[tuple[float, float]] = []
    if spec.kind == "square":
        k = 0
        while k * spec.period_s < horizon_s:
            t_on = k * spec.period_s
            points.append((t_on, spec.magnitude_mw))
            t_off = t_on + spec.duty * spec.period_s
            if t_off < horizon_s and spec.duty < 1.0:
                points.append((t_off, 0.0))
            k += 1
    else:
        if steps_per_period < 2:
            raise ValueError("steps_per_period must be >= 2")
        dt = spec.period_s / steps_per_period
        n = math.ceil(horizon_s / dt)
        for i in range(n):
            t = i * dt
            if t >= horizon_s:
                break
            # hold each step at its midpoint value
            points.append((t, waveform_value(spec, t + dt / 2.0)))
    merged: list[tuple[float, float]] = []
    for t, mw in points:
        if not merged or merged[-1][1] != mw:
            merged.append((t, mw))
    return merged
