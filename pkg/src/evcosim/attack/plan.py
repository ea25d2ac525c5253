"""Attack plan files: what to oscillate, when, through which door.

A plan is a small YAML document:

.. code-block:: yaml

    start_s: 5.0
    waveform: square
    period_s: 5.0
    duty: 0.5
    magnitude_mw: 90.0
    mode: botnet          # or mitm
    buses: [5, 6, 8]
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import yaml

from ..fleet.scaling import (
    DEFAULT_BUS_WEIGHTS,
    EVCS_RATE_KW,
    attack_ev_count,
    largest_remainder,
)
from .waveform import WaveformSpec

ATTACK_MODES = ("botnet", "mitm")


@dataclass(frozen=True)
class AttackPlan:
    start_s: float
    waveform: WaveformSpec
    mode: str = "botnet"
    buses: tuple[int, ...] = (5, 6, 8)

    def __post_init__(self):
        if self.start_s < 0:
            raise ValueError("start_s must be >= 0")
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"mode must be one of {ATTACK_MODES}")
        if not self.buses:
            raise ValueError("buses must not be empty")


def bus_counts(plan: AttackPlan, rate_kw: float = EVCS_RATE_KW,
               weights: dict[int, float] | None = None) -> dict[int, int]:
    """Vehicles each bus must capture for the full waveform magnitude."""
    total = attack_ev_count(plan.waveform.magnitude_mw, rate_kw)
    table = weights or DEFAULT_BUS_WEIGHTS
    per_bus = [table.get(b, 1.0) for b in plan.buses]
    shares = largest_remainder(total, per_bus)
    return dict(zip(plan.buses, shares))


def plan_to_dict(plan: AttackPlan) -> dict:
    return {
        "start_s": plan.start_s,
        "waveform": plan.waveform.kind,
        "period_s": plan.waveform.period_s,
        "duty": plan.waveform.duty,
        "magnitude_mw": plan.waveform.magnitude_mw,
        "mode": plan.mode,
        "buses": list(plan.buses),
    }


def plan_from_dict(doc: dict) -> AttackPlan:
    if not isinstance(doc, dict):
        raise ValueError("attack plan must be a mapping")
    required = {"start_s", "waveform", "period_s", "magnitude_mw"}
    missing = required - doc.keys()
    if missing:
        raise ValueError(f"attack plan missing keys: {sorted(missing)}")
    unknown = doc.keys() - {"start_s", "waveform", "period_s", "duty",
                            "magnitude_mw", "mode", "buses"}
    if unknown:
        raise ValueError(f"attack plan has unknown keys: {sorted(unknown)}")
    spec = WaveformSpec(
        kind=doc["waveform"],
        period_s=float(doc["period_s"]),
        duty=float(doc.get("duty", 0.5)),
        magnitude_mw=float(doc["magnitude_mw"]),
    )
    return AttackPlan(
        start_s=float(doc["start_s"]),
        waveform=spec,
        mode=doc.get("mode", "botnet"),
        buses=tuple(int(b) for b in doc.get("buses", (5, 6, 8))),
    )


def load_plan(path: str | os.PathLike) -> AttackPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return plan_from_dict(yaml.safe_load(fh))


def save_plan(plan: AttackPlan, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(plan_to_dict(plan), fh, sort_keys=False)
