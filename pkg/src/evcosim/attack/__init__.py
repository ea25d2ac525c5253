"""Demand-oscillation attack tooling: plans, agents, interception, defense."""

from .botnet import ATTACK_LOG_HEADER, AttackLog, BotnetAgent
from .detect import DivergenceDetector, DivergenceEvent
from .mitm import FORGED_TXN_BASE, MitmAgent, MitmProxy
from .plan import (
    ATTACK_MODES,
    AttackPlan,
    bus_counts,
    load_plan,
    plan_from_dict,
    plan_to_dict,
    save_plan,
)
from .waveform import WAVEFORM_KINDS, WaveformSpec, setpoints, waveform_value

__all__ = [
    "ATTACK_LOG_HEADER",
    "ATTACK_MODES",
    "AttackLog",
    "AttackPlan",
    "BotnetAgent",
    "DivergenceDetector",
    "DivergenceEvent",
    "FORGED_TXN_BASE",
    "MitmAgent",
    "MitmProxy",
    "WAVEFORM_KINDS",
    "WaveformSpec",
    "bus_counts",
    "load_plan",
    "plan_from_dict",
    "plan_to_dict",
    "save_plan",
    "setpoints",
    "waveform_value",
]
