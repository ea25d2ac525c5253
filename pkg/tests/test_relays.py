"""Frequency relay behavior: definite-time pickup, presets, monotonicity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evcosim.powergrid import RelayConfig, RelayBank, check_relays

DT = 1e-3


def constant_freq_history(f_hz: float, seconds: float):
    n = int(seconds / DT)
    times = np.arange(1, n + 1) * DT
    freqs = np.full((n, 1), f_hz)
    return times, freqs


def test_sustained_over_frequency_trips_after_pickup():
    times, freqs = constant_freq_history(61.6, 0.5)
    events = check_relays(RelayConfig(), times, freqs, machine_buses=[1])
    assert len(events) == 1
    ev = events[0]
    assert ev.side == "over"
    assert ev.threshold_hz == 61.5
    assert ev.bus == 1
    # definite time: no earlier than pickup after the first sample beyond
    assert ev.t == pytest.approx(DT + 0.1, abs=2 * DT)


def test_nominal_frequency_never_trips():
    times, freqs = constant_freq_history(60.0, 5.0)
    assert check_relays(RelayConfig(), times, freqs) == []


def test_short_excursion_resets_timer():
    n = 400
    times = np.arange(1, n + 1) * DT
    freqs = np.full((n, 1), 60.0)
    freqs[50:120, 0] = 61.8   # 70 ms beyond: shorter than the 100 ms pickup
    assert check_relays(RelayConfig(), times, freqs) == []


def test_stringent_preset_trips_at_one_hz():
    times, freqs = constant_freq_history(61.2, 0.5)
    cfg = RelayConfig(over_hz=61.0, under_hz=59.0)
    events = check_relays(cfg, times, freqs)
    assert len(events) == 1 and events[0].side == "over"
    # default preset would not trip at 61.2
    assert check_relays(RelayConfig(), times, freqs) == []


def test_under_frequency_side():
    times, freqs = constant_freq_history(58.2, 0.5)
    events = check_relays(RelayConfig(), times, freqs)
    assert len(events) == 1 and events[0].side == "under"
    assert events[0].threshold_hz == 58.5


def test_disabled_machine_never_trips():
    times, freqs = constant_freq_history(62.5, 1.0)
    cfg = RelayConfig(enabled=(False,))
    assert check_relays(cfg, times, freqs) == []


def test_trip_is_idempotent_per_machine():
    bank = RelayBank(RelayConfig(), machine_buses=[1])
    in_service = np.array([True])
    events = []
    for k in range(1, 1000):
        events.extend(bank.update(k * DT, np.array([62.0]), in_service))
    assert len(events) == 1


@settings(max_examples=30, deadline=None)
@given(
    peak=st.floats(min_value=61.6, max_value=64.0),
    tighter=st.floats(min_value=0.05, max_value=0.4),
)
def test_lower_threshold_trips_no_later(peak, tighter):
    """A relay with a lower over-threshold trips at the same time or earlier."""
    n = 3000
    times = np.arange(1, n + 1) * DT
    ramp = 60.0 + (peak - 60.0) * np.minimum(times / 2.0, 1.0)
    freqs = ramp[:, None]
    base = check_relays(RelayConfig(over_hz=61.5), times, freqs)
    tight = check_relays(RelayConfig(over_hz=61.5 - tighter), times, freqs)
    assert len(base) == 1 and len(tight) == 1
    assert tight[0].t <= base[0].t + 1e-12
