"""Waveforms, attack plans, botnet agent, MitM proxy, divergence defense."""

import csv
import json

import pytest

from evcosim.attack import (
    AttackLog,
    AttackPlan,
    BotnetAgent,
    DivergenceDetector,
    MitmAgent,
    MitmProxy,
    WaveformSpec,
    bus_counts,
    load_plan,
    plan_from_dict,
    save_plan,
    setpoints,
    waveform_value,
)
from evcosim.cms import AppRequest, CmsConfig, CmsCore, StationBinding
from evcosim.evcs import EvcsConfig
from evcosim.kernel import EventKernel
from evcosim.runtime import AppGateway, GridService, KernelClock, build_station


# -- waveform values (closed-form oracle) -------------------------------------


def test_square_wave_values():
    w = WaveformSpec("square", period_s=10.0, duty=0.3, magnitude_mw=90.0)
    assert waveform_value(w, -1.0) == 0.0
    assert waveform_value(w, 0.0) == 90.0
    assert waveform_value(w, 2.9) == 90.0
    assert waveform_value(w, 3.0) == 0.0
    assert waveform_value(w, 9.99) == 0.0
    assert waveform_value(w, 10.0) == 90.0
    assert waveform_value(w, 23.5) == 0.0  # third cycle, past duty


def test_sine_wave_values():
    w = WaveformSpec("sine", period_s=10.0, magnitude_mw=90.0)
    assert waveform_value(w, 0.0) == pytest.approx(0.0)
    assert waveform_value(w, 5.0) == pytest.approx(90.0)
    assert waveform_value(w, 2.5) == pytest.approx(45.0)
    assert waveform_value(w, 7.5) == pytest.approx(45.0)
    # never negative, never above magnitude
    vals = [waveform_value(w, 0.01 * k) for k in range(3000)]
    assert min(vals) >= 0.0 and max(vals) <= 90.0


def test_square_setpoints_are_edges():
    w = WaveformSpec("square", period_s=5.0, duty=0.5, magnitude_mw=90.0)
    assert setpoints(w, 12.0) == [
        (0.0, 90.0), (2.5, 0.0), (5.0, 90.0), (7.5, 0.0), (10.0, 90.0),
    ]


def test_full_duty_square_has_no_off_edges():
    w = WaveformSpec("square", period_s=5.0, duty=1.0, magnitude_mw=30.0)
    assert setpoints(w, 11.0) == [(0.0, 30.0)]


def test_sine_setpoints_form_staircase():
    w = WaveformSpec("sine", period_s=8.0, magnitude_mw=90.0)
    pts = setpoints(w, 8.0, steps_per_period=8)
    assert pts[0][0] == 0.0
    assert all(0.0 <= mw <= 90.0 for _, mw in pts)
    times = [t for t, _ in pts]
    assert times == sorted(times)
    peak_t = max(pts, key=lambda p: p[1])[0]
    assert 2.0 <= peak_t <= 6.0  # crest near mid-period


def test_waveform_validation():
    with pytest.raises(ValueError):
        WaveformSpec("triangle", period_s=5.0)
    with pytest.raises(ValueError):
        WaveformSpec("square", period_s=0.0)
    with pytest.raises(ValueError):
        WaveformSpec("square", period_s=5.0, duty=0.0)
    with pytest.raises(ValueError):
        WaveformSpec("square", period_s=5.0, magnitude_mw=-1.0)


# -- plan files ---------------------------------------------------------------


def demo_plan(**overrides):
    doc = {
        "start_s": 5.0,
        "waveform": "square",
        "period_s": 5.0,
        "duty": 0.5,
        "magnitude_mw": 90.0,
        "mode": "botnet",
        "buses": [5, 6, 8],
    }
    doc.update(overrides)
    return plan_from_dict(doc)


def test_plan_yaml_roundtrip(tmp_path):
    plan = demo_plan()
    path = tmp_path / "plan.yaml"
    save_plan(plan, path)
    assert load_plan(path) == plan


def test_plan_rejects_bad_documents():
    with pytest.raises(ValueError):
        plan_from_dict({"start_s": 1.0})  # missing keys
    with pytest.raises(ValueError):
        demo_plan(mode="drone")
    with pytest.raises(ValueError):
        plan_from_dict({**{"start_s": 0, "waveform": "square",
                           "period_s": 5, "magnitude_mw": 90},
                        "surprise": 1})


def test_bus_counts_match_station_proportions():
    # 90 MW at 24 kW per vehicle is 3,750 vehicles, split like the
    # station build-out across the three load buses
    assert bus_counts(demo_plan()) == {5: 1488, 6: 1071, 8: 1191}
    assert sum(bus_counts(demo_plan()).values()) == 3750


def test_bus_counts_for_single_bus():
    assert bus_counts(demo_plan(buses=[5])) == {5: 3750}


# -- shared rig ----------------------------------------------------------------


BUSES = (5, 6, 8)
COUNTS = {5: 1488, 6: 1071, 8: 1191}


def build_rig(kernel, connected=None, log_path=None):
    """Three stations, app gateway, per-bus EVCS ids."""
    stations_cfg = {
        f"evcs-bus{b}": StationBinding(bus=b, aggregate_count=5000)
        for b in BUSES
    }
    core = CmsCore(CmsConfig(stations=stations_cfg), KernelClock(kernel))
    stations = {}
    for b in BUSES:
        n = (connected or {}).get(b, 2000)
        stations[b] = build_station(
            kernel, core,
            EvcsConfig(cp_id=f"evcs-bus{b}", bus=b, aggregate_count=5000),
            connected=n)
    kernel.run_until(kernel.now + 1.0)
    gateway = AppGateway(kernel, core)
    evcs_by_bus = {b: f"evcs-bus{b}" for b in BUSES}
    return core, stations, gateway, evcs_by_bus


def read_log(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# -- botnet agent ----------------------------------------------------------------


def test_botnet_square_wave_toggles_fleet(tmp_path):
    k = EventKernel()
    core, stations, gateway, ids = build_rig(k, log_path=None)
    log = AttackLog(str(tmp_path / "attack.csv"))
    plan = demo_plan(start_s=2.0, period_s=10.0)
    agent = BotnetAgent(k, gateway, plan, ids, log=log)
    agent.arm(t_end=22.0)

    k.run_until(3.0)  # after first on-edge
    assert {b: t.ev_count for b, t in
            ((b, core.open_transaction_for(ids[b])) for b in BUSES)} == COUNTS
    total_kw = sum(core.ledger_power_kw().values())
    assert total_kw == pytest.approx(90_000.0)

    k.run_until(8.0)  # after first off-edge (2.0 + 5.0)
    assert core.ledger_power_kw() == {}
    assert all(stations[b].evcs.phase == "idle" for b in BUSES)

    k.run_until(13.0)  # second on-edge at 12.0
    assert sum(core.ledger_power_kw().values()) == pytest.approx(90_000.0)
    assert not agent.aborted
    log.close()

    rows = read_log(tmp_path / "attack.csv")
    on_rows = [r for r in rows if r["edge"] == "on"]
    off_rows = [r for r in rows if r["edge"] == "off"]
    assert len(on_rows) == 6  # two on-edges, three buses each
    assert len(off_rows) == 3
    assert {int(r["bus"]) for r in on_rows} == set(BUSES)
    assert all(r["achieved_count"] == r["requested_count"] for r in on_rows)
    assert float(on_rows[0]["t_s"]) == pytest.approx(2.0)


def test_botnet_capture_is_bounded_by_connected(tmp_path):
    k = EventKernel()
    core, stations, gateway, ids = build_rig(
        k, connected={5: 500, 6: 2000, 8: 2000})
    log = AttackLog(str(tmp_path / "attack.csv"))
    agent = BotnetAgent(k, gateway, demo_plan(start_s=1.0), ids, log=log)
    agent.arm(t_end=3.0)
    k.run_until(2.5)
    assert core.open_transaction_for(ids[5]).ev_count == 500
    assert core.open_transaction_for(ids[6]).ev_count == 1071
    log.close()
    by_bus = {int(r["bus"]): r for r in read_log(tmp_path / "attack.csv")
              if r["edge"] == "on"}
    assert by_bus[5]["requested_count"] == "1488"
    assert by_bus[5]["achieved_count"] == "500"
    assert by_bus[6]["achieved_count"] == "1071"


def test_botnet_self_heals_when_station_is_busy():
    k = EventKernel()
    core, stations, gateway, ids = build_rig(k)
    # a legitimate customer session occupies bus 5 before the attack
    core.handle_app_request(AppRequest("start", ids[5], count=50,
                                       id_tag="alice"))
    k.run_until(2.0)
    alice = core.open_transaction_for(ids[5])
    agent = BotnetAgent(k, gateway, demo_plan(start_s=3.0), ids)
    agent.arm(t_end=6.0)
    k.run_until(5.0)
    assert alice.state == "closed"  # stopped to make room
    assert core.open_transaction_for(ids[5]).ev_count == 1488
    assert not agent.aborted


def test_botnet_records_zero_capture(tmp_path):
    k = EventKernel()
    core, stations, gateway, ids = build_rig(
        k, connected={5: 0, 6: 2000, 8: 2000})
    log = AttackLog(str(tmp_path / "attack.csv"))
    agent = BotnetAgent(k, gateway, demo_plan(start_s=1.0), ids, log=log)
    agent.arm(t_end=3.0)
    k.run_until(2.5)
    assert core.open_transaction_for(ids[5]) is None
    assert any("bus 5" in note for note in agent.aborted)
    log.close()
    row5 = [r for r in read_log(tmp_path / "attack.csv")
            if r["bus"] == "5" and r["edge"] == "on"]
    assert row5[0]["achieved_count"] == "0"


def test_botnet_sine_redispatches_in_steps():
    k = EventKernel()
    core, stations, gateway, ids = build_rig(k, connected={b: 4000
                                                           for b in BUSES})
    plan = demo_plan(waveform="sine", period_s=16.0, start_s=1.0,
                     buses=[5])
    agent = BotnetAgent(k, gateway, plan, ids, steps_per_period=8)
    agent.arm(t_end=9.1)  # first half-period: ramp up to the crest
    seen = []
    for t in [2.5, 4.5, 6.5, 8.5]:
        k.run_until(t)
        txn = core.open_transaction_for(ids[5])
        seen.append(txn.ev_count if txn else 0)
    assert seen == sorted(seen)  # monotone ramp toward the crest
    assert seen[-1] > 3000  # near the 3,750 crest


# -- MitM proxy -------------------------------------------------------------------


def splice_rig(k, with_grid=False):
    core, stations, gateway, ids = build_rig(k)
    proxies = {}
    for b in BUSES:
        p = MitmProxy(k)
        p.splice(stations[b].client, stations[b].server)
        proxies[b] = p
    return core, stations, gateway, ids, proxies


def test_mitm_passthrough_is_byte_identical():
    k = EventKernel()
    seen = []
    p = MitmProxy(k)

    class FakeWire:
        def __init__(self, sink):
            self.sink = sink

        def send(self, text):
            self.sink.append(text)

    p.to_server = FakeWire(seen)
    p.to_client = FakeWire(seen)
    frames = [
        '[2,"7","Heartbeat",{}]',
        '[3,"7",{"currentTime":"2023-06-01T00:00:00Z"}]',
        '[2,"9","StatusNotification",{"connectorId":1,'
        '"errorCode":"NoError","status":"Available"}]',
    ]
    for f in frames:
        p.from_client(f)
    p.from_server(frames[1])
    assert seen == frames + [frames[1]]  # exact texts, no re-encoding


def test_mitm_hijack_is_invisible_to_operator():
    k = EventKernel()
    core, stations, gateway, ids, proxies = splice_rig(k)
    k.run_until(5.0)
    proxies[5].forge_start(1000)
    # run far past the 2x-heartbeat liveness horizon: swallowing the
    # station's meter traffic must not starve the operator side
    k.run_until(400.0)

    st = stations[5].evcs
    assert st.phase == "busy"
    assert st.power_kw == pytest.approx(24_000.0)
    assert st.active.transaction_id >= 900_000

    # the operator sees nothing: no transaction, station still available
    assert core.open_transaction_for(ids[5]) is None
    assert core.ledger_power_kw() == {}
    assert core.records[ids[5]].status == "available"
    # forged keepalives kept the liveness clock fed
    assert core.records[ids[5]].last_heartbeat_s is not None
    assert proxies[5].swallowed > 0

    proxies[5].forge_stop()
    k.run_until(405.0)
    assert st.phase == "idle"
    assert st.power_kw == 0.0
    assert not proxies[5].failures


def test_mitm_keeps_legitimate_traffic_working():
    k = EventKernel()
    core, stations, gateway, ids, proxies = splice_rig(k)
    resp = core.handle_app_request(AppRequest("start", ids[6], count=80,
                                              id_tag="bob"))
    assert resp.outcome == "accepted"
    k.run_until(3.0)
    txn = core.open_transaction_for(ids[6])
    assert txn.ev_count == 80
    assert txn.transaction_id < 900_000  # real ledger id, not forged
    core.handle_app_request(AppRequest("stop", ids[6]))
    k.run_until(4.0)
    assert core.open_transaction_for(ids[6]) is None


def test_mitm_agent_drives_square_wave():
    k = EventKernel()
    core, stations, gateway, ids, proxies = splice_rig(k)
    plan = demo_plan(start_s=2.0, mode="mitm", period_s=10.0)
    MitmAgent(k, proxies, plan).arm(t_end=12.0)
    k.run_until(3.0)
    assert {b: stations[b].evcs.power_kw for b in BUSES} == {
        5: pytest.approx(1488 * 24.0),
        6: pytest.approx(1071 * 24.0),
        8: pytest.approx(1191 * 24.0),
    }
    assert core.ledger_power_kw() == {}  # 90 MW the ledger cannot see
    k.run_until(8.0)  # off-edge at 7.0
    assert all(stations[b].evcs.power_kw == 0.0 for b in BUSES)


# -- divergence detection --------------------------------------------------------


def test_detector_needs_persistence():
    d = DivergenceDetector(threshold_mw=1.0, dwell_s=1.0)
    assert not d.feed(0.0, {5: 90.0}, {5: 90.0})
    assert not d.feed(0.5, {5: 90.0}, {5: 0.0})  # onset
    assert not d.feed(1.0, {5: 90.0}, {5: 90.0})  # healed: reset
    assert not d.feed(1.5, {5: 90.0}, {5: 0.0})
    assert not d.feed(2.0, {5: 90.0}, {5: 0.0})
    assert d.feed(2.5, {5: 90.0}, {5: 0.0})  # one second of divergence
    ev = d.flagged
    assert ev.onset_s == 1.5
    assert ev.t_s == 2.5
    assert ev.buses == (5,)
    assert ev.worst_mw == pytest.approx(90.0)


def test_detector_ignores_subthreshold_noise():
    d = DivergenceDetector(threshold_mw=1.0, dwell_s=1.0)
    for k in range(100):
        assert not d.feed(0.1 * k, {5: 90.4}, {5: 90.0})


def test_mitm_attack_is_flagged_within_one_period():
    from evcosim.powergrid.simulator import GridSimulator

    k = EventKernel()
    core, stations, gateway, ids, proxies = splice_rig(k)
    sim = GridSimulator(dt=0.01)
    grid = GridService(k, sim)
    for b in BUSES:
        stations[b].evcs.on_load = grid.apply_load
    detector = DivergenceDetector(threshold_mw=1.0, dwell_s=1.0)

    def watch(m):
        ledger = {b: kw / 1000.0 for b, kw in core.ledger_power_kw().items()}
        detector.feed(m.t, m.ev_mw, ledger)

    grid.listeners.append(watch)
    plan = demo_plan(start_s=2.0, mode="mitm", period_s=10.0)
    MitmAgent(k, proxies, plan).arm(t_end=12.0)
    grid.start(t_end=12.0)
    k.run_until(12.0)
    assert detector.flagged is not None
    assert detector.flagged.onset_s == pytest.approx(2.0, abs=0.05)
    assert detector.flagged.t_s <= 2.0 + plan.waveform.period_s
    # worst single-bus gap: 1,488 vehicles at 24 kW on bus 5
    assert detector.flagged.worst_mw == pytest.approx(35.712, abs=0.5)
    assert set(detector.flagged.buses) == set(BUSES)


def test_forged_frames_use_disjoint_uid_namespace():
    k = EventKernel()
    core, stations, gateway, ids, proxies = splice_rig(k)
    k.run_until(1.0)
    captured = []
    orig = stations[5].client.rx

    def spy(text):
        captured.append(text)
        orig(text)

    proxies[5].to_client.deliver = spy
    proxies[5].forge_start(10)
    k.run_until(2.0)
    forged_uids = {json.loads(t)[1] for t in captured
                   if json.loads(t)[0] == 2}
    assert all(u.startswith("x") for u in forged_uids)
    # server-originated uids are plain decimals, so no collision is possible
    assert not any(u.isdigit() for u in forged_uids)
