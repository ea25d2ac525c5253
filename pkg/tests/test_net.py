"""Realtime transport tests: OCPP over live WebSockets, the HTTP app
API, the socket-path MitM relay, and the wall-clock scenario service.

Everything binds ephemeral loopback ports.  Wall-clock pacing on a
shared machine jitters, so assertions stick to structure and causality
(counts, orderings, artifact contents), never tight timing.
"""

import asyncio
import csv
import json
import threading
import time

import httpx
import pytest
from websockets.asyncio.client import connect as ws_connect
from websockets.exceptions import InvalidStatus

from evcosim.cms.core import CmsConfig, CmsCore, StationBinding
from evcosim.evcs.core import EvcsConfig
from evcosim.harness import scenario_from_dict
from evcosim.net import (
    AppApiServer,
    CmsWsServer,
    EvcsWsClient,
    RealClock,
    charge_point_id,
    run_realtime,
)

HEARTBEAT_S = 2


def make_core(clock, stations=None):
    stations = stations or {"evcs-5": StationBinding(bus=5,
                                                     aggregate_count=400)}
    return CmsCore(CmsConfig(heartbeat_interval_s=HEARTBEAT_S,
                             stations=stations), clock)


async def wait_for(predicate, timeout_s=5.0, what="condition"):
    deadline = time.monotonic() + timeout_s
    while not predicate():
        if time.monotonic() > deadline:
            raise AssertionError(f"timed out waiting for {what}")
        await asyncio.sleep(0.01)


def scenario_doc(**overrides):
    doc = {
        "name": "rt-test",
        "grid": {"dt_s": 0.001, "duration_s": 2.0, "mode": "realtime",
                 "preset": "canonical", "base_profile": "constant"},
        "fleet": {"profile": "none", "rate_kw": 24.0},
        "topology": {
            "heartbeat_interval_s": HEARTBEAT_S,
            "stations": [
                {"cp_id": "evcs-bus5", "bus": 5, "aggregate_count": 400,
                 "connected_evs": 400},
            ],
        },
        "attack": {"enabled": False},
        "output": {"telemetry": "telemetry.csv", "decimation": 10,
                   "cms_log": "cms.csv", "attack_log": "attack.csv",
                   "summary": "summary.json"},
    }
    doc.update(overrides)
    return doc


# ---------------------------------------------------------------- routing


def test_charge_point_id_parses_the_ocpp_route():
    assert charge_point_id("/ocpp/evcs-5") == "evcs-5"
    assert charge_point_id("/ocpp/evcs%205") == "evcs 5"
    assert charge_point_id("/ocpp/evcs-5?x=1") == "evcs-5"
    assert charge_point_id("/ocpp/") is None
    assert charge_point_id("/ocpp/a/b") is None
    assert charge_point_id("/other/evcs-5") is None


# ------------------------------------------------------- websocket stack


def test_station_boots_and_charges_over_real_sockets():
    async def main():
        clock = RealClock()
        core = make_core(clock)
        cms = CmsWsServer(core, clock)
        await cms.start()
        loads = []
        client = EvcsWsClient(EvcsConfig("evcs-5", 5, 400), cms.url, clock,
                              connected=50, heartbeat_interval_s=HEARTBEAT_S,
                              on_load=loads.append)
        await client.start()
        try:
            await wait_for(lambda: "evcs-5" in core.bindings, what="boot")
            assert core.records["evcs-5"].status == "available"
            assert core.records["evcs-5"].bus == 5

            from evcosim.cms.core import AppRequest
            resp = core.handle_app_request(AppRequest("start", "evcs-5",
                                                      count=25))
            assert resp.outcome == "accepted"
            await wait_for(lambda: any(c.power_kw > 0 for c in loads),
                           what="load command")
            assert loads[-1].power_kw == pytest.approx(25 * 24.0)
            await wait_for(
                lambda: core.records["evcs-5"].status == "busy",
                what="busy status")

            resp = core.handle_app_request(AppRequest("stop", "evcs-5"))
            assert resp.outcome == "accepted"
            await wait_for(lambda: loads[-1].power_kw == 0.0,
                           what="load drop")
        finally:
            await client.close()
            await cms.close()

    asyncio.run(main())


def test_handshake_requires_subprotocol_and_route():
    async def main():
        clock = RealClock()
        cms = CmsWsServer(make_core(clock), clock)
        await cms.start()
        try:
            async with ws_connect(f"{cms.url}/ocpp/evcs-5",
                                  subprotocols=["ocpp1.6"]) as ws:
                assert ws.subprotocol == "ocpp1.6"

            with pytest.raises(InvalidStatus):
                await ws_connect(f"{cms.url}/ocpp/evcs-5")

            with pytest.raises(InvalidStatus) as err:
                await ws_connect(f"{cms.url}/nope/evcs-5",
                                 subprotocols=["ocpp1.6"])
            assert err.value.response.status_code == 404
        finally:
            await cms.close()

    asyncio.run(main())


# ------------------------------------------------------------- HTTP API


def test_http_api_contract():
    async def main():
        clock = RealClock()
        core = make_core(clock)
        cms = CmsWsServer(core, clock)
        api = AppApiServer(core)
        await cms.start()
        await api.start()
        client = EvcsWsClient(EvcsConfig("evcs-5", 5, 400), cms.url, clock,
                              connected=50, heartbeat_interval_s=HEARTBEAT_S)
        await client.start()
        try:
            await wait_for(lambda: "evcs-5" in core.bindings, what="boot")
            async with httpx.AsyncClient(base_url=api.url) as http:
                r = await http.post("/api/v1/start",
                                    json={"evcsId": "evcs-5", "count": 10,
                                          "idTag": "tester"})
                assert r.status_code == 202
                body = r.json()
                assert body["outcome"] == "accepted"
                assert body["requestId"]

                await wait_for(
                    lambda: core.open_transaction_for("evcs-5") is not None,
                    what="transaction")
                r = await http.get("/api/v1/status/evcs-5")
                assert r.status_code == 200
                doc = r.json()
                assert doc["outcome"] == "status"
                assert doc["status"]["transaction"]["evCount"] == 10
                assert doc["status"]["transaction"]["idTag"] == "tester"

                r = await http.post("/api/v1/stop",
                                    json={"evcsId": "evcs-5"})
                assert r.status_code == 202

                r = await http.get("/api/v1/status/unknown-evcs")
                assert r.status_code == 404
                assert r.json()["outcome"] == "rejected"

                # malformed body is a 4xx rejection, not a server error
                r = await http.post("/api/v1/start", json={"count": 3})
                assert 400 <= r.status_code < 500
        finally:
            await client.close()
            await cms.close()
            await api.close()

    asyncio.run(main())


# --------------------------------------------------- CLI against the API


class _ApiFixture:
    """App API + one booted station served from a background loop."""

    def __init__(self):
        self.url = None
        self._ready = threading.Event()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)

    def __enter__(self):
        self._thread.start()
        if not self._ready.wait(10.0):
            raise RuntimeError("API fixture never came up")
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join(10.0)

    def _serve(self):
        async def main():
            clock = RealClock()
            core = make_core(clock)
            cms = CmsWsServer(core, clock)
            api = AppApiServer(core)
            await cms.start()
            await api.start()
            station = EvcsWsClient(EvcsConfig("evcs-5", 5, 400), cms.url,
                                   clock, connected=50,
                                   heartbeat_interval_s=HEARTBEAT_S)
            await station.start()
            await wait_for(lambda: "evcs-5" in core.bindings, what="boot")
            self.url = api.url
            self._ready.set()
            while not self._stop.is_set():
                await asyncio.sleep(0.02)
            await station.close()
            await cms.close()
            await api.close()

        asyncio.run(main())


def test_cli_app_drives_the_served_api(capsys):
    from evcosim.cli import main

    with _ApiFixture() as fx:
        assert main(["app", "start", "evcs-5", "10",
                     "--url", fx.url, "--id-tag", "cli"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["outcome"] == "accepted"

        assert main(["app", "status", "evcs-5", "--url", fx.url]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["status"]["transaction"]["evCount"] == 10

        assert main(["app", "stop", "evcs-5", "--url", fx.url]) == 0
        capsys.readouterr()

        assert main(["app", "status", "missing", "--url", fx.url]) == 1


def test_cli_app_reports_unreachable_cms(capsys):
    from evcosim.cli import main

    rc = main(["app", "status", "evcs-5",
               "--url", "http://127.0.0.1:9", "--timeout", "0.3"])
    assert rc == 1
    assert "unreachable" in capsys.readouterr().err


# ------------------------------------------------------ realtime service


def test_run_realtime_botnet_end_to_end(tmp_path):
    doc = scenario_doc()
    doc["attack"] = {"enabled": True, "mode": "botnet", "start_s": 0.3,
                     "waveform": "square", "period_s": 1.0, "duty": 0.5,
                     "magnitude_mw": 5.0, "buses": [5]}
    result = run_realtime(scenario_from_dict(doc), tmp_path,
                          keep_memory=True)

    assert result.steps == 2000
    assert result.rows_written == 200
    assert result.attack_edges > 0
    assert result.aborted_captures == []
    ev = [m.ev_mw[5] for m in result.measurements]
    assert max(ev) == pytest.approx(5.0, rel=0.01)
    assert min(ev) == 0.0
    # wall-clock causality: accepted start precedes its grid effect
    assert result.app_latency_count > 0
    assert result.app_latency_mean_s > 0
    assert not result.blackout

    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["mode"] == "realtime"
    assert "pacing" in summary
    assert summary["pacing"]["overruns"] >= 0

    with open(tmp_path / "attack.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and any(row["edge"] == "on" for row in rows)
    on_rows = [row for row in rows if row["edge"] == "on"]
    assert all(float(row["latency_ms"]) > 0 for row in on_rows)


def test_run_realtime_mitm_diverges_while_ledger_stays_blind(tmp_path):
    doc = scenario_doc()
    doc["grid"]["duration_s"] = 2.5
    # on-phase must outlast the detector's 1 s dwell plus the real
    # transport latency of the forged start
    doc["attack"] = {"enabled": True, "mode": "mitm", "start_s": 0.3,
                     "waveform": "square", "period_s": 2.0, "duty": 0.75,
                     "magnitude_mw": 5.0, "buses": [5]}
    result = run_realtime(scenario_from_dict(doc), tmp_path,
                          keep_memory=True)

    ev = [m.ev_mw[5] for m in result.measurements]
    assert max(ev) == pytest.approx(5.0, rel=0.01)
    assert result.divergence is not None
    assert result.divergence.buses == (5,)
    assert result.divergence.onset_s < result.divergence.t_s

    # the operator's ledger never saw a transaction start
    with open(tmp_path / "cms.csv", newline="") as fh:
        events = [row["event"] for row in csv.DictReader(fh)]
    assert "start_transaction" not in events


def test_run_realtime_rejects_wrong_mode(tmp_path):
    doc = scenario_doc()
    doc["grid"]["mode"] = "accelerated"
    with pytest.raises(ValueError, match="realtime"):
        run_realtime(scenario_from_dict(doc), tmp_path)


def test_realtime_teardown_releases_its_ports(tmp_path):
    doc = scenario_doc()
    doc["grid"]["duration_s"] = 0.5
    scenario = scenario_from_dict(doc)
    run_realtime(scenario, tmp_path / "a")
    # immediate rerun rebinds fresh sockets; leaked loops or fds would
    # surface here as bind/timeout failures
    result = run_realtime(scenario, tmp_path / "b")
    assert result.steps == 500

    async def rebind():
        clock = RealClock()
        core = make_core(clock)
        first = CmsWsServer(core, clock)
        await first.start()
        port = first.port
        await first.close()
        again = CmsWsServer(core, clock, port=port)
        await again.start()
        assert again.port == port
        await again.close()

    asyncio.run(rebind())
