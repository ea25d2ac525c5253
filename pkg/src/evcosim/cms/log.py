"""Append-only CMS audit log and the replay that rebuilds the ledger.

Every state-bearing event lands as one CSV row; rows are never edited.
Replaying a log file reconstructs the final charge-point and transaction
state, which doubles as the crash-recovery path and as the audit check
that the in-memory ledger never drifted from what was written.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

CMS_LOG_HEADER = ("ts_iso", "cp_id", "event", "transaction_id",
                  "ev_count", "power_kw", "detail")

# events that affect replayed state; anything else is audit-only
EVENT_BOOT = "boot"
EVENT_INTERRUPTED = "transaction_interrupted"
EVENT_TXN_START = "transaction_start"
EVENT_TXN_STOP = "transaction_stop"
EVENT_METER = "meter_values"
EVENT_OFFLINE = "offline"
EVENT_ONLINE = "online"
EVENT_STATUS = "status"


class CmsLog:
    """CSV appender; one instance owns one file handle."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "a", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if self._fh.tell() == 0:
            self._writer.writerow(CMS_LOG_HEADER)
            self._fh.flush()

    def append(self, ts_iso: str, cp_id: str, event: str,
               transaction_id: int | None = None,
               ev_count: int | None = None,
               power_kw: float | None = None,
               detail: str = "") -> None:
        self._writer.writerow([
            ts_iso,
            cp_id,
            event,
            "" if transaction_id is None else transaction_id,
            "" if ev_count is None else ev_count,
            "" if power_kw is None else repr(float(power_kw)),
            detail,
        ])
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


@dataclass
class ReplayedTransaction:
    transaction_id: int
    cp_id: str
    ev_count: int
    power_kw: float
    start_iso: str
    stop_iso: str | None = None
    state: str = "open"  # open | closed | interrupted
    last_meter: str = ""


@dataclass
class ReplayedRecord:
    cp_id: str
    status: str = "available"   # available | busy | error | offline
    boots: int = 0


@dataclass
class LedgerSnapshot:
    records: dict[str, ReplayedRecord] = field(default_factory=dict)
    transactions: dict[int, ReplayedTransaction] = field(default_factory=dict)

    def open_transactions(self) -> list[ReplayedTransaction]:
        return [t for t in self.transactions.values() if t.state == "open"]


def replay_log(path) -> LedgerSnapshot:
    """Fold the audit log into final ledger state, row by row."""
    snap = LedgerSnapshot()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CMS_LOG_HEADER:
            raise ValueError(f"bad log header {header!r}")
        for ts, cp_id, event, txn_s, count_s, power_s, detail in reader:
            record = snap.records.setdefault(cp_id, ReplayedRecord(cp_id))
            if event == EVENT_BOOT:
                record.boots += 1
                record.status = "available"
            elif event == EVENT_TXN_START:
                txn = int(txn_s)
                snap.transactions[txn] = ReplayedTransaction(
                    txn, cp_id, int(count_s), float(power_s), ts)
                record.status = "busy"
            elif event == EVENT_TXN_STOP:
                txn = snap.transactions.get(int(txn_s))
                if txn is not None and txn.state == "open":
                    txn.state = "closed"
                    txn.stop_iso = ts
                record.status = "available"
            elif event == EVENT_INTERRUPTED:
                txn = snap.transactions.get(int(txn_s))
                if txn is not None and txn.state == "open":
                    txn.state = "interrupted"
                    txn.stop_iso = ts
                record.status = "available"
            elif event == EVENT_METER:
                txn = snap.transactions.get(int(txn_s)) if txn_s else None
                if txn is not None:
                    txn.last_meter = detail
            elif event == EVENT_OFFLINE:
                record.status = "offline"
            elif event == EVENT_ONLINE:
                record.status = "available"
            elif event == EVENT_STATUS:
                record.status = detail or record.status
    return snap
