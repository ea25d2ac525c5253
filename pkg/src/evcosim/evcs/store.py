"""Append-only key-value persistence for the charge-point emulator.

One line per write, ``ts|key|value``.  Replaying the file top to bottom
(last write wins) rebuilds the state a real controller would keep in
flash: the energy register, the firmware version, and whether a
transaction was open when the power went away.
"""

from __future__ import annotations

import io
import os


class KvStore:
    """Durable string-to-string map backed by an append-only log."""

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        self._data: dict[str, str] = {}
        if os.path.exists(self.path):
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    _, key, value = line.split("|", 2)
                    if value == "":
                        self._data.pop(key, None)
                    else:
                        self._data[key] = value
        self._fh: io.TextIOWrapper = open(self.path, "a", encoding="utf-8")

    def put(self, ts_iso: str, key: str, value: str) -> None:
        """Record key=value; an empty value deletes the key on replay."""
        if "|" in key or "\n" in key:
            raise ValueError(f"key may not contain '|' or newline: {key!r}")
        if "\n" in value:
            raise ValueError("value may not contain newline")
        self._fh.write(f"{ts_iso}|{key}|{value}\n")
        self._fh.flush()
        if value == "":
            self._data.pop(key, None)
        else:
            self._data[key] = value

    def delete(self, ts_iso: str, key: str) -> None:
        self.put(ts_iso, key, "")

    def get(self, key: str, default: str = "") -> str:
        return self._data.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def snapshot(self) -> dict[str, str]:
        return dict(self._data)

    def close(self) -> None:
        self._fh.close()
