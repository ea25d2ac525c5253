"""Static run plots rendered from telemetry CSVs (headless Agg backend)."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from ..powergrid.wscc9 import LOAD_BUSES  # noqa: E402

F_NOMINAL_HZ = 60.0


def read_telemetry(path: str | os.PathLike) -> dict[str, list[float]]:
    """Telemetry CSV as columns; trip_flags kept as strings."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list] = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name, cell in row.items():
                cols[name].append(cell if name == "trip_flags"
                                  else float(cell))
    return cols


def plot_frequency(telemetry_csv: str | os.PathLike,
                   out_png: str | os.PathLike,
                   over_hz: float = 61.5, under_hz: float = 58.5) -> str:
    """COI frequency against time with both relay thresholds marked."""
    cols = read_telemetry(telemetry_csv)
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.plot(cols["t_s"], cols["f_coi_hz"], lw=1.0, color="tab:blue",
            label="COI frequency")
    ax.axhline(F_NOMINAL_HZ, color="gray", lw=0.8, ls=":")
    ax.axhline(over_hz, color="tab:red", lw=0.9, ls="--",
               label=f"over-frequency trip ({over_hz:g} Hz)")
    ax.axhline(under_hz, color="tab:orange", lw=0.9, ls="--",
               label=f"under-frequency trip ({under_hz:g} Hz)")
    trip_ts = [t for t, flags in zip(cols["t_s"], cols["trip_flags"])
               if flags]
    if trip_ts:
        ax.axvline(trip_ts[0], color="black", lw=0.8, ls="-.",
                   label="first trip")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("frequency [Hz]")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return os.fspath(out_png)


def plot_ev_load(telemetry_csv: str | os.PathLike,
                 out_png: str | os.PathLike,
                 reference_mw: float | None = None) -> str:
    """Total and per-bus EV charging power against time."""
    cols = read_telemetry(telemetry_csv)
    t = cols["t_s"]
    per_bus = {b: cols[f"ev_bus{b}_mw"] for b in LOAD_BUSES}
    total = [sum(vals) for vals in zip(*per_bus.values())]
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for b, series in per_bus.items():
        ax.plot(t, series, lw=0.8, alpha=0.7, label=f"bus {b}")
    ax.plot(t, total, lw=1.4, color="black", label="total")
    if total:
        mean = sum(total) / len(total)
        ax.axhline(mean, color="gray", lw=0.8, ls=":",
                   label=f"average ({mean:.1f} MW)")
    if reference_mw is not None:
        ax.axhline(reference_mw, color="tab:red", lw=0.9, ls="--",
                   label=f"attack magnitude ({reference_mw:g} MW)")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("EV charging power [MW]")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return os.fspath(out_png)
