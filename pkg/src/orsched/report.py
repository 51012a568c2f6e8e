"""Report rendering: Gantt and convergence figures plus CSV/JSONL writers.

Figures are written as SVG with a fixed hash salt and no embedded date,
so re-running a command from its manifest reproduces identical bytes.
"""

from __future__ import annotations

import csv
import json

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "orsched"

import matplotlib.pyplot as plt  # noqa: E402

from .domain import HorizonParams, OperatingRoom, Schedule  # noqa: E402

METRICS_COLUMNS = ("strategy", "utilisation", "overtime", "ne_time_to_surgery",
                   "patients_treated", "runtime_s", "avg_updates", "update_time_s")

SURGERY_COLOR = "#3a4a5d"
BUFFER_COLOR = "#b9c4d0"
WINDOW_COLOR = "#ededed"


def save_svg(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def gantt_figure(schedule: Schedule, rooms: list[OperatingRoom],
                 horizon: HorizonParams, title: str = ""):
    """One lane per room: dark surgery blocks with light setup/cleanup
    flanks, opening window shaded."""
    rooms = sorted(rooms, key=lambda r: r.id)
    lane = {r.id: i for i, r in enumerate(rooms)}
    fig, ax = plt.subplots(figsize=(11, 0.38 * max(len(rooms), 4) + 1.2))
    ax.axvspan(0.0, horizon.open_hours, color=WINDOW_COLOR, zorder=0)

    label_ok = len(schedule.placements) <= 60
    for pl in sorted(schedule.placements.values(), key=lambda p: (p.room, p.start)):
        y = lane.get(pl.room)
        if y is None:
            continue
        ax.broken_barh([(pl.occupied_from, pl.setup)], (y + 0.12, 0.76),
                       color=BUFFER_COLOR, zorder=2)
        ax.broken_barh([(pl.start, pl.end - pl.start)], (y + 0.12, 0.76),
                       color=SURGERY_COLOR, zorder=3)
        ax.broken_barh([(pl.end, pl.cleanup)], (y + 0.12, 0.76),
                       color=BUFFER_COLOR, zorder=2)
        if label_ok:
            ax.text(pl.start + (pl.end - pl.start) / 2, y + 0.5, str(pl.patient),
                    ha="center", va="center", fontsize=6, color="white", zorder=4)

    ax.set_yticks([lane[r.id] + 0.5 for r in rooms])
    ax.set_yticklabels([f"room {r.id}" + ("" if r.working else " (down)") for r in rooms],
                       fontsize=7)
    ax.set_ylim(0, len(rooms))
    ax.invert_yaxis()
    ax.set_xlabel("hours since 08:00")
    if title:
        ax.set_title(title, fontsize=10)
    end = max((pl.occupied_until for pl in schedule.placements.values()),
              default=horizon.open_hours)
    ax.set_xlim(min(0.0, *([pl.occupied_from for pl in schedule.placements.values()] or [0.0])) - 0.5,
                max(end, horizon.open_hours) + 0.5)
    ax.grid(axis="x", linewidth=0.3, alpha=0.6)
    fig.tight_layout()
    return fig


def convergence_figure(trace_rows: list[dict], title: str = "tuning convergence"):
    """Candidate mean utilisation per iteration with the accepted-best line."""
    iterations = [r["iteration"] for r in trace_rows]
    means = [r["mean_utilisation"] for r in trace_rows]
    best = [r["best_utilisation"] for r in trace_rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(iterations, means, ".", color="#7d93ab", markersize=4, label="candidate mean")
    ax.step(iterations, best, where="post", color="#3a4a5d", label="accepted best")
    ax.set_xlabel("iteration")
    ax.set_ylabel("weekly utilisation (h)")
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def write_metrics_csv(path, rows: list[dict]) -> None:
    """Summary CSV, one row per strategy, fixed column order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt_cell(row.get(k)) for k in METRICS_COLUMNS})


def write_replications_csv(path, rows: list[dict]) -> None:
    cols = ("replication", "utilisation", "overtime", "ne_time_to_surgery",
            "patients_treated", "updates", "runtime_s", "update_time_s")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt_cell(row.get(k)) for k in cols})


def write_trace_jsonl(path, trace: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in trace:
            fh.write(json.dumps(entry, sort_keys=True))
            fh.write("\n")


def write_tuning_csv(path, trace_rows: list[dict]) -> None:
    cols = ("iteration", "disruption", "mean_utilisation", "accepted", "best_utilisation")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in trace_rows:
            writer.writerow({k: _fmt_cell(row.get(k)) for k in cols})


def _fmt_cell(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    return value
