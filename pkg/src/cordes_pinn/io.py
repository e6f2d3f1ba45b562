"""Frozen output schemas: history CSV, summary JSON, field dumps.

Column orders are fixed and documented here; the figures package consumes
these files and nothing else. Missing values (sigma proxy at epoch zero,
errors when no exact solution exists) are written as empty cells. Floats are
written with repr, which round-trips exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .training.loop import HISTORY_COLUMNS, HistoryRow

__all__ = [
    "write_history_csv",
    "read_history_csv",
    "write_summary_json",
    "write_field_dump",
    "write_landscape_csv",
    "write_transport_grid_csv",
    "write_cordes_report_json",
]

NONLINEAR_COLUMNS = HISTORY_COLUMNS + ("phase", "outer_k")
FIELD_DUMP_BASE = ("exact", "predicted", "abs_error")
LANDSCAPE_COLUMNS = ("a", "b", "loss")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and not np.isfinite(value):
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def write_history_csv(path, history: list[HistoryRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labeled = any(row.phase is not None for row in history)
    columns = NONLINEAR_COLUMNS if labeled else HISTORY_COLUMNS
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in history:
            rec = row.as_record()
            writer.writerow([_fmt(rec[c]) for c in columns])
    return path


def read_history_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            parsed = {}
            for key, val in rec.items():
                if val == "" or val is None:
                    parsed[key] = None
                elif key in ("epoch", "outer_k"):
                    parsed[key] = int(val)
                elif key == "phase":
                    parsed[key] = val
                else:
                    parsed[key] = float(val)
            rows.append(parsed)
    return rows


def write_summary_json(path, summary: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_field_dump(path, grid: np.ndarray, predicted: np.ndarray,
                     exact: np.ndarray | None) -> Path:
    """Columns: x1..xd, exact, predicted, abs_error (exact empty if unknown)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = grid.shape[1]
    columns = tuple(f"x{k + 1}" for k in range(d)) + FIELD_DUMP_BASE
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for i in range(grid.shape[0]):
            coords = [repr(float(v)) for v in grid[i]]
            if exact is None:
                writer.writerow(coords + ["", repr(float(predicted[i])), ""])
            else:
                err = abs(float(predicted[i]) - float(exact[i]))
                writer.writerow(
                    coords
                    + [repr(float(exact[i])), repr(float(predicted[i])), repr(err)]
                )
    return path


def write_landscape_csv(path, probe) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LANDSCAPE_COLUMNS)
        for rec in probe.to_records():
            writer.writerow([repr(rec["a"]), repr(rec["b"]), repr(rec["loss"])])
    return path


def write_transport_grid_csv(path, source_points: np.ndarray,
                             mapped_points: np.ndarray) -> Path:
    """Columns: x1, x2, t1, t2 (source grid node and its image)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("x1", "x2", "t1", "t2"))
        for src, dst in zip(source_points, mapped_points):
            writer.writerow([repr(float(v)) for v in (*src, *dst)])
    return path


def write_cordes_report_json(path, report) -> Path:
    return write_summary_json(path, report.to_dict())
