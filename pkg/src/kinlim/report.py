"""Report emission and comparison.

CSV tables carry a header row, comma separators, '.' decimal points and LF
line endings; floats are written with shortest-roundtrip repr so reruns are
byte-identical.  JSON summaries render numbers at 15 significant digits for
cross-platform byte stability.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .diagnostics import DiagnosticsRecord
from .errors import SchemaMismatchError

DIAGNOSTICS_COLUMNS = (
    "time",
    "mass",
    "px",
    "py",
    "pz",
    "energy",
    "h",
    "h_bias",
    "h_se",
    "chaos_metric",
    "chaos_floor",
    "maxwellian_l1",
    "n_events",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_diagnostics_csv(path, records: list[DiagnosticsRecord]) -> None:
    rows = [
        (
            r.time,
            r.mass,
            r.momentum[0],
            r.momentum[1],
            r.momentum[2],
            r.energy,
            r.h_value,
            r.h_bias,
            r.h_se,
            r.chaos_metric,
            r.chaos_floor,
            r.maxwellian_l1,
            r.n_events,
        )
        for r in records
    ]
    write_csv(path, DIAGNOSTICS_COLUMNS, rows)


def write_grid_csv(path, grid) -> None:
    """Velocity-grid snapshot with schema vx,vy,vz,f (node order: x-major)."""
    nodes = grid.nodes().reshape(-1, 3)
    vals = grid.values.reshape(-1)
    rows = ((nodes[k, 0], nodes[k, 1], nodes[k, 2], vals[k]) for k in range(len(vals)))
    write_csv(path, ("vx", "vy", "vz", "f"), rows)


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.15g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def write_summary(path, summary: dict) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(_round_floats(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class ColumnComparison:
    column: str
    max_deviation: float
    mean_deviation: float
    passed: bool


@dataclass
class CompareReport:
    columns: list[ColumnComparison]
    n_rows: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.columns)

    def as_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "columns": {
                c.column: {
                    "max_deviation": c.max_deviation,
                    "mean_deviation": c.mean_deviation,
                    "passed": c.passed,
                }
                for c in self.columns
            },
        }


def _read_csv(path):
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def compare_report(
    path_a,
    path_b,
    columns: list[str] | None = None,
    tolerance: float = 0.0,
) -> CompareReport:
    """Per-column max/mean absolute deviation between two CSV series.

    Requires matching schemas and row counts; non-numeric cells must be equal.
    """
    header_a, rows_a = _read_csv(path_a)
    header_b, rows_b = _read_csv(path_b)
    if header_a != header_b:
        only_a = [c for c in header_a if c not in header_b]
        only_b = [c for c in header_b if c not in header_a]
        raise SchemaMismatchError(
            f"schemas differ: only in A {only_a}, only in B {only_b}"
        )
    if len(rows_a) != len(rows_b):
        raise SchemaMismatchError(f"row counts differ: {len(rows_a)} vs {len(rows_b)}")
    use = columns if columns is not None else header_a
    missing = [c for c in use if c not in header_a]
    if missing:
        raise SchemaMismatchError(f"requested columns absent: {missing}")

    comparisons = []
    for col in use:
        idx = header_a.index(col)
        devs = []
        for ra, rb in zip(rows_a, rows_b):
            sa, sb = ra[idx], rb[idx]
            if sa == "" and sb == "":
                continue
            try:
                devs.append(abs(float(sa) - float(sb)))
            except ValueError:
                devs.append(0.0 if sa == sb else math.inf)
        mx = max(devs) if devs else 0.0
        mean = sum(devs) / len(devs) if devs else 0.0
        comparisons.append(ColumnComparison(col, mx, mean, mx <= tolerance))
    return CompareReport(comparisons, len(rows_a), tolerance)
