"""Per-iteration run records and their CSV / JSON-lines serialization."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

BASE_FIELDS = ("iter", "gap", "min_gap_so_far", "v_min", "v_mean", "v_max",
               "improvement_violations", "wall_ms")
EXTRA_KEYS = ("batch_size", "c_min", "c_max", "c_violations", "max_v_deficit",
              "td_residual", "skipped")
HEADER = BASE_FIELDS + EXTRA_KEYS
_INT_FIELDS = {"iter", "improvement_violations", "wall_ms"}


@dataclass
class RunMetrics:
    iter: int
    gap: float
    min_gap_so_far: float
    v_min: float
    v_mean: float
    v_max: float
    improvement_violations: int = 0
    wall_ms: int = 0
    extras: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in BASE_FIELDS}
        for k in EXTRA_KEYS:
            if k in self.extras:
                out[k] = self.extras[k]
        return out


def fmt_float(x) -> str:
    return format(float(x), ".17g")


def _cell(key, value) -> str:
    if value is None:
        return ""
    if key in _INT_FIELDS:
        return str(int(value))
    return fmt_float(value)


def write_metrics(stream, records, fmt: str = "csv", meta: dict | None = None) -> None:
    """One record per line; floats carry 17 significant digits.

    ``meta`` (the run configuration) goes into a leading ``#`` comment line
    for CSV and a leading ``{"meta": ...}`` object for JSON lines.
    """
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown metrics format {fmt!r}")
    if fmt == "csv":
        if meta is not None:
            stream.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(HEADER)
        for rec in records:
            row = rec.row()
            writer.writerow([_cell(k, row.get(k)) for k in HEADER])
        return
    if meta is not None:
        stream.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
    for rec in records:
        parts = [f'"{k}": {_cell(k, v)}' for k, v in rec.row().items()]
        stream.write("{" + ", ".join(parts) + "}\n")


def _from_row(row: dict) -> RunMetrics:
    base = {}
    for k in BASE_FIELDS:
        v = row[k]
        base[k] = int(v) if k in _INT_FIELDS else float(v)
    extras = {k: float(row[k]) for k in EXTRA_KEYS if row.get(k) not in (None, "")}
    return RunMetrics(**base, extras=extras)


def read_metrics(stream, fmt: str = "csv"):
    """Parse what :func:`write_metrics` wrote; returns ``(records, meta)``."""
    text = stream.read() if hasattr(stream, "read") else str(stream)
    lines = text.splitlines()
    meta = None
    if fmt == "csv":
        if lines and lines[0].startswith("# "):
            meta = json.loads(lines[0][2:])
            lines = lines[1:]
        reader = csv.DictReader(io.StringIO("\n".join(lines)))
        return [_from_row(r) for r in reader], meta
    records = []
    for line in lines:
        obj = json.loads(line)
        if "meta" in obj and len(obj) == 1:
            meta = obj["meta"]
        else:
            records.append(_from_row(obj))
    return records, meta
