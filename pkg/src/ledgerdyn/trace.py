"""Per-step trace records and their CSV / JSON-lines encodings."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence


@dataclass(frozen=True)
class TraceRecord:
    k: int
    y: int
    n_k: int
    tx_count: int
    values: dict = field(default_factory=dict)  # check label -> V(x(k))
    agreement: float | None = None


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def header(check_names: Sequence[str]) -> list[str]:
    return ["k", "y", "n_k", "tx_count", *check_names, "agreement"]


def _row(r: TraceRecord, check_names):
    return [r.k, r.y, r.n_k, r.tx_count, *(r.values.get(c) for c in check_names), r.agreement]


def emit_trace(records: Iterable[TraceRecord], fmt: str, dest: IO[str], check_names: Sequence[str] = ()) -> None:
    """Write records as ``csv`` (header always present) or ``jsonl`` (one object per record)."""
    cols = header(check_names)
    if fmt == "csv":
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow([_cell(v) for v in _row(r, check_names)])
    elif fmt == "jsonl":
        for r in records:
            dest.write(json.dumps(dict(zip(cols, _row(r, check_names)))) + "\n")
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def render_trace(records: Sequence[TraceRecord], fmt: str, check_names: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    emit_trace(records, fmt, buf, check_names)
    return buf.getvalue()
