"""CSV and Markdown reports.

CSV column order is fixed by :data:`COLUMNS` (the :class:`ReportRow` field
order). ``wall_time`` is the only wall-clock column; every other column is
a deterministic function of the experiment settings and seed.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import astuple, fields
from pathlib import Path

from .experiment import ReportRow

COLUMNS = [f.name for f in fields(ReportRow)]
WALL_COLUMNS = [f.name for f in fields(ReportRow) if f.metadata.get("wall")]
_TYPES = {f.name: f.type for f in fields(ReportRow)}
_CAST = {"int": int, "float": float, "str": str}


def emit_report(rows, path, markdown=None):
    """Write ``rows`` as CSV (header only when empty) and optionally a Markdown pivot."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in astuple(row)])
    if markdown:
        Path(markdown).write_text(markdown_table(rows))


def read_report(path) -> list[ReportRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [ReportRow(**{k: _CAST[_TYPES[k]](v) for k, v in rec.items()}) for rec in reader]


def markdown_table(rows) -> str:
    """Compression ratios laid out as quant-only / FixedLen / Huffman columns.

    Rows are grouped by data, quantizer, ranks and size; a pinned-codec run
    fills its own column and any run fills the quant-only column.
    """
    groups = defaultdict(dict)
    for r in rows:
        key = (r.dist, r.quant, r.ranks, r.size_bytes)
        g = groups[key]
        g.setdefault("quant", r.cr_quant)
        if r.codec in ("fixed", "huffman", "auto"):
            g[r.codec] = r.cr_final
    lines = ["| data | quantizer | ranks | size (bytes) | CR quant-only | CR FixedLen | CR Huffman |",
             "|---|---|---|---|---|---|---|"]
    for (dist, quant, ranks, size), g in sorted(groups.items()):
        cells = [_fmt(g.get(k)) for k in ("quant", "fixed", "huffman")]
        lines.append(f"| {dist} | {quant} | {ranks} | {size} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _fmt(v):
    return "-" if v is None else f"{v:.2f}"
