"""CSV / JSON emission and CSV ingestion for the command-line pipelines.

Every table carries a ``# config-hash:`` comment line; floats are written
with ``repr`` so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def table_text(columns, rows, config_hash, fmt="csv", comments=()):
    if fmt == "json":
        return dumps_json({"config_hash": config_hash, "columns": list(columns),
                           "rows": [[_jsonable(v) for v in r] for r in rows], "notes": list(comments)})
    buf = io.StringIO()
    buf.write(f"# config-hash: {config_hash}\n")
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


class OutputSet:
    """Collects output documents and writes them in one go once computing has succeeded."""

    def __init__(self, out_dir, config_hash, fmt="csv"):
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash
        self.fmt = fmt
        self.files = {}

    def table(self, stem, columns, rows, comments=()):
        ext = ".json" if self.fmt == "json" else ".csv"
        self.files[stem + ext] = table_text(columns, rows, self.config_hash, self.fmt, comments)

    def document(self, name, obj):
        obj = dict(obj)
        obj.setdefault("config_hash", self.config_hash)
        self.files[name] = dumps_json(obj)

    def write(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for name in sorted(self.files):
            (self.out_dir / name).write_text(self.files[name], encoding="utf-8")
        return sorted(self.files)


def read_table(path, required):
    """Read a headered CSV (``#`` lines skipped) into float columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValueError(f"{path}: empty table") from None
    missing = [c for c in required if c not in header]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    cols = {c: [] for c in header}
    for n, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {n} has {len(row)} fields, expected {len(header)}")
        for c, v in zip(header, row):
            try:
                cols[c].append(float(v))
            except ValueError:
                raise ValueError(f"{path}: row {n} column {c}: not a number: {v!r}") from None
    return {c: np.array(v) for c, v in cols.items()}
