"""CSV and JSON emission of result rows."""

from __future__ import annotations

import csv
import json
import math
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str) and not isinstance(v, Enum):
        return str(v)
    if isinstance(v, Enum):
        return str(v.value)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) or hasattr(v, "dtype"):
        x = float(v)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(v)


def emit_csv(rows: Iterable[Mapping], schema: Sequence[str], path) -> Path:
    """Write rows with a fixed header; floats get 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema)
        for row in rows:
            extra = set(row) - set(schema)
            if extra:
                raise KeyError(f"row has columns outside the schema: {sorted(extra)}")
            writer.writerow([format_value(row.get(col)) for col in schema])
    return path


def _json_value(v):
    if isinstance(v, Enum):
        return v.value
    if v is None or isinstance(v, bool):
        return v
    if isinstance(v, str):
        return str(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    x = float(v)
    return x if math.isfinite(x) else format_value(x)


def emit_json(rows: Iterable[Mapping], schema: Sequence[str], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = [{col: _json_value(row.get(col)) for col in schema} for row in rows]
    with open(path, "w", newline="") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")
    return path


def read_csv(path) -> list[dict]:
    """Parse an emitted file back; numeric fields become floats."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
            out.append(parsed)
    return out
