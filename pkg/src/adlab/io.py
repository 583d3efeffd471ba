"""CSV/JSON writers with a fixed numeric format (17 significant digits, Unix newlines)."""

import json
import math

import numpy as np


def fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path, header, columns):
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    n = cols[0].size if cols else 0
    if any(c.size != n for c in cols):
        raise ValueError("CSV columns have unequal lengths")
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(fmt(c[i]) for c in cols) + "\n")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return header, {name: data[:, i] for i, name in enumerate(header)}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps(obj))
