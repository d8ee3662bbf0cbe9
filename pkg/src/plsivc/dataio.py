"""CSV ingestion for model datasets.

Two entry points: a fixed naming convention (columns ``y``, ``u1..ud``,
``x1..xp``, ``z1..zq``, case-insensitive) for round-tripping datasets,
and an explicit column-role mapping for arbitrary tables.
"""

from __future__ import annotations

import csv
import re

import numpy as np

from .errors import DataError, SchemaError
from .model import Dataset


def _read_table(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty input file") from None
        rows = [row for row in reader if row]
    if not rows:
        raise DataError("no data rows")
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) for r in rows])
        except (ValueError, IndexError) as exc:
            raise DataError(f"non-numeric value in column {name!r}: {exc}") from exc
    return header, cols


def dataset_from_csv(path) -> Dataset:
    """Load a dataset written with the conventional headers."""
    header, cols = _read_table(path)
    lower = {name.lower(): name for name in header}
    if "y" not in lower:
        raise SchemaError("missing column: y")

    def block(prefix):
        pat = re.compile(rf"^{prefix}(\d+)$")
        found = sorted(
            ((int(m.group(1)), lower[name]) for name in lower
             if (m := pat.match(name))),
        )
        return [cols[orig] for _, orig in found]

    u = block("u")
    x = block("x")
    z = block("z")
    if not x:
        raise SchemaError("missing index columns x1..xp")
    if not z:
        raise SchemaError("missing varying-coefficient columns z1..zq")
    n = cols[lower["y"]].size
    u_arr = np.column_stack(u) if u else np.empty((n, 0))
    return Dataset(cols[lower["y"]], u_arr, np.column_stack(x), np.column_stack(z))


def dataset_to_csv(data: Dataset, path) -> str:
    """Write a dataset with the conventional headers at full precision."""
    header = (["y"] + [f"u{j + 1}" for j in range(data.d)]
              + [f"x{j + 1}" for j in range(data.p)]
              + [f"z{j + 1}" for j in range(data.q)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = ([f"{data.y[i]:.17g}"]
                   + [f"{v:.17g}" for v in data.u[i]]
                   + [f"{v:.17g}" for v in data.x[i]]
                   + [f"{v:.17g}" for v in data.z[i]])
            writer.writerow(row)
    return path


def dataset_from_roles(path, response: str, index_cols, varying_cols,
                       linear_cols=(), add_z_intercept: bool = False):
    """Load a dataset by naming the role of each column explicitly."""
    header, cols = _read_table(path)
    lower = {name.lower(): name for name in header}

    def pick(name):
        key = name.strip().lower()
        if key not in lower:
            raise SchemaError(f"missing column: {name}")
        return cols[lower[key]]

    y = pick(response)
    x = np.column_stack([pick(c) for c in index_cols])
    z_parts = [pick(c) for c in varying_cols]
    if add_z_intercept:
        z_parts = [np.ones(y.size)] + z_parts
    if not z_parts:
        raise SchemaError("varying-coefficient block is empty")
    z = np.column_stack(z_parts)
    u = (np.column_stack([pick(c) for c in linear_cols])
         if linear_cols else np.empty((y.size, 0)))
    names = {
        "response": response,
        "linear": list(linear_cols),
        "index": list(index_cols),
        "varying": (["intercept"] if add_z_intercept else []) + list(varying_cols),
    }
    return Dataset(y, u, x, z), names
