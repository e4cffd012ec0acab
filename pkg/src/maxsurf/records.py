"""Plain-text serialization helpers shared by the modules.

Every float is written with 17 significant digits so that files round-trip
bit for bit and repeated runs are byte identical.
"""

from __future__ import annotations

import numpy as np

FLOAT_FMT = "%.17g"


def fmt(value) -> str:
    """Format a scalar for an output file."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return FLOAT_FMT % float(value)


def write_record(path, items) -> None:
    """Write a flat key=value record, one pair per line, in the given order."""
    lines = [f"{key}={fmt(value)}" for key, value in items]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def record_lines(items) -> list[str]:
    return [f"{key}={fmt(value)}" for key, value in items]


def read_record(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key] = value
    return out


def write_csv(path, header: str, columns) -> None:
    """Write columns (sequence of 1d arrays, parallel) under a fixed header."""
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0]) if cols else 0
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(n):
            fh.write(",".join(fmt(c[i]) for c in cols) + "\n")


def read_csv(path, header: str):
    """Read a CSV written by write_csv; checks the header verbatim."""
    with open(path) as fh:
        first = fh.readline().strip()
        if first != header:
            raise ValueError(f"expected header '{header}', found '{first}'")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    ncol = len(header.split(","))
    data = np.empty((len(rows), ncol))
    for i, row in enumerate(rows):
        if len(row) != ncol:
            raise ValueError(f"row {i} has {len(row)} fields, expected {ncol}")
        data[i] = [float(x) for x in row]
    return data
