"""CSV reading and writing for the CLI.

All files are plain comma-separated text with a mandatory header row and
a leading integer step column ``t``. Floats are written with ``repr``,
i.e. shortest round-trip form (at least 15 significant digits and byte
stable across reruns), so outputs can be compared at file level.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import IngestionError


def format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_rows(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])


def indexed_header(prefix: str, width: int) -> list[str]:
    return ["t"] + [f"{prefix}_{j + 1}" for j in range(width)]


def read_indexed(path, prefix: str, start_t: int = 1) -> np.ndarray:
    """Read a ``t, <prefix>_1..<prefix>_k`` file, validating header and rows.

    The t column must count consecutively from ``start_t``. Returns the
    value block as an (N, k) float array. Raises IngestionError with the
    offending 1-based file row on any malformed content.
    """
    path = Path(path)
    try:
        handle = open(path, newline="")
    except FileNotFoundError:
        raise IngestionError(f"input file not found: {path}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: file is empty, expected a header row", row=1) from None
        header = [cell.strip() for cell in header]
        if not header or header[0] != "t" or len(header) < 2:
            raise IngestionError(
                f"{path}: header must be t,{prefix}_1,... got {','.join(header)}", row=1
            )
        width = len(header) - 1
        expected = indexed_header(prefix, width)
        if header != expected:
            raise IngestionError(
                f"{path}: header must be {','.join(expected)}, got {','.join(header)}", row=1
            )
        values = []
        t_expected = start_t
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise IngestionError(
                    f"{path}: row has {len(row)} cells, expected {width + 1}", row=line_no
                )
            try:
                t_val = int(row[0])
            except ValueError:
                raise IngestionError(
                    f"{path}: step index {row[0]!r} is not an integer", row=line_no
                ) from None
            if t_val != t_expected:
                raise IngestionError(
                    f"{path}: step index {t_val} out of order, expected {t_expected}", row=line_no
                )
            try:
                values.append([float(cell) for cell in row[1:]])
            except ValueError:
                raise IngestionError(f"{path}: non-numeric cell in data row", row=line_no) from None
            t_expected += 1
        if not values:
            raise IngestionError(f"{path}: no data rows", row=2)
    return np.asarray(values, dtype=float)
