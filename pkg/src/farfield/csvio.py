"""CSV conventions shared by every emitted artifact.

RFC-4180-style files with a mandatory header row.  The header carries a
trailing column whose *name* is the schema version tag (data cells in
that column stay empty), so each file declares its schema without
breaking the documented column layout.  Floats are written with the
shortest round-trip representation, which is what makes reruns of the
same experiment byte-identical.
"""

from __future__ import annotations

import csv
from contextlib import contextmanager
from pathlib import Path

SCHEMA_FIELD = "field-v1"
SCHEMA_REPORT = "solve-report-v1"
SCHEMA_FIT = "expansion-fit-v1"
SCHEMA_FIT_SHELLS = "fit-shells-v1"
SCHEMA_RECOVERY = "recovery-v1"
SCHEMA_ORDERS = "order-table-v1"
SCHEMA_VERIFY = "verify-v1"
SCHEMA_COEFFS = "coeffs-v1"


def format_float(v) -> str:
    return repr(float(v))


@contextmanager
def open_csv_writer(path_or_file, columns, schema: str):
    """Yields a row-writing callable; appends the schema tag column."""
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh)
        w.writerow(list(columns) + [schema])

        def write_row(row):
            w.writerow(list(row) + [""])

        yield write_row
    finally:
        if own:
            fh.close()


def write_rows(path, columns, rows, schema: str) -> None:
    with open_csv_writer(path, columns, schema) as writer:
        for row in rows:
            writer(row)


def read_rows(path):
    """Returns (columns, schema, rows) with the trailing tag stripped."""
    with open(path, "r", newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    return header[:-1], header[-1], [r[: len(header) - 1] for r in rows[1:]]
