"""CSV ingestion with fail-closed schema checks.

Tables arrive as the harness wrote them; each figure states the columns
it needs and the loader matches input files to those requirements by
header, so the argument order on the command line does not matter.
"""

from __future__ import annotations

import csv


class SchemaError(ValueError):
    """An input table is missing, empty, or lacks a required column."""


def load_table(path: str) -> list[dict[str, str]]:
    """Rows of a CSV file as string dicts; empty tables are an error."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"no rows in {path}")
    return rows


def require_columns(rows: list[dict], columns: tuple[str, ...],
                    path: str) -> None:
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise SchemaError(f"{path}: missing column {missing[0]!r}")


def match_tables(paths: list[str], wanted: dict[str, tuple[str, ...]]
                 ) -> dict[str, list[dict[str, str]]]:
    """Assign each required table to the input file whose header carries
    its columns. Every requirement must be satisfied by exactly one file;
    leftovers are rejected so a typo in --in fails loudly."""
    loaded = {path: load_table(path) for path in paths}
    out: dict[str, list[dict[str, str]]] = {}
    used: set[str] = set()
    for name, columns in wanted.items():
        hits = [p for p, rows in loaded.items()
                if p not in used and all(c in rows[0] for c in columns)]
        if not hits:
            raise SchemaError(
                f"no input file has the columns {list(columns)} "
                f"needed for the {name} table")
        if len(hits) > 1:
            raise SchemaError(
                f"multiple input files match the {name} table: {hits}")
        out[name] = loaded[hits[0]]
        used.add(hits[0])
    unused = [p for p in paths if p not in used]
    if unused:
        raise SchemaError(f"unused input file {unused[0]}")
    return out
