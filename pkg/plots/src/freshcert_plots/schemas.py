"""Input schemas for the renderers.

The plotting package never recomputes certificate quantities: it
validates and re-emits exactly the columns and fields the CLI wrote.
"""

from __future__ import annotations

import csv
import json

CASE_COLUMNS = ["case", "regime", "route", "b_sharp", "b_rho", "b_cs",
                "b_deg", "b_bd", "b_anova", "b_bf", "edges", "test_edges",
                "flipped", "log10_ratio"]
BUDGET_COLUMNS = ["b_cs", "b_deg", "b_bd", "b_anova", "b_bf"]
SWEEP_REQUIRED = ["axis", "value", "b_sharp", "route"]
PROBE_COLUMNS = ["width", "trial", "max_error"]


class SchemaError(ValueError):
    """Raised when an input file does not match its documented schema."""


def _read_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty CSV")
        return list(reader), reader.fieldnames


def load_case_table(path: str) -> list[dict]:
    rows, fields = _read_csv(path)
    missing = [c for c in CASE_COLUMNS if c not in fields]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    out = []
    for row in rows:
        parsed = dict(row)
        for col in ["b_sharp", "b_rho", "log10_ratio"] + BUDGET_COLUMNS:
            parsed[col] = float(row[col])
        for col in ("edges", "test_edges"):
            parsed[col] = int(row[col])
        out.append(parsed)
    return out


def dump_case_table(rows: list[dict], path: str) -> None:
    """Round-trip emitter used by the schema tests."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CASE_COLUMNS,
                                extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in CASE_COLUMNS})


def load_graph(path: str) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("name", "nodes", "edges"):
        if key not in payload:
            raise SchemaError(f"{path}: missing key {key!r}")
    for node in payload["nodes"]:
        if not {"id", "color", "kind"} <= set(node):
            raise SchemaError(f"{path}: malformed node {node}")
    for edge in payload["edges"]:
        if not {"source", "target", "weight"} <= set(edge):
            raise SchemaError(f"{path}: malformed edge {edge}")
    return payload


def dump_graph(payload: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_sweep(path: str) -> list[dict]:
    rows, fields = _read_csv(path)
    missing = [c for c in SWEEP_REQUIRED if c not in fields]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    for row in rows:
        row["value"] = float(row["value"])
        row["b_sharp"] = float(row["b_sharp"])
    return rows


def load_probe(path: str) -> list[dict]:
    rows, fields = _read_csv(path)
    missing = [c for c in PROBE_COLUMNS if c not in fields]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    for row in rows:
        row["width"] = int(row["width"])
        row["max_error"] = float(row["max_error"])
    return rows
