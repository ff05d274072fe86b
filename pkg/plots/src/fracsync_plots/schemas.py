"""Validation of the simulation package's published file formats.

Violations raise SchemaError naming the offending field or column; the CLI
maps that to a nonzero exit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    pass


def load_csv(path: Path, required_columns: list[str]) -> dict[str, np.ndarray]:
    if not path.exists():
        raise SchemaError(f"missing input file: {path}")
    lines = path.read_text().strip().splitlines()
    if not lines:
        raise SchemaError(f"{path.name}: empty file")
    header = lines[0].split(",")
    for col in required_columns:
        if col not in header:
            raise SchemaError(f"{path.name}: missing required column {col!r}")
    columns: dict[str, list[float]] = {name: [] for name in header}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise SchemaError(f"{path.name}: row {lineno} has {len(parts)} fields, "
                              f"expected {len(header)}")
        for name, raw in zip(header, parts):
            try:
                columns[name].append(float(raw))
            except ValueError:
                raise SchemaError(
                    f"{path.name}: row {lineno}, column {name!r}: "
                    f"not a number: {raw!r}"
                ) from None
    return {name: np.asarray(vals) for name, vals in columns.items()}


def load_report(path: Path, required_fields: list[str]) -> dict:
    report_path = path / "report.json" if path.is_dir() else path
    if not report_path.exists():
        raise SchemaError(f"missing input file: {report_path}")
    try:
        report = json.loads(report_path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{report_path.name}: invalid JSON ({exc})") from None
    for field in required_fields:
        node = report
        for part in field.split("."):
            if not isinstance(node, dict) or part not in node:
                raise SchemaError(f"{report_path.name}: missing required field {field!r}")
            node = node[part]
    return report
