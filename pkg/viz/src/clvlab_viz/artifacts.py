"""Readers for the pipeline's CSV/JSON artifacts, with column-level checks."""

import csv
import json
from pathlib import Path

import numpy as np

from .jobs import SchemaError


def read_columns(path: Path, required: tuple) -> dict:
    """Headered numeric CSV as {column: array}; NaN for empty cells.

    Raises SchemaError naming the first required column that is absent.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path.name}: file is empty")
    header = [h.strip() for h in rows[0]]
    for col in required:
        if col not in header:
            raise SchemaError(f"{path.name}: missing required column '{col}'")
    data = {h: [] for h in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path.name}: row {lineno} has {len(row)} cells, expected {len(header)}")
        for h, cell in zip(header, row):
            cell = cell.strip()
            try:
                data[h].append(float(cell) if cell else np.nan)
            except ValueError as exc:
                raise SchemaError(f"{path.name}: row {lineno}, column '{h}' is not numeric") from exc
    return {h: np.asarray(v) for h, v in data.items()}


def theta_column(table: dict, path: Path) -> str:
    """Name of the alignment column (theta12 and friends)."""
    for name in table:
        if name.startswith("theta"):
            return name
    raise SchemaError(f"{path.name}: missing required column 'theta12'")


def coordinate_columns(table: dict, path: Path, minimum: int = 1) -> list:
    names = sorted(
        (n for n in table if n.startswith("x") and n[1:].isdigit()),
        key=lambda n: int(n[1:]),
    )
    if len(names) < minimum:
        raise SchemaError(f"{path.name}: missing required column 'x{minimum}'")
    return names


def read_grid(path: Path):
    """Statistic matrix CSV: first column is the row axis, headers 'name=value'.

    Returns (row_label, row_values, col_label, col_values, matrix).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise SchemaError(f"{path.name}: expected a row-axis column and at least one value column")
    header = [h.strip() for h in rows[0]]
    row_label = header[0]
    col_values, col_label = [], None
    for cell in header[1:]:
        name, eq, value = cell.partition("=")
        if not eq:
            raise SchemaError(f"{path.name}: column header '{cell}' is not 'name=value'")
        if col_label is None:
            col_label = name
        elif name != col_label:
            raise SchemaError(f"{path.name}: mixed column axis names '{col_label}' and '{name}'")
        try:
            col_values.append(float(value))
        except ValueError as exc:
            raise SchemaError(f"{path.name}: column header '{cell}' has no numeric value") from exc
    row_values, matrix = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path.name}: row {lineno} has {len(row)} cells, expected {len(header)}")
        try:
            row_values.append(float(row[0]))
            matrix.append([float(c) if c.strip() else np.nan for c in row[1:]])
        except ValueError as exc:
            raise SchemaError(f"{path.name}: row {lineno} is not numeric") from exc
    return row_label, np.asarray(row_values), col_label, np.asarray(col_values), np.asarray(matrix)


def read_knee(path: Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{Path(path).name} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "p_star" not in doc:
        raise SchemaError(f"{Path(path).name}: missing required key 'p_star'")
    return doc


def align_by_time(t_base: np.ndarray, t_other: np.ndarray, tol: float) -> np.ndarray:
    """Indices into t_base matching each t_other entry within tol; -1 if none."""
    idx = np.searchsorted(t_base, t_other)
    idx = np.clip(idx, 0, len(t_base) - 1)
    left = np.clip(idx - 1, 0, len(t_base) - 1)
    use_left = np.abs(t_base[left] - t_other) < np.abs(t_base[idx] - t_other)
    idx = np.where(use_left, left, idx)
    idx[np.abs(t_base[idx] - t_other) > tol] = -1
    return idx
