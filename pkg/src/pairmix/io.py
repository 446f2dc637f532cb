"""File ingestion and emission: CSV datasets, relation files, result CSVs.

All indices in files are 0-based.  Writers go through a temp-file +
atomic-rename path so malformed runs never leave partial outputs, and
floats are rendered with ``repr`` so identical inputs produce byte-identical
files.
"""

from __future__ import annotations

import csv
import io as _io
import os
import tempfile

import numpy as np

from .errors import (
    NonNumericFeatureError,
    ParseError,
    RaggedRowsError,
)
from .types import Dataset, RelationSet, validate_relations


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and atomic rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(text.encode("utf-8"))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_float(cell: str, line_no: int, col: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise NonNumericFeatureError(
            f"line {line_no}, column {col}: {cell!r} is not numeric"
        ) from None


def _parse_label(cell: str, line_no: int, col: int) -> int:
    value = _parse_float(cell, line_no, col)
    if value != int(value):
        raise ParseError(
            f"line {line_no}, column {col}: label {cell!r} is not an integer"
        )
    return int(value)


def load_csv(path, label_column=None) -> Dataset:
    """Parse a rectangular numeric CSV, optionally extracting a label column.

    ``label_column`` may be a 0-based column index or a header name (the
    latter requires a header row).  A header is detected when any cell of
    the first row fails to parse as a number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh))]
    rows = [(no, row) for no, row in rows if row and any(c.strip() for c in row)]
    if not rows:
        raise ParseError(f"{path}: no data rows")

    width = len(rows[0][1])
    for no, row in rows:
        if len(row) != width:
            raise RaggedRowsError(
                f"line {no}: expected {width} columns, found {len(row)}"
            )

    header: list[str] | None = None
    first = rows[0][1]
    numeric_first = True
    for cell in first:
        try:
            float(cell)
        except ValueError:
            numeric_first = False
            break
    if not numeric_first:
        header = [c.strip() for c in first]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: header but no data rows")

    label_idx: int | None = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.isdigit():
            if header is None:
                raise ParseError(
                    f"label column {label_column!r} given but the file has no header"
                )
            if label_column not in header:
                raise ParseError(
                    f"label column {label_column!r} not in header {header}"
                )
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column)
            if not 0 <= label_idx < width:
                raise ParseError(
                    f"label column index {label_idx} outside [0, {width})"
                )

    feature_cols = [c for c in range(width) if c != label_idx]
    if not feature_cols:
        raise ParseError("no feature columns remain after removing the label column")
    points = np.empty((len(rows), len(feature_cols)))
    labels = np.empty(len(rows), dtype=np.int64) if label_idx is not None else None
    for r, (no, row) in enumerate(rows):
        for c_out, c_in in enumerate(feature_cols):
            points[r, c_out] = _parse_float(row[c_in].strip(), no, c_in)
        if labels is not None:
            labels[r] = _parse_label(row[label_idx].strip(), no, label_idx)
    return Dataset(points=points, labels=labels)


def save_dataset_csv(dataset: Dataset, path, label_name: str = "label") -> None:
    """Write a dataset as CSV with an ``x0..x{d-1}`` header (+ label column)."""
    buf = _io.StringIO()
    cols = [f"x{i}" for i in range(dataset.dim)]
    if dataset.labels is not None:
        cols.append(label_name)
    buf.write(",".join(cols) + "\n")
    for r in range(dataset.n):
        cells = [repr(float(v)) for v in dataset.points[r]]
        if dataset.labels is not None:
            cells.append(str(int(dataset.labels[r])))
        buf.write(",".join(cells) + "\n")
    atomic_write_text(path, buf.getvalue())


def load_relations(path) -> RelationSet:
    """Parse a relation file: one ``ml,i,j`` or ``cl,a,b`` per line.

    Indices are 0-based; blank lines and lines starting with ``#`` are
    ignored.  The result is canonicalized via :func:`validate_relations`
    (self-pairs, conflicts, and duplicates rejected/collapsed here; bounds
    against a dataset are re-checked by the consumer).
    """
    must: list[tuple[int, int]] = []
    cannot: list[tuple[int, int]] = []
    max_index = 0
    with open(path, "r", encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ParseError(
                    f"line {no}: expected 'ml,i,j' or 'cl,a,b', got {line!r}"
                )
            kind, a_txt, b_txt = parts
            if kind not in ("ml", "cl"):
                raise ParseError(
                    f"line {no}: unknown relation kind {kind!r} (want 'ml' or 'cl')"
                )
            try:
                a, b = int(a_txt), int(b_txt)
            except ValueError:
                raise ParseError(
                    f"line {no}: indices must be integers, got {line!r}"
                ) from None
            max_index = max(max_index, a, b)
            (must if kind == "ml" else cannot).append((a, b))
    relations = RelationSet(must=tuple(must), cannot=tuple(cannot))
    return validate_relations(relations, max_index + 1)


def save_relations(relations: RelationSet, path) -> None:
    """Write a relation file in the ``ml,i,j`` / ``cl,a,b`` line format."""
    lines = ["# pairwise relations: ml,i,j = must-link, cl,a,b = cannot-link (0-based)"]
    for i, j in relations.must:
        lines.append(f"ml,{i},{j}")
    for a, b in relations.cannot:
        lines.append(f"cl,{a},{b}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_posteriors_csv(posteriors: np.ndarray, path) -> None:
    """Write per-point soft labels (columns ``p0..p{M-1}``) plus the
    hard assignment column ``assigned``."""
    posteriors = np.asarray(posteriors, dtype=float)
    m = posteriors.shape[1]
    buf = _io.StringIO()
    buf.write(",".join([f"p{k}" for k in range(m)] + ["assigned"]) + "\n")
    hard = np.argmax(posteriors, axis=1)
    for r in range(posteriors.shape[0]):
        cells = [repr(float(v)) for v in posteriors[r]]
        cells.append(str(int(hard[r])))
        buf.write(",".join(cells) + "\n")
    atomic_write_text(path, buf.getvalue())


def save_trace_csv(trace, path) -> None:
    """Write a fit trace as CSV (iteration 0 is the initial model)."""
    lines = ["iteration,log_likelihood"]
    for i, ll in enumerate(trace.log_likelihoods):
        lines.append(f"{i},{repr(float(ll))}")
    atomic_write_text(path, "\n".join(lines) + "\n")
