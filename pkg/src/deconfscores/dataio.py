"""CSV dataset ingestion.

Expected header: ``t`` (binary treatment), ``y`` (outcome), covariate
columns ``x1 .. xp`` numbered consecutively from 1, and optionally the
oracle outcome surfaces ``mu0`` and ``mu1``.  Column order is free; parse
failures report the offending row and column.
"""

from __future__ import annotations

import csv
import re

import numpy as np

from .errors import ParseError, SchemaError
from .estimators import Dataset

_X_COL = re.compile(r"^x([1-9][0-9]*)$")


def _parse_header(header):
    """Map header names to column indices; returns (cols, p, has_oracle)."""
    seen = {}
    for i, name in enumerate(header):
        name = name.strip()
        if name in seen:
            raise SchemaError(f"duplicate column {name!r}")
        seen[name] = i
    for required in ("t", "y"):
        if required not in seen:
            raise SchemaError(f"missing required column {required!r}")
    xnums = []
    for name in seen:
        m = _X_COL.match(name)
        if m:
            xnums.append(int(m.group(1)))
    if not xnums:
        raise SchemaError("no covariate columns x1..xp found")
    xnums.sort()
    if xnums != list(range(1, len(xnums) + 1)):
        raise SchemaError("covariate columns must be numbered x1..xp "
                          "without gaps")
    known = {"t", "y", "mu0", "mu1"} | {f"x{k}" for k in xnums}
    unknown = [n for n in seen if n not in known]
    if unknown:
        raise SchemaError(f"unrecognized columns: {', '.join(sorted(unknown))}")
    has_oracle = "mu0" in seen and "mu1" in seen
    if ("mu0" in seen) != ("mu1" in seen):
        raise SchemaError("mu0 and mu1 must be provided together")
    return seen, len(xnums), has_oracle


def _cell(row, cols, name, row_no):
    raw = row[cols[name]]
    try:
        return float(raw)
    except ValueError:
        raise ParseError(
            f"row {row_no}, column {name!r}: cannot parse {raw!r}") from None


def load_dataset_csv(path) -> Dataset:
    """Read a dataset file; see the module docstring for the schema."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file") from None
        cols, p, has_oracle = _parse_header(header)
        t, y, X = [], [], []
        mu0, mu1 = [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"row {row_no}: expected {len(header)} fields, "
                    f"got {len(row)}")
            tv = _cell(row, cols, "t", row_no)
            if tv not in (0.0, 1.0):
                raise SchemaError(
                    f"row {row_no}: treatment must be 0 or 1, got {tv:g}")
            t.append(tv)
            y.append(_cell(row, cols, "y", row_no))
            X.append([_cell(row, cols, f"x{k}", row_no)
                      for k in range(1, p + 1)])
            if has_oracle:
                mu0.append(_cell(row, cols, "mu0", row_no))
                mu1.append(_cell(row, cols, "mu1", row_no))
    return Dataset(design=np.array(X, dtype=float),
                   treatment=np.array(t),
                   outcome=np.array(y),
                   oracle_m0=np.array(mu0) if has_oracle else None,
                   oracle_m1=np.array(mu1) if has_oracle else None)
