"""Tables of posterior draws and their CSV serialization.

Columns are flattened parameter components named Stan-CSV style: a scalar
keeps its name, vector components get 1-based suffixes (``beta.1``), matrix
components row-major double suffixes (``m.1.2``).  Values are written with
%.17g so a rewrite of the same table is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MissingParameter, ParseError


@dataclass
class SampleTable:
    columns: list
    rows: np.ndarray                 # (n_draws, n_columns)
    seed: Optional[int] = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.columns):
            raise ValueError("rows must be (n_draws, n_columns)")

    @property
    def num_rows(self):
        return self.rows.shape[0]

    def column(self, name):
        try:
            j = self.columns.index(name)
        except ValueError:
            raise MissingParameter(f"no column {name!r}") from None
        return self.rows[:, j]

    def has_nan(self):
        return bool(np.isnan(self.rows).any())

    def parameter_names(self):
        """Base parameter names, in column order, without component suffixes."""
        seen = []
        for c in self.columns:
            base = c.split(".")[0]
            if base not in seen:
                seen.append(base)
        return seen

    def components(self, base):
        """(column name, values) pairs of the components of one parameter."""
        out = [(c, self.rows[:, j]) for j, c in enumerate(self.columns)
               if c == base or c.startswith(base + ".")]
        if not out:
            raise MissingParameter(f"no parameter {base!r}")
        return out

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join("%.17g" % v for v in row) + "\n")

    @staticmethod
    def from_csv(path) -> "SampleTable":
        with open(path) as fh:
            header = fh.readline().strip()
            if not header:
                raise ParseError(f"{path}: empty samples file")
            columns = header.split(",")
            data = []
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != len(columns):
                    raise ParseError(f"{path}:{lineno}: expected {len(columns)} fields")
                try:
                    data.append([float(p) for p in parts])
                except ValueError as ex:
                    raise ParseError(f"{path}:{lineno}: {ex}") from ex
        if not data:
            raise ParseError(f"{path}: no draws")
        return SampleTable(columns, np.asarray(data))


def flat_names(name, shape):
    if not shape:
        return [name]
    if len(shape) == 1:
        return [f"{name}.{i + 1}" for i in range(shape[0])]
    m, n = shape
    return [f"{name}.{i + 1}.{j + 1}" for i in range(m) for j in range(n)]


def flatten_value(v):
    arr = np.asarray(v, dtype=np.float64)
    return arr.reshape(-1)
