"""Stan-style JSON data ingestion.

Scalars, arrays, and nested arrays (row-major for matrices), as documented in
docs/data-format.md.  Validation against a model's data schema happens at
binding time; ``load_data`` can optionally validate immediately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataSchemaMismatch, ParseError, SchemaMismatch


@dataclass
class DataBindings:
    """Named data values as loaded from a JSON file."""

    values: dict = field(default_factory=dict)

    def values_dict(self):
        return self.values

    def __contains__(self, name):
        return name in self.values

    def __getitem__(self, name):
        return self.values[name]


def _convert(name, v):
    if isinstance(v, bool):
        raise ParseError(f"{name}: booleans are not Stan data values")
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, list):
        arr = np.asarray(v, dtype=np.float64)
        if arr.ndim not in (1, 2):
            raise ParseError(f"{name}: only 1-D and 2-D arrays are supported")
        return arr
    raise ParseError(f"{name}: unsupported JSON value of type {type(v).__name__}")


def load_data(path, model=None) -> DataBindings:
    """Load a Stan JSON data file; validate against ``model`` when given."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as ex:
        raise ParseError(f"{path}: invalid JSON ({ex})") from ex
    except OSError as ex:
        raise ParseError(f"{path}: {ex}") from ex
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    values = {name: _convert(name, v) for name, v in raw.items()}
    bindings = DataBindings(values)
    if model is not None:
        try:
            model.prepare(bindings)
        except DataSchemaMismatch as ex:
            raise SchemaMismatch(str(ex)) from ex
    return bindings
