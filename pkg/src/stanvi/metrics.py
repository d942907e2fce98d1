"""Posterior accuracy metrics and report tables.

The relative error of a fitted parameter component against reference draws is

    err = |mean(x_ref) - mean(x)| / stddev(x_ref)

with the sample (n-1) standard deviation.  A fit is a success when the max
over components stays below 0.3, an error when NaN was encountered, and a
mismatch otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MissingParameter, ZeroReferenceStddev
from .samples import SampleTable

SUCCESS_THRESHOLD = 0.3


@dataclass
class ComponentError:
    name: str
    err: float


@dataclass
class ErrorReport:
    entries: list
    max_err: float
    status: str                       # success | mismatch | error
    guide: str = ""
    model_id: str = ""
    fingerprint: str = ""
    excluded: list = field(default_factory=list)   # zero-stddev components
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "model_id": self.model_id,
            "guide": self.guide,
            "status": self.status,
            "max_err": None if math.isnan(self.max_err) else self.max_err,
            "entries": [{"name": c.name, "err": c.err} for c in self.entries],
            "excluded": list(self.excluded),
            "warnings": list(self.warnings),
            "fingerprint": self.fingerprint,
        }

    @staticmethod
    def from_dict(d):
        return ErrorReport(
            entries=[ComponentError(c["name"], c["err"]) for c in d["entries"]],
            max_err=float("nan") if d["max_err"] is None else float(d["max_err"]),
            status=d["status"],
            guide=d.get("guide", ""),
            model_id=d.get("model_id", ""),
            fingerprint=d.get("fingerprint", ""),
            excluded=list(d.get("excluded", [])),
            warnings=list(d.get("warnings", [])),
        )

    @staticmethod
    def error_report(model_id, guide, message, fingerprint=""):
        return ErrorReport([], float("nan"), "error", guide, model_id,
                           fingerprint, warnings=[message])


def relative_error(samples: SampleTable, reference: SampleTable,
                   guide="", model_id="", fingerprint="") -> ErrorReport:
    """Per-component relative errors of ``samples`` against ``reference``."""
    shared = [c for c in reference.columns if c in samples.columns]
    if not shared:
        raise MissingParameter("samples and reference share no columns")
    warnings = []
    for c in reference.columns:
        if c not in samples.columns:
            warnings.append(f"reference column {c!r} missing from samples; ignored")
    for c in samples.columns:
        if c not in reference.columns:
            warnings.append(f"sample column {c!r} missing from reference; ignored")
    if samples.has_nan():
        return ErrorReport([], float("nan"), "error", guide, model_id,
                           fingerprint, warnings=warnings)
    entries = []
    excluded = []
    nan_seen = False
    for c in shared:
        ref = reference.column(c)
        got = samples.column(c)
        sd = float(np.std(ref, ddof=1))
        if sd == 0.0:
            excluded.append(c)
            continue
        err = abs(float(np.mean(ref)) - float(np.mean(got))) / sd
        if math.isnan(err):
            nan_seen = True
        entries.append(ComponentError(c, err))
    if nan_seen:
        status = "error"
        max_err = float("nan")
    elif not entries:
        raise ZeroReferenceStddev(
            "all shared components have zero reference stddev")
    else:
        max_err = max(e.err for e in entries)
        status = "success" if max_err < SUCCESS_THRESHOLD else "mismatch"
    return ErrorReport(entries, max_err, status, guide, model_id, fingerprint,
                       excluded, warnings)


def bimodality_diagnostic(samples: SampleTable, param: str, cut: float,
                          modes: tuple) -> tuple:
    """Fractions of draws of a scalar parameter below/above ``cut``.

    ``modes`` are the two expected mode locations; the cut must separate them.
    """
    lo_mode, hi_mode = sorted(modes)
    if not (lo_mode < cut < hi_mode):
        raise ValueError(f"cut {cut} does not separate the modes {modes}")
    col = samples.column(param)
    if col.size == 0:
        raise MissingParameter(f"no draws for parameter {param!r}")
    weight_low = float(np.mean(col < cut))
    return weight_low, 1.0 - weight_low


@dataclass
class BenchmarkTable:
    """Models-by-guides grid of error reports with Table-1 style footers."""

    model_ids: list
    guides: list
    cells: dict                      # (model_id, guide) -> ErrorReport

    def report(self, model_id, guide) -> Optional[ErrorReport]:
        return self.cells.get((model_id, guide))

    def footer(self, guide):
        """(average over non-error cells as float or None, successes,
        mismatches, errors)."""
        errs = []
        succ = mism = errc = 0
        for mid in self.model_ids:
            r = self.cells.get((mid, guide))
            if r is None:
                continue
            if r.status == "error":
                errc += 1
            else:
                errs.append(r.max_err)
                if r.status == "success":
                    succ += 1
                else:
                    mism += 1
        avg = float(np.mean(errs)) if errs else None
        return avg, succ, mism, errc

    def _cell_text(self, model_id, guide):
        r = self.cells.get((model_id, guide))
        if r is None:
            return ""
        if r.status == "error":
            return "✗"
        return f"{r.max_err:.2f}"

    def to_markdown(self):
        lines = ["| Model | " + " | ".join(self.guides) + " |",
                 "|" + "---|" * (len(self.guides) + 1)]
        for mid in self.model_ids:
            cells = [self._cell_text(mid, g) for g in self.guides]
            lines.append("| " + " | ".join([mid] + cells) + " |")
        footers = {g: self.footer(g) for g in self.guides}
        avg = [("—" if footers[g][0] is None else f"{footers[g][0]:.2f}")
               for g in self.guides]
        lines.append("| Average | " + " | ".join(avg) + " |")
        for label, idx in (("Successes", 1), ("Mismatches", 2), ("Errors", 3)):
            lines.append("| " + label + " | "
                         + " | ".join(str(footers[g][idx]) for g in self.guides)
                         + " |")
        return "\n".join(lines) + "\n"

    def to_csv_text(self):
        lines = ["model," + ",".join(self.guides)]
        for mid in self.model_ids:
            row = [mid]
            for g in self.guides:
                r = self.cells.get((mid, g))
                if r is None:
                    row.append("")
                elif r.status == "error":
                    row.append("error")
                else:
                    row.append("%.17g" % r.max_err)
            lines.append(",".join(row))
        footers = {g: self.footer(g) for g in self.guides}
        lines.append("Average," + ",".join(
            "" if footers[g][0] is None else "%.17g" % footers[g][0]
            for g in self.guides))
        lines.append("Successes," + ",".join(str(footers[g][1]) for g in self.guides))
        lines.append("Mismatches," + ",".join(str(footers[g][2]) for g in self.guides))
        lines.append("Errors," + ",".join(str(footers[g][3]) for g in self.guides))
        return "\n".join(lines) + "\n"


def summarize(reports: list) -> BenchmarkTable:
    """Group reports into a models-by-guides table (order of appearance)."""
    if not reports:
        raise ValueError("summarize needs at least one report")
    model_ids = []
    guides = []
    cells = {}
    for r in reports:
        if r.model_id not in model_ids:
            model_ids.append(r.model_id)
        if r.guide not in guides:
            guides.append(r.guide)
        cells[(r.model_id, r.guide)] = r
    return BenchmarkTable(model_ids, guides, cells)
