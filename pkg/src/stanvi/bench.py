"""Batch benchmark execution from a TOML manifest.

A suite lists (model.stan, data.json, reference.csv) triples and a guide
list; ``run_benchmark`` fits every (model, guide) cell, scores it against
the reference draws, and writes per-cell artifacts plus a summary table
under the results directory.  Completed cells are skipped on rerun when
their input fingerprint matches, so a finished suite reruns byte-identically.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ParseError
from .metrics import BenchmarkTable, ErrorReport, relative_error, summarize
from .samples import SampleTable

DEFAULT_GUIDES = ("delta", "normal", "diagonal-normal", "multivariate-normal",
                  "low-rank", "laplace", "iaf", "bnaf")


@dataclass
class SuiteCell:
    model_id: str
    model_path: Path
    data_path: Path | None
    reference_path: Path
    guide: str
    num_steps: int
    num_samples: int
    step_size: float
    num_particles: int
    seed: int


@dataclass
class Suite:
    name: str
    cells: list
    guides: list
    model_ids: list


def load_suite(path) -> Suite:
    """Parse a suite manifest; paths are resolved relative to the file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as ex:
        raise ParseError(f"{path}: invalid TOML ({ex})") from ex
    except OSError as ex:
        raise ParseError(f"{path}: {ex}") from ex
    suite = raw.get("suite", {})
    models = raw.get("models", [])
    if not models:
        raise ParseError(f"{path}: manifest lists no [[models]]")
    guides = list(suite.get("guides", DEFAULT_GUIDES))
    base = path.parent
    defaults = {
        "num_steps": int(suite.get("num_steps", 100_000)),
        "num_samples": int(suite.get("num_samples", 10_000)),
        "step_size": float(suite.get("step_size", 5e-4)),
        "num_particles": int(suite.get("num_particles", 1)),
    }
    seed = int(suite.get("seed", 0))
    cells = []
    model_ids = []
    for entry in models:
        try:
            model_id = entry["id"]
            model_path = base / entry["model"]
            reference = base / entry["reference"]
        except KeyError as ex:
            raise ParseError(f"{path}: model entry missing {ex}") from ex
        data_path = base / entry["data"] if "data" in entry else None
        model_ids.append(model_id)
        for guide in guides:
            cells.append(SuiteCell(
                model_id=model_id,
                model_path=model_path,
                data_path=data_path,
                reference_path=reference,
                guide=guide,
                num_steps=int(entry.get("num_steps", defaults["num_steps"])),
                num_samples=int(entry.get("num_samples", defaults["num_samples"])),
                step_size=float(entry.get("step_size", defaults["step_size"])),
                num_particles=int(entry.get("num_particles", defaults["num_particles"])),
                seed=_cell_seed(seed, model_id, guide),
            ))
    return Suite(suite.get("name", path.stem), cells, guides, model_ids)


def _cell_seed(base_seed, model_id, guide):
    return (base_seed + zlib.crc32(f"{model_id}:{guide}".encode())) % (2 ** 31)


def cell_fingerprint(cell: SuiteCell) -> str:
    h = hashlib.sha256()
    h.update(cell.model_path.read_bytes())
    if cell.data_path is not None:
        h.update(cell.data_path.read_bytes())
    h.update(cell.guide.encode())
    h.update(repr((cell.num_steps, cell.num_samples, cell.step_size,
                   cell.num_particles, cell.seed)).encode())
    return h.hexdigest()


def _cell_dir(results_dir, cell):
    return Path(results_dir) / f"{cell.model_id}__{cell.guide}"


def run_cell(cell: SuiteCell, results_dir) -> ErrorReport:
    """Fit one (model, guide) pair, score it, and write its artifacts."""
    from . import frontend, model as model_mod, svi
    from .data import load_data
    from .guides import GuideConfig, synthesize

    fingerprint = cell_fingerprint(cell)
    out = _cell_dir(results_dir, cell)
    out.mkdir(parents=True, exist_ok=True)
    try:
        source = cell.model_path.read_text()
        gm = model_mod.compile_model(frontend.check_source(source))
        bindings = load_data(cell.data_path) if cell.data_path else {}
        prepared = gm.prepare(bindings)
        guide = synthesize(cell.guide, prepared, GuideConfig(init_seed=cell.seed))
        config = svi.SVIConfig(num_steps=cell.num_steps,
                               num_samples=cell.num_samples,
                               step_size=cell.step_size,
                               num_particles=cell.num_particles,
                               seed=cell.seed)
        result = svi.run(prepared, guide, None, config)
        _write_loss(out / "loss.csv", result.loss_trace)
        if result.ok:
            result.samples.to_csv(out / "samples.csv")
            _write_histograms(out / "histogram.csv", result.samples)
            reference = SampleTable.from_csv(cell.reference_path)
            report = relative_error(result.samples, reference,
                                    guide=cell.guide, model_id=cell.model_id,
                                    fingerprint=fingerprint)
        else:
            report = ErrorReport.error_report(
                cell.model_id, cell.guide,
                f"nan_error at step {result.nan_step}", fingerprint)
    except Exception as ex:  # a failing cell must not abort the batch
        report = ErrorReport.error_report(
            cell.model_id, cell.guide, f"{type(ex).__name__}: {ex}", fingerprint)
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _write_loss(path, trace):
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for step, loss in trace:
            fh.write("%d,%.17g\n" % (step, loss))


def _write_histograms(path, table: SampleTable, bins=50):
    """Histogram bins per column, replacing plot rendering."""
    with open(path, "w") as fh:
        fh.write("column,bin_low,bin_high,count\n")
        for j, col in enumerate(table.columns):
            vals = table.rows[:, j]
            counts, edges = np.histogram(vals, bins=bins)
            for k in range(bins):
                fh.write("%s,%.17g,%.17g,%d\n" % (col, edges[k], edges[k + 1],
                                                  counts[k]))


def _load_cached(cell, results_dir):
    path = _cell_dir(results_dir, cell) / "report.json"
    if not path.exists():
        return None
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (json.JSONDecodeError, OSError):
        return None
    if d.get("fingerprint") != cell_fingerprint(cell):
        return None
    return ErrorReport.from_dict(d)


def run_benchmark(suite_path, results_dir="results", jobs=1,
                  progress=None) -> BenchmarkTable:
    """Execute a suite manifest; resumable, never aborts on cell failures."""
    suite = load_suite(suite_path)
    results_dir = Path(results_dir)
    results_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    pending = []
    for cell in suite.cells:
        cached = _load_cached(cell, results_dir)
        if cached is not None:
            reports[(cell.model_id, cell.guide)] = cached
            if progress:
                progress(f"cached  {cell.model_id} / {cell.guide}")
        else:
            pending.append(cell)
    if pending:
        if jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = {pool.submit(run_cell, c, results_dir): c for c in pending}
                for fut in concurrent.futures.as_completed(futures):
                    cell = futures[fut]
                    report = fut.result()
                    reports[(cell.model_id, cell.guide)] = report
                    if progress:
                        progress(f"done    {cell.model_id} / {cell.guide} "
                                 f"[{report.status}]")
        else:
            for cell in pending:
                report = run_cell(cell, results_dir)
                reports[(cell.model_id, cell.guide)] = report
                if progress:
                    progress(f"done    {cell.model_id} / {cell.guide} "
                             f"[{report.status}]")
    ordered = [reports[(mid, g)] for mid in suite.model_ids for g in suite.guides
               if (mid, g) in reports]
    table = summarize(ordered)
    write_summary(table, results_dir)
    return table


def write_summary(table: BenchmarkTable, results_dir):
    results_dir = Path(results_dir)
    (results_dir / "report.csv").write_text(table.to_csv_text())
    (results_dir / "report.md").write_text(table.to_markdown())


def collect_reports(results_dir) -> BenchmarkTable:
    """Rebuild a summary table from the report.json files under results/."""
    results_dir = Path(results_dir)
    reports = []
    for sub in sorted(results_dir.iterdir()):
        path = sub / "report.json"
        if sub.is_dir() and path.exists():
            with open(path) as fh:
                reports.append(ErrorReport.from_dict(json.load(fh)))
    if not reports:
        raise ParseError(f"no report.json files under {results_dir}")
    return summarize(reports)
