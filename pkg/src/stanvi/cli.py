"""Command line interface: compile, infer, eval, bench, report.

Exit codes: 0 on success, 1 on usage errors, 2 on compile errors, 3 when a
single inference run ends in nan_error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench as bench_mod
from . import frontend
from . import model as model_mod
from . import svi
from .data import load_data
from .errors import SourceError, StanviError
from .guides import GUIDE_KINDS, GuideConfig, synthesize
from .metrics import relative_error
from .samples import SampleTable

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_COMPILE = 2
EXIT_NAN = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_seed():
    raw = os.environ.get("STANVI_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        return 0


def build_parser() -> _Parser:
    p = _Parser(prog="stanvi",
                description="Black-box variational inference for a Stan subset")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a model and dump its layout")
    c.add_argument("model")
    c.add_argument("--data", help="JSON data file (for data-sized parameters)")

    i = sub.add_parser("infer", help="fit a guide and write posterior samples")
    i.add_argument("model")
    i.add_argument("--data", help="JSON data file")
    i.add_argument("--guide", choices=GUIDE_KINDS, default="diagonal-normal")
    i.add_argument("--num-steps", type=int, default=100_000)
    i.add_argument("--num-samples", type=int, default=10_000)
    i.add_argument("--step-size", type=float, default=5e-4)
    i.add_argument("--particles", type=int, default=1)
    i.add_argument("--seed", type=int, default=None)
    i.add_argument("--out", required=True, help="samples CSV path")
    i.add_argument("--loss-out", help="optional loss trace CSV path")
    i.add_argument("--init-scale", type=float, default=0.1)
    i.add_argument("--init-loc-jitter", type=float, default=0.0)
    i.add_argument("--rank", type=int, default=None)
    i.add_argument("--iaf-flows", type=int, default=3)
    i.add_argument("--iaf-hidden", type=str, default=None,
                   help="comma-separated hidden sizes, e.g. 8,8")
    i.add_argument("--iaf-gate-bias", type=float, default=1.0)
    i.add_argument("--bnaf-flows", type=int, default=1)
    i.add_argument("--bnaf-factors", type=str, default="8,8",
                   help="comma-separated block factors")

    e = sub.add_parser("eval", help="score samples against reference draws")
    e.add_argument("--samples", required=True)
    e.add_argument("--reference", required=True)
    e.add_argument("--out", required=True, help="report CSV path")

    b = sub.add_parser("bench", help="run a benchmark suite manifest")
    b.add_argument("--suite", required=True)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--results", default="results")

    r = sub.add_parser("report", help="render a summary from results/")
    r.add_argument("--results", default="results")
    r.add_argument("--format", choices=("md", "csv"), default="md")
    return p


def _guide_config(args, seed) -> GuideConfig:
    def ints(text):
        return tuple(int(t) for t in text.split(",") if t)

    return GuideConfig(
        init_scale=args.init_scale,
        init_loc_jitter=args.init_loc_jitter,
        rank=args.rank,
        iaf_num_flows=args.iaf_flows,
        iaf_hidden=ints(args.iaf_hidden) if args.iaf_hidden else None,
        iaf_gate_bias=args.iaf_gate_bias,
        bnaf_num_flows=args.bnaf_flows,
        bnaf_block_factors=ints(args.bnaf_factors),
        init_seed=seed,
    )


def cmd_compile(args) -> int:
    source = open(args.model).read()
    gm = model_mod.compile_model(frontend.check_source(source))
    bindings = load_data(args.data) if args.data else {}
    prepared = gm.prepare(bindings)
    print(f"model: {args.model}")
    print(f"unconstrained dimension: {prepared.layout.dim}")
    print("layout:")
    for e in prepared.layout.entries:
        shape = "scalar" if not e.shape else "x".join(str(s) for s in e.shape)
        print(f"  {e.name:24s} offset={e.offset:<4d} length={e.length:<4d} "
              f"shape={shape:8s} transform={e.transform.kind}")
    if gm.tparam_names:
        print("transformed parameters:", ", ".join(gm.tparam_names))
    if gm.gq_names:
        print("generated quantities:", ", ".join(gm.gq_names))
    print("canonical program:")
    print(frontend.print_program(gm.typed.program), end="")
    return EXIT_OK


def cmd_infer(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    source = open(args.model).read()
    gm = model_mod.compile_model(frontend.check_source(source))
    bindings = load_data(args.data) if args.data else {}
    prepared = gm.prepare(bindings)
    guide = synthesize(args.guide, prepared, _guide_config(args, seed))
    config = svi.SVIConfig(num_steps=args.num_steps,
                           num_samples=args.num_samples,
                           step_size=args.step_size,
                           num_particles=args.particles,
                           seed=seed)
    result = svi.run(prepared, guide, None, config)
    if args.loss_out:
        with open(args.loss_out, "w") as fh:
            fh.write("step,loss\n")
            for step, loss in result.loss_trace:
                fh.write("%d,%.17g\n" % (step, loss))
    if not result.ok:
        print(f"inference failed: nan_error at step {result.nan_step}",
              file=sys.stderr)
        return EXIT_NAN
    result.samples.to_csv(args.out)
    means = result.samples.rows.mean(axis=0)
    print(f"wrote {result.samples.num_rows} draws to {args.out}")
    for name, mean in zip(result.samples.columns, means):
        print(f"  {name:24s} mean={mean:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    samples = SampleTable.from_csv(args.samples)
    reference = SampleTable.from_csv(args.reference)
    report = relative_error(samples, reference)
    with open(args.out, "w") as fh:
        fh.write("component,err\n")
        for c in report.entries:
            fh.write("%s,%.17g\n" % (c.name, c.err))
        fh.write("max_err,%s\n" % ("" if report.status == "error"
                                   else "%.17g" % report.max_err))
        fh.write("status,%s\n" % report.status)
    print(f"status: {report.status}"
          + ("" if report.status == "error" else f"  max_err: {report.max_err:.4f}"))
    for w in report.warnings:
        print("warning:", w, file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    table = bench_mod.run_benchmark(args.suite, results_dir=args.results,
                                    jobs=args.jobs, progress=print)
    print(table.to_markdown(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    table = bench_mod.collect_reports(args.results)
    if args.format == "md":
        print(table.to_markdown(), end="")
    else:
        print(table.to_csv_text(), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return int(ex.code or 0)
    try:
        if args.command == "compile":
            return cmd_compile(args)
        if args.command == "infer":
            return cmd_infer(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "bench":
            return cmd_bench(args)
        if args.command == "report":
            return cmd_report(args)
    except SourceError as ex:
        print(f"compile error: {ex}", file=sys.stderr)
        return EXIT_COMPILE
    except FileNotFoundError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_USAGE
    except StanviError as ex:
        print(f"error: {type(ex).__name__}: {ex}", file=sys.stderr)
        return EXIT_COMPILE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
