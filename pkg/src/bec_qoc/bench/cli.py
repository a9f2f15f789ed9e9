"""``bec-qoc`` command line.

Exit codes: 0 success, 1 runtime failure (including failed cells), 2 invalid
configuration or arguments.
"""

from __future__ import annotations

import argparse
import glob
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load, parse_values
from .stats import (EnsembleSummary, emit_plot_data, read_summary, robustness_scan, summarize_files,
                    write_robustness, write_summary)

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bec-qoc", description="Condensate optimal control benchmarks")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--full-scale", action="store_true", help="100 seeds x 2500 evaluations")
    r.add_argument("--out", help="output directory (overrides the config)")

    s = sub.add_parser("summarize", help="quartiles over trace files")
    s.add_argument("pattern", help="glob of trace CSV files")
    s.add_argument("--out", help="output CSV (default: stdout)")

    b = sub.add_parser("robustness", help="re-propagate a control under scaled beta or trap")
    b.add_argument("solution", help="control file (t_ms u_um)")
    b.add_argument("axis", choices=("beta-scale", "potential-scale"))
    b.add_argument("values", help="comma list or start:stop:step")
    b.add_argument("config")
    b.add_argument("--out", default=".", help="output directory")

    q = sub.add_parser("plot", help="CSV + SVG plot data from a summary or robustness table")
    q.add_argument("input")
    q.add_argument("out", help="output path stem")
    return p


def _cmd_run(args) -> int:
    from .runner import run

    cfg = load(args.config)
    if args.full_scale:
        cfg = cfg.full_scale()
    if args.out:
        cfg = cfg.with_output(args.out)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    out, results = run(cfg, workers=args.workers)
    failed = [r for r in results if r.trace is None]
    for r in failed:
        print(f"cell {r.label} seed {r.seed} failed: {r.error}", file=sys.stderr)
    print(f"{len(results) - len(failed)}/{len(results)} runs written to {out}")
    return EXIT_FAILURE if failed else EXIT_OK


def _cmd_summarize(args) -> int:
    paths = sorted(glob.glob(args.pattern))
    if not paths:
        print(f"no files match {args.pattern!r}", file=sys.stderr)
        return EXIT_FAILURE
    summary = summarize_files(paths)
    if args.out:
        write_summary(summary, args.out)
    else:
        print("x,median,q25,q75")
        for row in zip(summary.eval_counts, summary.median, summary.q25, summary.q75):
            print(",".join(repr(v.item()) for v in row))
    return EXIT_OK


def _cmd_robustness(args) -> int:
    cfg = load(args.config)
    try:
        values = parse_values(args.values)
    except ValueError as exc:
        raise ConfigError(f"bad values {args.values!r}: {exc}") from None
    data = np.loadtxt(args.solution, ndmin=2)
    control = data[:, -1]
    if control.shape[0] != cfg.problem.n_steps:
        raise ConfigError(f"solution has {control.shape[0]} samples, config expects "
                          f"{cfg.problem.n_steps}")
    table = robustness_scan(control, args.axis, values, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_robustness(table, out / "robustness.csv")
    emit_plot_data(table, out / "robustness_plot", title=args.axis)
    for a, i, s in zip(table.values, table.infidelity, table.status):
        print(f"{a:g}\t{i:.6e}\t{s}")
    return EXIT_FAILURE if any(s != "ok" for s in table.status) else EXIT_OK


def _read_plot_input(path: str) -> EnsembleSummary:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[:2] == ["x", "median"]:
        return read_summary(path)
    if len(header) >= 2 and header[1] == "infidelity":
        a = np.genfromtxt(path, delimiter=",", skip_header=1, usecols=(0, 1), ndmin=2)
        return EnsembleSummary(a[:, 0], a[:, 1], a[:, 1], a[:, 1], 1)
    raise ValueError(f"{path}: not a summary or robustness table")


def _cmd_plot(args) -> int:
    csv_path, svg_path = emit_plot_data(_read_plot_input(args.input), args.out)
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    handler = {"run": _cmd_run, "summarize": _cmd_summarize, "robustness": _cmd_robustness,
               "plot": _cmd_plot}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
