"""Ensemble statistics, robustness scans and plot data."""

from __future__ import annotations

import csv
import html
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..optimizers import RunTrace

PLOT_COLUMNS = ("x", "median", "q25", "q75")


@dataclass(frozen=True)
class EnsembleSummary:
    """Pointwise quartiles of best-so-far infidelity across runs."""

    eval_counts: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    n_seeds: int


def aligned_infidelities(traces: Sequence[RunTrace]) -> tuple[np.ndarray, np.ndarray]:
    """Best-so-far infidelity of every trace on the union of evaluation counts.

    Between records a trace holds its last value.  The grid starts at the
    latest first record so that every trace is defined everywhere on it.
    """
    if not traces:
        raise ValueError("no traces to summarize")
    for t in traces:
        if not t.records:
            raise ValueError(f"trace {t.algorithm!r} (seed {t.seed}) is empty")
    start = max(t.records[0].eval_count for t in traces)
    grid = np.unique(np.concatenate([t.eval_counts for t in traces]))
    grid = grid[grid >= start]
    rows = []
    for t in traces:
        idx = np.searchsorted(t.eval_counts, grid, side="right") - 1
        rows.append(t.infidelities[idx])
    return grid, np.array(rows)


def summarize(traces: Sequence[RunTrace]) -> EnsembleSummary:
    # the sort makes the result independent of trace order, bit for bit
    grid, values = aligned_infidelities(traces)
    values = np.sort(values, axis=0)
    q25, med, q75 = np.quantile(values, [0.25, 0.5, 0.75], axis=0, method="linear")
    return EnsembleSummary(grid, med, q25, q75, len(traces))


def summarize_files(paths: Sequence[str | Path]) -> EnsembleSummary:
    if not paths:
        raise ValueError("no trace files given")
    return summarize([RunTrace.read_csv(p) for p in sorted(map(str, paths))])


def final_infidelities(traces: Sequence[RunTrace]) -> np.ndarray:
    return np.array([t.best.infidelity for t in traces])


def write_summary(summary: EnsembleSummary, path: str | Path) -> Path:
    return _write_rows(path, summary.eval_counts, summary.median, summary.q25, summary.q75)


def _write_rows(path, x, med, q25, q75) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for row in zip(x, med, q25, q75):
            w.writerow([repr(_py(v)) for v in row])
    return path


def _py(v):
    v = v.item() if hasattr(v, "item") else v
    return int(v) if isinstance(v, (int, np.integer)) else float(v)


def read_summary(path: str | Path) -> EnsembleSummary:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != PLOT_COLUMNS:
            raise ValueError(f"{path}: expected columns {PLOT_COLUMNS}, got {header}")
        rows = [[float(v) for v in r] for r in reader if r]
    a = np.array(rows, dtype=float).reshape(-1, 4)
    return EnsembleSummary(a[:, 0], a[:, 1], a[:, 2], a[:, 3], 0)


# -- robustness ----------------------------------------------------------------

@dataclass(frozen=True)
class RobustnessTable:
    axis: str
    values: np.ndarray
    infidelity: np.ndarray
    status: tuple[str, ...]

    @property
    def fidelity(self) -> np.ndarray:
        return 1.0 - self.infidelity

    def as_summary(self) -> EnsembleSummary:
        return EnsembleSummary(self.values, self.infidelity, self.infidelity, self.infidelity, 1)


def robustness_scan(control: np.ndarray, axis: str, values: Sequence[float],
                    config) -> RobustnessTable:
    """Re-propagate a fixed control with beta or the trap polynomial scaled.

    ``config`` is the :class:`~bec_qoc.bench.config.ExperimentConfig` the
    control was optimized under (its filter is applied).  Initial and target
    states are recomputed for every scaled problem, since they are the
    eigenstates of the scaled Hamiltonian.  Failures are tabulated per value
    as NaN.
    """
    from .runner import configured_problem

    if axis not in ("beta-scale", "potential-scale"):
        raise ValueError(f"robustness axis must be beta-scale or potential-scale, got {axis!r}")
    control = np.asarray(control, dtype=float)
    p0 = config.problem
    infid, status = [], []
    for a in values:
        try:
            if axis == "beta-scale":
                p = replace(p0, beta_scale=p0.beta_scale * a)
            else:
                p = replace(p0, potential_scale=p0.potential_scale * a)
            problem = configured_problem(replace(config, problem=p))
            infid.append(problem.forward(control).cost.infidelity)
            status.append("ok")
        except Exception as exc:
            infid.append(math.nan)
            status.append(f"{type(exc).__name__}: {exc}")
    return RobustnessTable(axis, np.asarray(values, dtype=float), np.array(infid), tuple(status))


def write_robustness(table: RobustnessTable, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([table.axis, "infidelity", "fidelity", "status"])
        for a, i, s in zip(table.values, table.infidelity, table.status):
            w.writerow([repr(float(a)), repr(float(i)), repr(float(1.0 - i)), s])
    return path


# -- plot data -----------------------------------------------------------------

def emit_plot_data(data: EnsembleSummary | RobustnessTable, path: str | Path,
                   title: str = "", log_y: bool = True) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (x, median, q25, q75) and a standalone ``<path>.svg``."""
    summary = data.as_summary() if isinstance(data, RobustnessTable) else data
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".csv", ".svg") else path
    csv_path = _write_rows(stem.with_suffix(".csv"), summary.eval_counts, summary.median,
                           summary.q25, summary.q75)
    svg_path = stem.with_suffix(".svg")
    svg_path.write_text(render_svg(summary, title, log_y))
    return csv_path, svg_path


def render_svg(summary: EnsembleSummary, title: str = "", log_y: bool = True,
               width: int = 480, height: int = 320) -> str:
    x = np.asarray(summary.eval_counts, dtype=float)
    ys = [np.asarray(a, dtype=float) for a in (summary.median, summary.q25, summary.q75)]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys])
    use_log = log_y and finite.size > 0 and np.all(finite > 0)
    tf = np.log10 if use_log else (lambda v: v)
    ty = [tf(np.where(np.isfinite(y), y, np.nan)) for y in ys]
    lo = min(np.nanmin(t) for t in ty) if finite.size else 0.0
    hi = max(np.nanmax(t) for t in ty) if finite.size else 1.0
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    x0, x1 = (x.min(), x.max()) if x.size else (0.0, 1.0)
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    m = 40

    def px(v):
        return m + (v - x0) / (x1 - x0) * (width - 2 * m)

    def py(v):
        return height - m - (v - lo) / (hi - lo) * (height - 2 * m)

    def pts(xs, yv):
        return " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, yv) if np.isfinite(b))

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
             f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>']
    if title:
        parts.append(f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">'
                     f'{html.escape(title)}</text>')
    med, q25, q75 = ty
    if np.any(summary.q25 != summary.q75):
        band = pts(x, q75) + " " + pts(x[::-1], q25[::-1])
        parts.append(f'<polygon class="band" points="{band}" fill="steelblue" fill-opacity="0.3" '
                     f'stroke="none"/>')
    parts.append(f'<polyline class="median" points="{pts(x, med)}" fill="none" stroke="steelblue" '
                 f'stroke-width="1.5"/>')
    label = "log10 infidelity" if use_log else "value"
    parts.append(f'<text x="{m}" y="{m - 8}" font-size="11">{label}: {lo:.3g} .. {hi:.3g}</text>')
    parts.append(f'<text x="{width - m}" y="{height - 12}" text-anchor="end" font-size="11">'
                 f'x: {x0:.6g} .. {x1:.6g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
