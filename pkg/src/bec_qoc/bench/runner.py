"""Run experiment configs: one optimization per (sweep cell, seed)."""

from __future__ import annotations

import csv
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..controls import FilterKernel, make_basis, random_initial_control
from ..gpe import GpeParams, GpeSolver, SpatialGrid, TrapPotential, mass_from_kg
from ..objective import ControlProblem
from ..optimizers import (KrotovConfig, LineSearchSpec, RunTrace, StoppingRule, dgroup, grape, group,
                          krotov, nm_crab, nm_dcrab)
from .config import AlgorithmConfig, ExperimentConfig, ProblemConfig
from .stats import summarize, write_summary

logger = logging.getLogger(__name__)


@lru_cache(maxsize=16)
def build_problem(p: ProblemConfig) -> ControlProblem:
    """Solver, eigenstates and cost for a problem block (cached per block)."""
    pot = TrapPotential.from_hz(p.p2_hz, p.p4_hz, p.p6_hz, p.r0_um).scaled(p.potential_scale)
    params = GpeParams(beta=p.beta_scale * p.beta_hbar_hz_um * 1e-3, T=p.T_ms, n_steps=p.n_steps,
                       mass=mass_from_kg(p.mass_kg))
    solver = GpeSolver(SpatialGrid(p.x_min_um, p.x_max_um, p.n_points), pot, params)
    return ControlProblem.from_solver(solver, gamma=p.gamma)


def make_kernel(cfg: ExperimentConfig, problem: ControlProblem) -> FilterKernel | None:
    f = cfg.filter
    if f.kind == "none":
        return None
    if f.kind == "exponential":
        return FilterKernel.exponential(f.tau_ms, problem.dt, problem.n_steps)
    return FilterKernel.from_file(f.path, problem.dt, problem.n_steps)


def configured_problem(cfg: ExperimentConfig) -> ControlProblem:
    base = build_problem(cfg.problem)
    # a fresh counter per run; the cached eigenstates are shared read-only
    return replace(base, kernel=make_kernel(cfg, base), counter=type(base.counter)())


def initial_control(problem: ControlProblem, seed: int, basis_size: int = 20,
                    amplitude: float = 0.05) -> np.ndarray:
    """Seeded random control shared by every algorithm in an experiment."""
    basis = make_basis("cb", basis_size)
    _, u = random_initial_control(basis, seed, amplitude, problem.zero_control(), problem.shape,
                                  problem.times)
    return u


def optimize(problem: ControlProblem, u_init: np.ndarray, alg: AlgorithmConfig, max_evals: int,
             seed: int) -> RunTrace:
    stop = StoppingRule(max_evals=max_evals)
    ls = LineSearchSpec()
    name = alg.name
    method = alg.method
    if method == "auto":
        method = "lbfgs" if name == "grape" else "bfgs"
    if name == "grape":
        return grape(problem, u_init, stop, method=method, space=alg.space, memory=alg.memory,
                     linesearch=ls, initial_step=alg.initial_step_um, seed=seed)
    if name == "group":
        basis = make_basis(alg.basis, alg.M, seed)
        return group(problem, u_init, basis, stop, method=method, memory=alg.memory, linesearch=ls,
                     initial_step=alg.initial_step_um, backend=alg.backend, seed=seed)
    if name == "dgroup":
        return dgroup(problem, u_init, alg.M, alg.superiterations, stop, seed=seed,
                      method=method, memory=alg.memory, linesearch=ls, initial_step=alg.initial_step_um)
    if name == "nm-crab":
        basis = make_basis(alg.basis, alg.M, seed)
        return nm_crab(problem, u_init, basis, stop, scale=alg.simplex_scale_um, seed=seed)
    if name == "nm-dcrab":
        return nm_dcrab(problem, u_init, alg.M, alg.superiterations, stop, seed=seed,
                        scale=alg.simplex_scale_um)
    if name == "krotov":
        cfg = KrotovConfig(alg.alpha, problem.shape, alg.max_sweeps)
        return krotov(problem, u_init, cfg, stop, seed=seed)
    raise ValueError(f"unknown algorithm {name!r}")


@dataclass
class CellResult:
    label: str
    seed: int
    trace: RunTrace | None
    error: str = ""


def run_cell(cfg: ExperimentConfig, label: str, value, seed: int) -> CellResult:
    """One optimization run; failures are captured instead of raised."""
    try:
        cell = cfg.for_cell(value)
        problem = configured_problem(cell)
        u0 = initial_control(problem, seed, cell.run.init_basis_size, cell.run.init_amplitude_um)
        trace = optimize(problem, u0, cell.algorithm, cell.run.max_evals, seed)
        return CellResult(label, seed, trace)
    except Exception as exc:  # recorded per cell, the other cells continue
        logger.debug("cell %s seed %s failed:\n%s", label, seed, traceback.format_exc())
        return CellResult(label, seed, None, f"{type(exc).__name__}: {exc}")


def _run_packed(args):
    return run_cell(*args)


def run(cfg: ExperimentConfig, workers: int = 1) -> tuple[Path, list[CellResult]]:
    """Execute every (cell, seed) and write traces, controls and summaries.

    Layout under ``run.output_dir``::

        <cell>/seed_<s>.csv          trace
        <cell>/seed_<s>_control.txt  best control (t_ms, u_um)
        <cell>/summary.csv           eval_count, median, q25, q75
        cells.csv                    one line per run: status and final values
    """
    out = Path(cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, label, value, seed) for label, value in cfg.cells() for seed in cfg.run.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_packed, jobs))
    else:
        results = [_run_packed(j) for j in jobs]

    # writing happens here, in job order, so output does not depend on scheduling
    times = {}
    for (c, label, value, _), res in zip(jobs, results):
        cell_dir = out / label
        cell_dir.mkdir(exist_ok=True)
        if res.trace is None:
            continue
        res.trace.write_csv(cell_dir / f"seed_{res.seed}.csv")
        if label not in times:
            times[label] = build_problem(c.for_cell(value).problem).times
        if res.trace.final_control is not None:
            res.trace.write_control(cell_dir / f"seed_{res.seed}_control.txt", times[label])
    for label, _ in cfg.cells():
        traces = [r.trace for r in results if r.label == label and r.trace is not None]
        if traces:
            write_summary(summarize(traces), out / label / "summary.csv")
    with open(out / "cells.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "seed", "status", "evaluations", "final_cost", "final_infidelity", "error"])
        for r in results:
            if r.trace is None:
                w.writerow([r.label, r.seed, "failed", 0, "", "", r.error])
            else:
                b = r.trace.best
                w.writerow([r.label, r.seed, r.trace.status, b.eval_count, repr(b.cost),
                            repr(b.infidelity), ""])
    return out, results
