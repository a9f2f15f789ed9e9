"""Run traces: best-so-far cost against the number of equation-of-motion solves."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ("eval_count", "cost", "infidelity", "fidelity", "wall_ms")


@dataclass(frozen=True)
class TraceRecord:
    eval_count: int
    cost: float
    infidelity: float
    fidelity: float
    wall_ms: float = 0.0


@dataclass
class RunTrace:
    """Best-so-far history of one optimization run.

    ``observe`` is called after every forward solve; a record is appended only
    when the evaluation count has advanced, and it always carries the best
    cost seen so far together with the fidelity of that best control.
    """

    algorithm: str
    seed: int | None = None
    params: dict = field(default_factory=dict)
    records: list[TraceRecord] = field(default_factory=list)
    final_control: np.ndarray | None = None
    status: str = "running"
    history: list[float] = field(default_factory=list)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def observe(self, eval_count: int, cost: float, fidelity: float, control=None) -> None:
        self.history.append(float(cost))
        wall = 1e3 * (time.perf_counter() - self._t0)
        if self.records and eval_count <= self.records[-1].eval_count:
            raise ValueError("evaluation counts must increase between records")
        best = self.records[-1] if self.records else None
        if best is None or cost < best.cost:
            rec = TraceRecord(int(eval_count), float(cost), 1.0 - float(fidelity), float(fidelity), wall)
            if control is not None:
                self.final_control = np.array(control, dtype=float)
        else:
            rec = TraceRecord(int(eval_count), best.cost, best.infidelity, best.fidelity, wall)
        self.records.append(rec)

    @property
    def best(self) -> TraceRecord:
        if not self.records:
            raise ValueError("empty trace")
        return self.records[-1]

    @property
    def eval_counts(self) -> np.ndarray:
        return np.array([r.eval_count for r in self.records], dtype=int)

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @property
    def infidelities(self) -> np.ndarray:
        return np.array([r.infidelity for r in self.records])

    @property
    def wall_time(self) -> float:
        return self.records[-1].wall_ms / 1e3 if self.records else 0.0

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([r.eval_count, repr(r.cost), repr(r.infidelity), repr(r.fidelity),
                            f"{r.wall_ms:.3f}"])

    @classmethod
    def read_csv(cls, path: str | Path, algorithm: str = "") -> "RunTrace":
        trace = cls(algorithm or Path(path).stem)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
                raise ValueError(f"{path}: unexpected trace columns {reader.fieldnames}")
            for row in reader:
                trace.records.append(TraceRecord(int(row["eval_count"]), float(row["cost"]),
                                                 float(row["infidelity"]), float(row["fidelity"]),
                                                 float(row["wall_ms"])))
        trace.status = "loaded"
        return trace

    def write_control(self, path: str | Path, times: np.ndarray) -> None:
        if self.final_control is None:
            raise ValueError("trace has no control")
        np.savetxt(path, np.column_stack([times, self.final_control]), fmt="%.17g",
                   header="t_ms u_um")
