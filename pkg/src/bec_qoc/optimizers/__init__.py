"""Search drivers: L-BFGS / steepest descent, Nelder-Mead, Krotov, dressing."""

from .base import BudgetExhausted, FunctionObjective, LineSearchSpec, Objective, StoppingRule
from .drivers import (ChoppedObjective, GrapeObjective, dgroup, grape, group, nm_crab, nm_dcrab,
                      superiteration_seed)
from .krotov import KrotovConfig, KrotovState, krotov, krotov_initial, krotov_sweep
from .linesearch import LineSearchFailure, line_search
from .quasi_newton import bfgs, lbfgs, steepest_descent, two_loop
from .simplex import nelder_mead
from .trace import TRACE_COLUMNS, RunTrace, TraceRecord

__all__ = [
    "BudgetExhausted", "FunctionObjective", "LineSearchSpec", "Objective", "StoppingRule",
    "ChoppedObjective", "GrapeObjective", "dgroup", "grape", "group", "nm_crab", "nm_dcrab",
    "superiteration_seed", "KrotovConfig", "KrotovState", "krotov", "krotov_initial",
    "krotov_sweep", "LineSearchFailure", "line_search", "lbfgs", "steepest_descent", "two_loop",
    "bfgs", "nelder_mead", "TRACE_COLUMNS", "RunTrace", "TraceRecord",
]
