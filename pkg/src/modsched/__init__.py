"""Optimal modulo scheduling for VLIW loops with an SMT solver."""

from .baseline import HeuristicOptions, ims_schedule
from .bounds import mii, stage_bounds
from .errors import BackendError, BoundsError, InfeasibleError, InputError
from .explain import Diagnosis, explain_core
from .loop import LoopGraph, load_loop
from .machine import Processor, load_machine
from .pressure import measure_pressure
from .schedule import ModuloSchedule, check_schedule, simulate
from .search import SearchOptions, SearchReport, find_schedule

__all__ = [
    "BackendError", "BoundsError", "Diagnosis", "HeuristicOptions", "InfeasibleError", "InputError",
    "LoopGraph", "ModuloSchedule", "Processor", "SearchOptions", "SearchReport", "check_schedule",
    "explain_core", "find_schedule", "ims_schedule", "load_loop", "load_machine", "measure_pressure",
    "mii", "simulate", "stage_bounds",
]
