from .context import DELIVERED, DROPPED, Fork, PathContext, ReplayContext, ReplayDivergence, Sym
from .engine import (BFS, DFS, RANDOM, ExecutionState, Explorer, Frontier, Limits, RunReport,
                     RunStats, fork, select_next)
from .records import (ChoiceKind, ChoiceRecord, Fault, FaultKind, FaultSignature, Outcome, Status,
                      TestCase)

__all__ = [
    "BFS", "DFS", "RANDOM", "DELIVERED", "DROPPED",
    "ChoiceKind", "ChoiceRecord", "ExecutionState", "Explorer", "Fault", "FaultKind", "FaultSignature",
    "Fork", "Frontier", "Limits", "Outcome", "PathContext", "ReplayContext", "ReplayDivergence",
    "RunReport", "RunStats", "Status", "Sym", "TestCase", "fork", "select_next",
]
