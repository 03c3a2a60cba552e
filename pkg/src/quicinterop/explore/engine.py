"""Path exploration: forking, scheduling, limits and test-case emission.

Worlds are snapshotted (pickled) at step boundaries.  When a step hits a
choice point with several feasible outcomes, the step is abandoned and
one child per outcome restarts from the pre-step snapshot with that
outcome forced; all earlier choices of the step replay identically because
the step is deterministic given the world value and the forced labels.
"""

from __future__ import annotations

import logging
import pickle
import random
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

from .. import symval
from ..probes import PROBES, SITES
from ..symval import ConstraintStore
from .context import Fork, PathContext
from .records import FaultSignature, Outcome, Status, TestCase

log = logging.getLogger(__name__)

DFS, BFS, RANDOM = "dfs", "bfs", "random"


class Program(Protocol):
    """A deterministic step function over a picklable world value."""

    config_name: str

    def initial_world(self) -> Any: ...

    def step(self, world: Any, ctx: PathContext) -> Optional[Outcome]: ...

    def scenario_of(self, world: Any) -> str: ...

    def test_case_fields(self) -> Dict[str, Any]: ...


@dataclass
class Limits:
    max_paths: int = 100_000
    max_steps_per_path: int = 100_000
    wall_time_s: Optional[float] = None


@dataclass
class ExecutionState:
    state_id: int
    parent_id: Optional[int]
    world: Any
    store: ConstraintStore = field(default_factory=ConstraintStore)
    trace: list = field(default_factory=list)
    pending: list = field(default_factory=list)
    coverage: set = field(default_factory=set)
    branch_cov: set = field(default_factory=set)
    step_count: int = 0
    status: Status = Status.ACTIVE
    outcome: Optional[Outcome] = None

    def serialize(self) -> bytes:
        return pickle.dumps(self.world, protocol=pickle.HIGHEST_PROTOCOL)


@dataclass
class RunStats:
    steps_per_second: float = 0.0
    wall_time: float = 0.0
    paths_total: int = 0
    paths_ok: int = 0
    paths_error: int = 0
    paths_limit: int = 0
    probe_coverage_pct: float = 0.0
    branch_coverage_pct: float = 0.0
    domain_time_pct: float = 0.0
    max_live_states: int = 0
    concretizations: int = 0
    unique_errors: int = 0
    steps_total: int = 0
    frontier_abandoned: int = 0

    def counters(self) -> dict:
        """Fields that must be identical across repeated deterministic runs."""
        skip = {"steps_per_second", "wall_time", "domain_time_pct"}
        return {k: v for k, v in self.__dict__.items() if k not in skip}


@dataclass
class RunReport:
    stats: RunStats
    errors: List[Tuple[FaultSignature, TestCase]]
    all_test_cases: List[TestCase]


class Frontier:
    def __init__(self, strategy: str = DFS, seed: int = 0):
        if strategy not in (DFS, BFS, RANDOM):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.strategy = strategy
        self.seed = seed
        self.selections = 0
        self._items: deque = deque()

    def __len__(self) -> int:
        return len(self._items)

    def push_children(self, children: Sequence[ExecutionState]) -> None:
        # DFS pops from the right, so push reversed to explore branch order first
        if self.strategy == DFS:
            self._items.extend(reversed(children))
        else:
            self._items.extend(children)

    def drain(self) -> List[ExecutionState]:
        items = list(self._items)
        self._items.clear()
        return items


def select_next(frontier: Frontier) -> ExecutionState:
    if not frontier._items:
        raise IndexError("select_next on an empty frontier")
    if frontier.strategy == DFS:
        st = frontier._items.pop()
    elif frontier.strategy == BFS:
        st = frontier._items.popleft()
    else:
        rng = random.Random(f"{frontier.seed}:{frontier.selections}")
        i = rng.randrange(len(frontier._items))
        st = frontier._items[i]
        del frontier._items[i]
    frontier.selections += 1
    return st


class _Ids:
    def __init__(self):
        self.n = 0

    def __call__(self) -> int:
        self.n += 1
        return self.n - 1


def fork(state: ExecutionState, labels: Sequence, checkpoint: bytes, store: ConstraintStore,
         trace_len: int, pending: list, next_id) -> List[ExecutionState]:
    """Children of ``state``, one per label, each owning an independent world copy."""
    if not labels:
        raise AssertionError("fork with an empty branch list")
    if state.status is not Status.ACTIVE:
        raise AssertionError("fork of a retired state")
    children = [
        ExecutionState(
            state_id=next_id(),
            parent_id=state.state_id,
            world=pickle.loads(checkpoint),
            store=store,
            trace=state.trace[:trace_len],
            pending=pending + [label],
            coverage=set(state.coverage),
            branch_cov=set(state.branch_cov),
            step_count=state.step_count,
        )
        for label in labels
    ]
    state.status = Status.FINISHED_OK  # retired; never reported
    return children


def make_test_case(program: Program, state: ExecutionState) -> TestCase:
    store = state.store
    return TestCase(
        scenario=program.scenario_of(state.world),
        config=program.config_name,
        choices=list(state.trace),
        witnesses={v: symval.witness(store, v) for v in range(store.num_vars)},
        outcome=state.outcome,
        **program.test_case_fields(),
    )


class Explorer:
    def __init__(self, program: Program, strategy: str = DFS, seed: int = 0,
                 limits: Optional[Limits] = None):
        self.program = program
        self.frontier = Frontier(strategy, seed)
        self.limits = limits or Limits()
        self.next_id = _Ids()
        self.stats = RunStats()
        self._domain_time = 0.0
        self._coverage: set = set()
        self._branch_cov: set = set()

    def run(self) -> RunReport:
        t0 = time.perf_counter()
        root = ExecutionState(self.next_id(), None, self.program.initial_world())
        self.frontier.push_children([root])
        cases: List[TestCase] = []
        errors: Dict[FaultSignature, TestCase] = {}
        max_live = 1
        deadline = None if self.limits.wall_time_s is None else t0 + self.limits.wall_time_s
        while len(self.frontier):
            if len(cases) >= self.limits.max_paths:
                break
            if deadline is not None and time.perf_counter() > deadline:
                log.info("wall-time limit reached with %d live states", len(self.frontier))
                break
            state = select_next(self.frontier)
            children = self._advance(state)
            if children:
                self.frontier.push_children(children)
                max_live = max(max_live, len(self.frontier))
                continue
            tc = make_test_case(self.program, state)
            cases.append(tc)
            for sig in state.outcome.faults:
                errors.setdefault(sig, tc)
        s = self.stats
        s.frontier_abandoned = len(self.frontier)
        s.wall_time = time.perf_counter() - t0
        s.paths_total = len(cases)
        s.paths_ok = sum(tc.outcome.status is Status.FINISHED_OK for tc in cases)
        s.paths_error = sum(tc.outcome.status is Status.FINISHED_ERROR for tc in cases)
        s.paths_limit = sum(tc.outcome.status is Status.LIMIT_EXCEEDED for tc in cases)
        s.unique_errors = len(errors)
        s.max_live_states = max_live
        s.steps_per_second = s.steps_total / s.wall_time if s.wall_time > 0 else 0.0
        s.domain_time_pct = min(100.0, 100.0 * self._domain_time / s.wall_time) if s.wall_time > 0 else 0.0
        s.probe_coverage_pct = 100.0 * len(self._coverage & PROBES.keys()) / max(1, len(PROBES))
        taken = {b for b in self._branch_cov if b[0] in SITES}
        s.branch_coverage_pct = 100.0 * len(taken) / max(1, 2 * len(SITES))
        return RunReport(s, list(errors.items()), cases)

    def _advance(self, state: ExecutionState) -> Optional[List[ExecutionState]]:
        """Run ``state`` until it forks (returns children) or terminates (returns None)."""
        program = self.program
        while True:
            if state.step_count >= self.limits.max_steps_per_path:
                state.status = Status.LIMIT_EXCEEDED
                state.outcome = Outcome(Status.LIMIT_EXCEEDED)
                self._absorb(state)
                return None
            checkpoint = state.serialize()
            store0, trace_len, pending0 = state.store, len(state.trace), list(state.pending)
            ctx = PathContext(state.store, state.trace, state.pending,
                              state.coverage, state.branch_cov)
            self.stats.steps_total += 1
            try:
                outcome = program.step(state.world, ctx)
            except Fork as f:
                self._domain_time += ctx.domain_time
                return fork(state, f.labels, checkpoint, store0, trace_len, pending0, self.next_id)
            self._domain_time += ctx.domain_time
            self.stats.concretizations += ctx.concretizations
            if ctx.pending:
                raise AssertionError("forced choices left unconsumed by a step")
            state.store = ctx.store
            state.pending = []
            state.step_count += 1
            if outcome is not None:
                state.status = outcome.status
                state.outcome = outcome
                self._absorb(state)
                return None

    def _absorb(self, state: ExecutionState) -> None:
        self._coverage |= state.coverage
        self._branch_cov |= state.branch_cov
