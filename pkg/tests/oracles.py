"""Independent oracles used by the tests.

The drop oracles bypass the exploration engine: drop assignments are
enumerated explicitly and each one is executed concretely from scratch.
The snapshot check drives the engine's fork step directly.
"""

from __future__ import annotations

import pickle
import random
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from quicinterop.explore.context import DELIVERED, DROPPED, PathContext, ReplayContext
from quicinterop.explore.engine import ExecutionState, Explorer
from quicinterop.explore.runner import build_program
from quicinterop.explore.records import Outcome, Status
from quicinterop.harness import HarnessParams, QuicProgram, WorldState
from quicinterop.symval import ConstraintStore, Predicate

Trace = Tuple[Tuple[int, str], ...]


class FixedDrops(PathContext):
    """Context whose drop decisions come from a fixed set of transmit indices."""

    def __init__(self, drops: FrozenSet[int]):
        super().__init__(ConstraintStore(), [])
        self.drops = drops
        self.decisions: List[Tuple[int, str]] = []

    def drop_choice(self, transmit_index: int) -> bool:
        dropped = transmit_index in self.drops
        self.decisions.append((transmit_index, DROPPED if dropped else DELIVERED))
        return dropped

    def test(self, site, value, kind, constant, mask=0xFF):
        if not isinstance(value, int):
            raise AssertionError("the drop oracle only handles concrete payloads")
        return Predicate(0, kind, constant, mask).holds(value)


def concrete_run(params: HarnessParams, drops=frozenset(), max_steps: int = 100_000
                 ) -> Tuple[Trace, Outcome, WorldState]:
    program = QuicProgram(params)
    world = program.initial_world()
    ctx = FixedDrops(frozenset(drops))
    for _ in range(max_steps):
        outcome = program.step(world, ctx)
        if outcome is not None:
            return tuple(ctx.decisions), outcome, world
    return tuple(ctx.decisions), Outcome(Status.LIMIT_EXCEEDED), world


def enumerate_drop_paths(params: HarnessParams, max_drops: Optional[int]
                         ) -> Dict[Trace, Tuple[FrozenSet[int], Outcome]]:
    """Every drop subset of size <= max_drops that can actually occur on some run.

    A subset S is feasible iff each of its indices is transmitted on the run
    that drops only the smaller members of S; we grow subsets in index order.
    """
    found: Dict[Trace, Tuple[FrozenSet[int], Outcome]] = {}
    stack = [frozenset()]
    while stack:
        subset = stack.pop()
        trace, outcome, _ = concrete_run(params, subset)
        assert {i for i, d in trace if d == DROPPED} == subset
        assert trace not in found
        found[trace] = (subset, outcome)
        if max_drops is not None and len(subset) >= max_drops:
            continue
        top = max(subset, default=-1)
        for i, _ in trace:
            if i > top:
                stack.append(subset | {i})
    return found


def brute_domain(preds, var: int = 0) -> List[int]:
    return [v for v in range(256) if all(p.holds(v) for p in preds if p.var == var)]


def _snapshot(state: ExecutionState) -> bytes:
    return state.serialize() + pickle.dumps((state.store, state.trace, state.pending))


def snapshot_isolation(programs: Sequence, forks: int = 1000, seed: int = 0) -> Tuple[int, int]:
    """Fork at random frontier states; advance one child and re-serialize its siblings.

    Returns (forks checked, siblings whose serialization changed).
    """
    rng = random.Random(seed)
    checked = changed = 0
    while checked < forks:
        program = rng.choice(programs)
        explorer = Explorer(program)
        pool = [ExecutionState(explorer.next_id(), None, program.initial_world())]
        while pool and checked < forks:
            children = explorer._advance(pool.pop(rng.randrange(len(pool))))
            if not children:
                continue
            before = [_snapshot(c) for c in children]
            mover = rng.randrange(len(children))
            grandchildren = explorer._advance(children[mover]) or []
            siblings = [(c, b) for i, (c, b) in enumerate(zip(children, before)) if i != mover]
            changed += sum(_snapshot(c) != b for c, b in siblings)
            checked += 1
            pool.extend(c for c, _ in siblings)
            pool.extend(grandchildren)
    return checked, changed


def replay_world(tc) -> Tuple[Outcome, object]:
    """Like :func:`quicinterop.replay`, but also hands back the final world."""
    program = build_program(tc.config, tc.params)
    ctx = ReplayContext(tc.choices, tc.witnesses)
    world = program.initial_world()
    limit = tc.params.get("limits", {}).get("max_steps_per_path", 100_000)
    for _ in range(limit):
        outcome = program.step(world, ctx)
        if outcome is not None:
            break
    else:
        outcome = Outcome(Status.LIMIT_EXCEEDED)
    ctx.finish()
    return outcome, world
