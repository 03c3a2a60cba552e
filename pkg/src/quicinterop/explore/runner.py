"""Top-level entry points: explore a configuration, replay a test case."""

from __future__ import annotations

from typing import Optional

from .context import Fork, ReplayContext, ReplayDivergence
from .demo import BranchDemo
from .engine import Explorer, Limits, RunReport
from .records import Outcome, Status, TestCase


def build_program(config_name: str, params: dict):
    if params.get("program") == BranchDemo.config_name:
        return BranchDemo()
    from ..harness import HarnessParams, QuicProgram

    return QuicProgram(HarnessParams.from_json(params["harness"]), config_name,
                       {k: v for k, v in params.items() if k != "harness"})


def run(config) -> RunReport:
    """Explore ``config`` (a :class:`~quicinterop.config.RunConfig`)."""
    from ..harness import QuicProgram

    program = QuicProgram(config.harness_params(), config.config_name, config.describe())
    return Explorer(program, config.strategy, config.seed, config.limits).run()


def replay(tc: TestCase, max_steps: Optional[int] = None, program=None) -> Outcome:
    """Re-execute ``tc`` concretely, following its recorded choices.

    ``program`` defaults to the one described by the case's own parameters.
    """
    program = program or build_program(tc.config, tc.params)
    if max_steps is None:
        max_steps = tc.params.get("limits", {}).get("max_steps_per_path", Limits().max_steps_per_path)
    ctx = ReplayContext(tc.choices, tc.witnesses)
    world = program.initial_world()
    outcome = None
    for _ in range(max_steps):
        try:
            outcome = program.step(world, ctx)
        except Fork as f:
            raise ReplayDivergence(f"unrecorded choice point with outcomes {f.labels}") from None
        if outcome is not None:
            break
    else:
        outcome = Outcome(Status.LIMIT_EXCEEDED)
    ctx.finish()
    return outcome
