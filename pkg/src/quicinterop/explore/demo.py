"""Built-in two-branch program over one symbolic byte::

    x = symbolic byte
    if x < 5:    ...
    if x >= 100: ...
    return

Exploring it yields one path per reachable branch combination.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from ..probes import define_probes, define_site
from ..symval import PredKind
from .context import PathContext, Sym
from .engine import Explorer, Limits
from .records import ChoiceKind, Outcome, TestCase

SITE_LT5 = define_site("demo.x_lt_5")
SITE_GE100 = define_site("demo.x_ge_100")
P_SMALL, P_LARGE, P_RETURN = define_probes("demo.small", "demo.large", "demo.return")


@dataclass
class DemoWorld:
    pc: int = 0
    x: Optional[Sym] = None


class BranchDemo:
    config_name = "demo-fig1"

    def initial_world(self) -> DemoWorld:
        return DemoWorld()

    def step(self, w: DemoWorld, ctx: PathContext) -> Optional[Outcome]:
        if w.pc == 0:
            w.x = ctx.fresh()
        elif w.pc == 1:
            if ctx.test(SITE_LT5, w.x, PredKind.LT, 5):
                ctx.hit(P_SMALL)
        elif w.pc == 2:
            if ctx.test(SITE_GE100, w.x, PredKind.GE, 100):
                ctx.hit(P_LARGE)
        else:
            ctx.hit(P_RETURN)
            return Outcome.of(())
        w.pc += 1
        return None

    def scenario_of(self, w: DemoWorld) -> str:
        return "demo"

    def test_case_fields(self) -> dict:
        return {"defects": [], "params": {"program": "demo-fig1"}}


def path_constraints(tc: TestCase) -> List[str]:
    """Constraints contributed by branches that actually forked, rendered over ``x``."""
    out = []
    for c in tc.choices:
        if c.kind is ChoiceKind.PREDICATE_BRANCH and c.info["forked"]:
            pred = c.info["predicate"]
            op = {"Lt": "<", "Ge": ">="}[pred["kind"]]
            if not c.info["label"]:
                op = {"<": ">=", ">=": "<"}[op]
            out.append(f"x{op}{pred['constant']}")
    return out


def run_branch_demo(strategy: str = "dfs") -> List[Tuple[List[str], int]]:
    report = Explorer(BranchDemo(), strategy=strategy, limits=Limits()).run()
    return [(path_constraints(tc), tc.witnesses[0]) for tc in report.all_test_cases]


def demo_report(strategy: str = "dfs"):
    return Explorer(BranchDemo(), strategy=strategy).run()
