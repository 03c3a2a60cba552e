"""Per-path execution context handed to the program under exploration.

Program code never touches the constraint store directly.  It asks the
context to test a payload byte, choose a drop decision or concretize a
variable; the context decides whether the answer is forced, whether it
must fork (explore mode) or whether it comes from a recorded trace (replay
mode).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Union

from .. import symval
from ..probes import define_site
from ..symval import ConstraintStore, PredKind, Predicate
from .records import ChoiceKind, ChoiceRecord


@dataclass(frozen=True)
class Sym:
    """A payload byte whose value is the symbolic variable ``var``."""

    var: int

    def __repr__(self) -> str:
        return f"Sym({self.var})"


PayloadByte = Union[int, Sym]


class Fork(Exception):
    """Raised at a choice point with more than one feasible outcome.

    The engine restarts the current step once per label with the label forced.
    """

    def __init__(self, labels):
        super().__init__(labels)
        self.labels = list(labels)


class ReplayDivergence(Exception):
    """Replay reached a choice point that disagrees with the recorded trace."""


class Infeasible(AssertionError):
    """A hard assumption contradicted the path condition."""


DROPPED = "Dropped"
DELIVERED = "Delivered"


class PathContext:
    def __init__(self, store: ConstraintStore, trace: List[ChoiceRecord],
                 pending: Iterable = (), coverage: Optional[set] = None,
                 branch_cov: Optional[set] = None):
        self.store = store
        self.trace = trace
        self.pending = list(pending)
        self.coverage = coverage if coverage is not None else set()
        self.branch_cov = branch_cov if branch_cov is not None else set()
        self.concretizations = 0
        self.domain_time = 0.0

    # -- hooks overridden by ReplayContext -------------------------------
    def _next_record(self, kind: ChoiceKind) -> Optional[ChoiceRecord]:
        return None

    def _bind_fresh(self, var: int) -> None:
        pass

    # -- bookkeeping -------------------------------------------------------
    def hit(self, probe: str) -> None:
        self.coverage.add(probe)

    def _record(self, kind: ChoiceKind, **detail) -> None:
        self.trace.append(ChoiceRecord.make(len(self.trace), kind, **detail))

    def _forced(self):
        if self.pending:
            return self.pending.pop(0)
        return None

    # -- symbolic operations ----------------------------------------------
    def fresh(self) -> Sym:
        t = time.perf_counter()
        var, self.store = symval.fresh_var(self.store)
        self._bind_fresh(var)
        self.domain_time += time.perf_counter() - t
        return Sym(var)

    def test(self, site: str, value: PayloadByte, kind: PredKind, constant: int,
             mask: int = 0xFF) -> bool:
        """Evaluate a unary byte predicate; forks when ``value`` is symbolic and undecided."""
        if not isinstance(value, Sym):
            label = Predicate(0, kind, constant, mask).holds(value)
            self.branch_cov.add((site, label))
            return label
        pred = Predicate(value.var, kind, constant, mask)
        t = time.perf_counter()
        try:
            rec = self._next_record(ChoiceKind.PREDICATE_BRANCH)
            if rec is not None:
                info = rec.info
                if info["predicate"] != pred.to_json():
                    raise ReplayDivergence(f"expected {info['predicate']}, reached {pred}")
                label = info["label"]
                s = symval.assume(self.store, pred if label else pred.negate())
                if s is None:
                    raise ReplayDivergence(f"recorded branch {label} of {pred} is infeasible")
                forked = info["forked"]
            else:
                branches = symval.decide(self.store, pred)
                forked = len(branches) == 2
                if not forked:
                    label, s = branches[0]
                else:
                    label = self._forced()
                    if label is None:
                        raise Fork([True, False])
                    s = dict(branches)[label]
            self.store = s
        finally:
            self.domain_time += time.perf_counter() - t
        self._record(ChoiceKind.PREDICATE_BRANCH, site=site, predicate=pred.to_json(),
                     label=label, forked=forked)
        self.branch_cov.add((site, label))
        return label

    def constrain(self, value: PayloadByte, kind: PredKind, constant: int, mask: int = 0xFF) -> None:
        """Hard assumption on a byte (no branching); violating it is an internal error."""
        if not isinstance(value, Sym):
            if not Predicate(0, kind, constant, mask).holds(value):
                raise Infeasible(f"{value} violates {kind}")
            return
        s = symval.assume(self.store, Predicate(value.var, kind, constant, mask))
        if s is None:
            raise Infeasible(f"assumption on v{value.var} is unsatisfiable")
        self.store = s

    def concrete(self, value: PayloadByte) -> int:
        """Return a concrete byte, concretizing a symbolic one to its witness."""
        if not isinstance(value, Sym):
            return value
        t = time.perf_counter()
        byte, self.store = symval.concretize(self.store, value.var)
        self.domain_time += time.perf_counter() - t
        rec = self._next_record(ChoiceKind.CONCRETIZATION)
        if rec is not None and (rec.info["var"], rec.info["value"]) != (value.var, byte):
            raise ReplayDivergence(f"concretization of v{value.var} gave {byte}, recorded {rec.info}")
        self._record(ChoiceKind.CONCRETIZATION, var=value.var, value=byte)
        self.concretizations += 1
        return byte

    def drop_choice(self, transmit_index: int) -> bool:
        """Symbolic drop decision for one transmitted datagram; True means dropped."""
        rec = self._next_record(ChoiceKind.PACKET_DROP)
        if rec is not None:
            if rec.info["transmit_index"] != transmit_index:
                raise ReplayDivergence(
                    f"drop choice for packet {transmit_index}, recorded {rec.info['transmit_index']}")
            decision = rec.info["decision"]
        else:
            decision = self._forced()
            if decision is None:
                raise Fork([DELIVERED, DROPPED])
        self._record(ChoiceKind.PACKET_DROP, transmit_index=transmit_index, decision=decision)
        self.branch_cov.add(("channel.drop", decision))
        return decision == DROPPED


define_site("channel.drop")


class ReplayContext(PathContext):
    """Follows a recorded choice list; fresh variables are bound to their witnesses."""

    def __init__(self, records: List[ChoiceRecord], witnesses: Dict[int, int]):
        super().__init__(ConstraintStore(), [])
        self._records = list(records)
        self._cursor = 0
        self.witnesses = witnesses

    def _next_record(self, kind: ChoiceKind) -> ChoiceRecord:
        if self._cursor >= len(self._records):
            raise ReplayDivergence(f"trace exhausted at a {kind.value} choice point")
        rec = self._records[self._cursor]
        if rec.kind is not kind:
            raise ReplayDivergence(
                f"choice {rec.choice_id}: recorded {rec.kind.value}, reached {kind.value}")
        self._cursor += 1
        return rec

    def _bind_fresh(self, var: int) -> None:
        if var not in self.witnesses:
            raise ReplayDivergence(f"no witness for v{var}")
        s = symval.assume(self.store, symval.Eq(var, self.witnesses[var]))
        if s is None:
            raise ReplayDivergence(f"witness for v{var} out of range")
        self.store = s

    def finish(self) -> None:
        if self._cursor != len(self._records):
            raise ReplayDivergence(
                f"path ended with {len(self._records) - self._cursor} unconsumed choices")
