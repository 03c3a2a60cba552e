"""Symbolic byte variables over explicitly enumerable value domains.

A domain is a 256-bit integer used as a membership bitset: bit ``b`` is set
iff byte value ``b`` is still possible.  Every predicate mentions exactly one
variable, so feasibility is decided exactly by intersecting bitsets.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

FULL_DOMAIN = (1 << 256) - 1


class PredKind(str, enum.Enum):
    EQ = "Eq"
    NE = "Ne"
    LT = "Lt"
    GE = "Ge"
    MASK_EQ = "MaskEq"
    MASK_NE = "MaskNe"


class UnknownVariable(LookupError):
    """Raised when a predicate or query names a variable the store never allocated."""


class EmptyDomain(AssertionError):
    """Internal invariant violation: a path carries a variable with no feasible value."""


@dataclass(frozen=True)
class Predicate:
    var: int
    kind: PredKind
    constant: int
    mask: int = 0xFF

    def holds(self, value: int) -> bool:
        k = self.kind
        if k is PredKind.EQ:
            return value == self.constant
        if k is PredKind.NE:
            return value != self.constant
        if k is PredKind.LT:
            return value < self.constant
        if k is PredKind.GE:
            return value >= self.constant
        if k is PredKind.MASK_EQ:
            return value & self.mask == self.constant
        return value & self.mask != self.constant

    def negate(self) -> "Predicate":
        return Predicate(self.var, _NEGATION[self.kind], self.constant, self.mask)

    def to_json(self) -> dict:
        return {"var": self.var, "kind": self.kind.value,
                "constant": self.constant, "mask": self.mask}

    @classmethod
    def from_json(cls, d: dict) -> "Predicate":
        return cls(d["var"], PredKind(d["kind"]), d["constant"], d["mask"])

    def __str__(self) -> str:
        sym = {PredKind.EQ: "==", PredKind.NE: "!=", PredKind.LT: "<", PredKind.GE: ">="}
        if self.kind in sym:
            return f"v{self.var}{sym[self.kind]}{self.constant}"
        op = "==" if self.kind is PredKind.MASK_EQ else "!="
        return f"v{self.var}&{self.mask:#04x}{op}{self.constant:#04x}"


_NEGATION = {
    PredKind.EQ: PredKind.NE,
    PredKind.NE: PredKind.EQ,
    PredKind.LT: PredKind.GE,
    PredKind.GE: PredKind.LT,
    PredKind.MASK_EQ: PredKind.MASK_NE,
    PredKind.MASK_NE: PredKind.MASK_EQ,
}


def Eq(var: int, c: int) -> Predicate:
    return Predicate(var, PredKind.EQ, c)


def Ne(var: int, c: int) -> Predicate:
    return Predicate(var, PredKind.NE, c)


def Lt(var: int, c: int) -> Predicate:
    return Predicate(var, PredKind.LT, c)


def Ge(var: int, c: int) -> Predicate:
    return Predicate(var, PredKind.GE, c)


def MaskEq(var: int, mask: int, c: int) -> Predicate:
    return Predicate(var, PredKind.MASK_EQ, c, mask)


@lru_cache(maxsize=4096)
def _satisfying(kind: PredKind, constant: int, mask: int) -> int:
    probe = Predicate(0, kind, constant, mask)
    bits = 0
    for b in range(256):
        if probe.holds(b):
            bits |= 1 << b
    return bits


def members(domain: int) -> List[int]:
    return [b for b in range(256) if domain >> b & 1]


def _min_member(domain: int) -> int:
    if not domain:
        raise EmptyDomain("empty domain on a feasible path")
    return (domain & -domain).bit_length() - 1


@dataclass(frozen=True)
class ConstraintStore:
    """Path condition: one bitset per variable plus the ordered predicate history.

    Instances are never mutated; every operation returns a new store.
    """

    domains: Tuple[int, ...] = ()
    history: Tuple[Predicate, ...] = ()
    concretized: frozenset = frozenset()

    @property
    def num_vars(self) -> int:
        return len(self.domains)

    def domain(self, var: int) -> int:
        self._check(var)
        return self.domains[var]

    def values(self, var: int) -> List[int]:
        return members(self.domain(var))

    def _check(self, var: int) -> None:
        if not 0 <= var < len(self.domains):
            raise UnknownVariable(f"unknown symbolic variable v{var}")

    def _with_domain(self, var: int, dom: int, pred: Optional[Predicate]) -> "ConstraintStore":
        doms = self.domains[:var] + (dom,) + self.domains[var + 1:]
        hist = self.history + (pred,) if pred is not None else self.history
        return ConstraintStore(doms, hist, self.concretized)


def fresh_var(store: ConstraintStore) -> Tuple[int, ConstraintStore]:
    var = len(store.domains)
    return var, ConstraintStore(store.domains + (FULL_DOMAIN,), store.history, store.concretized)


def assume(store: ConstraintStore, p: Predicate) -> Optional[ConstraintStore]:
    """Conjoin ``p``; returns the narrowed store, or None when unsatisfiable."""
    dom = store.domain(p.var) & _satisfying(p.kind, p.constant, p.mask)
    if not dom:
        return None
    return store._with_domain(p.var, dom, p)


def decide(store: ConstraintStore, p: Predicate) -> List[Tuple[bool, ConstraintStore]]:
    """Feasible branches of ``p`` in declaration order (True first)."""
    out = []
    for label, pred in ((True, p), (False, p.negate())):
        s = assume(store, pred)
        if s is not None:
            out.append((label, s))
    if not out:
        raise EmptyDomain(f"no feasible branch for {p}")
    return out


def witness(store: ConstraintStore, var: int) -> int:
    return _min_member(store.domain(var))


def concretize(store: ConstraintStore, var: int) -> Tuple[int, ConstraintStore]:
    value = witness(store, var)
    s = store._with_domain(var, 1 << value, Eq(var, value)) if store.domains[var] != 1 << value else store
    return value, ConstraintStore(s.domains, s.history, store.concretized | {var})
