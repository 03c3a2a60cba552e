"""Serializable records produced by exploration: choices, fault signatures, test cases."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

TCFMT = "tcfmt=1"


class ChoiceKind(str, enum.Enum):
    PACKET_DROP = "PacketDrop"
    PREDICATE_BRANCH = "PredicateBranch"
    CONCRETIZATION = "Concretization"


@dataclass(frozen=True)
class ChoiceRecord:
    choice_id: int
    kind: ChoiceKind
    detail: Tuple[Tuple[str, Any], ...]

    @property
    def info(self) -> Dict[str, Any]:
        return dict(self.detail)

    def to_json(self) -> dict:
        return {"choice_id": self.choice_id, "kind": self.kind.value, "detail": self.info}

    @classmethod
    def from_json(cls, d: dict) -> "ChoiceRecord":
        return cls(d["choice_id"], ChoiceKind(d["kind"]), tuple(sorted(d["detail"].items())))

    @classmethod
    def make(cls, choice_id: int, kind: ChoiceKind, **detail) -> "ChoiceRecord":
        return cls(choice_id, kind, tuple(sorted(detail.items())))


class FaultKind(str, enum.Enum):
    INTEROP_DIVERGENCE = "InteropDivergence"
    SCENARIO_UNFULFILLED = "ScenarioUnfulfilled"
    LIFECYCLE_FAULT = "LifecycleFault"
    GUARD_FAULT = "GuardFault"
    INVALID_TRANSITION = "InvalidTransition"


class Status(str, enum.Enum):
    ACTIVE = "Active"
    FINISHED_OK = "FinishedOk"
    FINISHED_ERROR = "FinishedError"
    LIMIT_EXCEEDED = "LimitExceeded"


@dataclass(frozen=True)
class FaultSignature:
    """Deduplication key: two faults are the same error iff all four fields match."""

    kind: FaultKind
    endpoint: str  # Client | Server | Channel
    probe: str
    defect_tag: Optional[str] = None

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "endpoint": self.endpoint,
                "probe": self.probe, "defect_tag": self.defect_tag}

    @classmethod
    def from_json(cls, d: dict) -> "FaultSignature":
        return cls(FaultKind(d["kind"]), d["endpoint"], d["probe"], d["defect_tag"])

    def __str__(self) -> str:
        tag = f" [{self.defect_tag}]" if self.defect_tag else ""
        return f"{self.kind.value}@{self.endpoint}:{self.probe}{tag}"


@dataclass(frozen=True)
class Outcome:
    status: Status
    faults: Tuple[FaultSignature, ...] = ()

    def to_json(self) -> dict:
        return {"status": self.status.value, "faults": [f.to_json() for f in self.faults]}

    @classmethod
    def from_json(cls, d: dict) -> "Outcome":
        return cls(Status(d["status"]), tuple(FaultSignature.from_json(f) for f in d["faults"]))

    @classmethod
    def of(cls, faults) -> "Outcome":
        faults = tuple(faults)
        return cls(Status.FINISHED_ERROR if faults else Status.FINISHED_OK, faults)


@dataclass
class TestCase:
    __test__ = False  # keep pytest from collecting this

    scenario: str
    config: str
    defects: List[str]
    choices: List[ChoiceRecord]
    witnesses: Dict[int, int]
    outcome: Outcome
    params: Dict[str, Any] = field(default_factory=dict)

    def dropped_indices(self) -> Tuple[int, ...]:
        return tuple(c.info["transmit_index"] for c in self.choices
                     if c.kind is ChoiceKind.PACKET_DROP and c.info["decision"] == "Dropped")

    def drop_trace(self) -> Tuple[Tuple[int, str], ...]:
        return tuple((c.info["transmit_index"], c.info["decision"]) for c in self.choices
                     if c.kind is ChoiceKind.PACKET_DROP)

    def to_json(self) -> dict:
        return {
            "version": TCFMT,
            "scenario": self.scenario,
            "config": self.config,
            "defects": sorted(self.defects),
            "params": self.params,
            "choices": [c.to_json() for c in self.choices],
            "witnesses": {str(k): v for k, v in sorted(self.witnesses.items())},
            "outcome": self.outcome.to_json(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, d: dict) -> "TestCase":
        if d.get("version") != TCFMT:
            raise ValueError(f"unsupported test case format {d.get('version')!r}")
        return cls(
            scenario=d["scenario"],
            config=d["config"],
            defects=list(d["defects"]),
            choices=[ChoiceRecord.from_json(c) for c in d["choices"]],
            witnesses={int(k): v for k, v in d["witnesses"].items()},
            outcome=Outcome.from_json(d["outcome"]),
            params=dict(d.get("params", {})),
        )

    @classmethod
    def loads(cls, text: str) -> "TestCase":
        return cls.from_json(json.loads(text))


class Fault(Exception):
    """Raised by program code when a robustness fault terminates the path."""

    def __init__(self, signature: FaultSignature):
        super().__init__(str(signature))
        self.signature = signature
