"""Global plans: ordered plan units, each an ordered block of executable steps."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .errors import PlanningError

SYNTHESIZED = "synthesized"
REUSED = "reused"
GAP_FILLED = "gap-filled"
PROVENANCES = (SYNTHESIZED, REUSED, GAP_FILLED)


@dataclass(frozen=True)
class PlanStep:
    verb: str
    object: str | None = None
    text: str | None = None
    # placeholder type the text was bound from, so a reused plan can rebind it
    param: str | None = None

    def describe(self) -> str:
        return " ".join(p for p in (self.verb, self.object or "", self.text or "") if p)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"verb": self.verb}
        for k in ("object", "text", "param"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PlanStep":
        return cls(d["verb"], d.get("object"), d.get("text"), d.get("param"))


@dataclass(frozen=True)
class PlanUnit:
    slot: str
    env: str
    act: str
    desc: str
    steps: tuple[PlanStep, ...]
    provenance: str = SYNTHESIZED
    sources: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise PlanningError(f"unknown provenance {self.provenance!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "slot": self.slot,
            "env": self.env,
            "act": self.act,
            "desc": self.desc,
            "steps": [s.to_dict() for s in self.steps],
            "provenance": self.provenance,
            "sources": list(self.sources),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PlanUnit":
        return cls(d["slot"], d["env"], d["act"], d["desc"], tuple(PlanStep.from_dict(s) for s in d["steps"]),
                   d.get("provenance", SYNTHESIZED), tuple(d.get("sources", ())))


@dataclass(frozen=True)
class GlobalPlan:
    units: tuple[PlanUnit, ...]
    command: str = ""

    @property
    def steps(self) -> list[PlanStep]:
        return [s for u in self.units for s in u.steps]

    @property
    def n_steps(self) -> int:
        return sum(len(u.steps) for u in self.units)

    def validate(self, vocabulary: Iterable[str]) -> "GlobalPlan":
        vocab = set(vocabulary)
        if not self.units:
            raise PlanningError("a plan needs at least one plan unit")
        for u in self.units:
            for s in u.steps:
                if s.verb not in vocab:
                    raise PlanningError(f"unit {u.slot!r}: verb {s.verb!r} is not in the vocabulary")
        return self

    def with_provenance(self, provenance: str, sources: Sequence[str] = ()) -> "GlobalPlan":
        return replace(self, units=tuple(replace(u, provenance=provenance, sources=tuple(sources)) for u in self.units))

    def to_dict(self) -> dict[str, Any]:
        return {"command": self.command, "units": [u.to_dict() for u in self.units]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GlobalPlan":
        return cls(tuple(PlanUnit.from_dict(u) for u in d["units"]), d.get("command", ""))
