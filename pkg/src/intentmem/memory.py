"""Retrieval over the intent hierarchy, and the store of approved plans."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import CorruptFileError, PlanningError, PersistenceError
from .hierarchy import IntentHierarchy, SubGroup, hierarchy_from_doc, hierarchy_to_doc
from .persist import as_vector, read_document, vector_list, write_document
from .plans import GlobalPlan
from .trace_model import IntentUnit, unit_from_record, unit_to_record

APPROVED = "approved"
REJECTED = "rejected"


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass
class IntentIndex:
    hierarchy: IntentHierarchy
    units: dict[str, IntentUnit]
    embeddings: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        for sg in self.hierarchy.subgroups():
            for rid in sg.representative_ids:
                if rid not in self.units or rid not in self.embeddings:
                    raise CorruptFileError(f"representative {rid!r} of {sg.id} does not resolve")
        self._sgs = {sg.id: sg for sg in self.hierarchy.subgroups()}

    @property
    def empty(self) -> bool:
        return not self._sgs

    def sg(self, sg_id: str) -> SubGroup:
        return self._sgs[sg_id]

    def to_doc(self) -> dict[str, Any]:
        return {
            "hierarchy": hierarchy_to_doc(self.hierarchy),
            "units": [unit_to_record(self.units[k]) for k in sorted(self.units)],
            "embeddings": {k: vector_list(self.embeddings[k]) for k in sorted(self.embeddings)},
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any], source: str = "<memory>") -> "IntentIndex":
        try:
            h = hierarchy_from_doc(doc["hierarchy"], source)
            units = {}
            for rec in doc["units"]:
                u = unit_from_record(rec)
                units[u.id] = u
            embeddings = {k: as_vector(v) for k, v in doc["embeddings"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFileError(f"{source}: malformed intent index ({exc!r})") from exc
        return cls(h, units, embeddings)


def save_index(index: IntentIndex, path: str | Path) -> None:
    write_document(path, "index", index.to_doc())


def load_index(path: str | Path) -> IntentIndex:
    return IntentIndex.from_doc(read_document(path, "index"), str(path))


def query_sg(index: IntentIndex, ig_id: str | None, query_z: np.ndarray, top_k: int = 1) -> list[tuple[str, float]]:
    if index.empty:
        raise PlanningError("intent index is empty")
    q = np.asarray(query_z, dtype=float)
    cands = [sg for sg in index.hierarchy.subgroups() if ig_id is None or sg.ig_id == ig_id]
    scored = sorted(((-cosine(q, sg.centroid), sg.id) for sg in cands))
    return [(sid, -s) for s, sid in scored[:top_k]]


def active_ig(index: IntentIndex, query_z: np.ndarray) -> str | None:
    """IG whose centroid is most cosine-similar to the query, skipping the unassigned group."""
    q = np.asarray(query_z, dtype=float)
    scored = sorted((-cosine(q, g.centroid), g.id) for g in index.hierarchy.groups if not g.unassigned)
    return scored[0][1] if scored else None


def top_units(index: IntentIndex, sg_id: str, query_z: np.ndarray, k: int = 2) -> list[IntentUnit]:
    sg = index.sg(sg_id)
    q = np.asarray(query_z, dtype=float)
    scored = sorted((-cosine(q, index.embeddings[uid]), uid) for uid in sg.representative_ids)
    return [index.units[uid] for _, uid in scored[:k]]


# ---------------------------------------------------------------------------
# plan memory


@dataclass(frozen=True)
class PlanEntry:
    plan_id: str
    prototype: np.ndarray
    ig_id: str | None
    env_labels: tuple[str, ...]
    act_labels: tuple[str, ...]
    plan: GlobalPlan
    approval: str = APPROVED
    sequence: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "plan_id": self.plan_id,
            "prototype": vector_list(self.prototype),
            "ig_id": self.ig_id,
            "env_labels": list(self.env_labels),
            "act_labels": list(self.act_labels),
            "plan": self.plan.to_dict(),
            "approval": self.approval,
            "sequence": self.sequence,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PlanEntry":
        return cls(d["plan_id"], as_vector(d["prototype"]), d["ig_id"], tuple(d["env_labels"]),
                   tuple(d["act_labels"]), GlobalPlan.from_dict(d["plan"]), d["approval"], int(d["sequence"]))


class PlanMemory:
    """Approved plans only; persisted after every accepted write when a path is set."""

    def __init__(self, entries: Sequence[PlanEntry] = (), path: str | Path | None = None):
        self.entries: list[PlanEntry] = list(entries)
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, plan_id: str) -> PlanEntry:
        for e in self.entries:
            if e.plan_id == plan_id:
                return e
        raise PlanningError(f"no stored plan {plan_id!r}")

    def to_doc(self) -> dict[str, Any]:
        return {"entries": [e.to_dict() for e in self.entries]}

    def save(self, path: str | Path | None = None) -> None:
        target = Path(path) if path is not None else self.path
        if target is None:
            raise PersistenceError("plan memory has no path")
        write_document(target, "plan-memory", self.to_doc())

    @classmethod
    def load(cls, path: str | Path, missing_ok: bool = False) -> "PlanMemory":
        path = Path(path)
        if missing_ok and not path.exists():
            return cls(path=path)
        doc = read_document(path, "plan-memory")
        try:
            entries = [PlanEntry.from_dict(d) for d in doc["entries"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFileError(f"{path}: malformed plan memory ({exc!r})") from exc
        for e in entries:
            if e.approval != APPROVED:
                raise CorruptFileError(f"{path}: entry {e.plan_id} is not approved")
        if len({e.plan_id for e in entries}) != len(entries):
            raise CorruptFileError(f"{path}: duplicate plan ids")
        return cls(entries, path)


def query_plan(mem: PlanMemory, query_z: np.ndarray, ig_id: str | None) -> tuple[str, float] | None:
    q = np.asarray(query_z, dtype=float)
    best = None
    for e in mem.entries:
        if e.ig_id != ig_id:
            continue
        key = (-cosine(q, e.prototype), e.sequence)
        if best is None or key < best[0]:
            best = (key, e.plan_id)
    return (best[1], -best[0][0]) if best else None


def store_plan(mem: PlanMemory, plan: GlobalPlan, approval: str, prototype: np.ndarray, ig_id: str | None,
               env_labels: Sequence[str] = (), act_labels: Sequence[str] = ()) -> PlanEntry | None:
    if approval not in (APPROVED, REJECTED):
        raise PlanningError(f"approval must be {APPROVED!r} or {REJECTED!r}")
    if approval == REJECTED:
        return None
    with mem._lock:
        seq = len(mem.entries) + 1
        entry = PlanEntry(f"plan-{seq:04d}", np.array(prototype, dtype=float), ig_id, tuple(env_labels),
                          tuple(act_labels), plan, APPROVED, seq)
        mem.entries.append(entry)
        if mem.path is not None:
            mem.save()
    return entry
