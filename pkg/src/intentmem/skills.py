"""Skill induction from the action traces of one subgroup.

The prototype is the member trace whose verb signature has the smallest total
edit distance to all others (a true medoid, always an observed trace). It is
turned into a reusable schema by pruning non-goal steps and replacing literal
argument values with typed placeholders such as ``<url>`` or ``<query>``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Sequence

from .errors import DegenerateSkillError, UnresolvedVerbError
from .trace_model import ActionStep, AliasMap, IntentUnit, VerbSignature, canonicalize_action, signature_of
from .trace_model import step_from_record, step_to_record

if TYPE_CHECKING:
    from .hierarchy import IntentHierarchy

PARAM_TYPES = ("url", "query", "file_path", "text", "app_name")
_PLACEHOLDER = re.compile(r"^<(url|query|file_path|text|app_name)>$")
_URL = re.compile(r"^(https?://|www\.)\S+$", re.IGNORECASE)
_PATH = re.compile(r"^([A-Za-z]:[\\/]|/|~[\\/]|\.{1,2}[\\/])\S*$|^[^\s/\\]+\.[A-Za-z0-9]{1,5}$")


@dataclass(frozen=True)
class SignatureDistance:
    raw: int
    value: float


@dataclass(frozen=True)
class SkillConfig:
    tau_support: float = 0.8
    prune_verbs: tuple[str, ...] = ("wait",)
    top_k: int = 5
    min_support: int = 2


@dataclass(frozen=True)
class SkillHint:
    sg_id: str
    verb_sequence: VerbSignature
    steps: tuple[ActionStep, ...]
    arg_schema: tuple[str, ...]
    support: int = 0
    source_trace_ids: tuple[str, ...] = ()
    rank: int = 0
    is_medoid: bool = False
    prototype_id: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "sg_id": self.sg_id,
            "verb_sequence": list(self.verb_sequence),
            "steps": [step_to_record(s) for s in self.steps],
            "arg_schema": list(self.arg_schema),
            "support": self.support,
            "source_trace_ids": list(self.source_trace_ids),
            "rank": self.rank,
            "is_medoid": self.is_medoid,
            "prototype_id": self.prototype_id,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SkillHint":
        return cls(
            sg_id=doc["sg_id"],
            verb_sequence=tuple(doc["verb_sequence"]),
            steps=tuple(step_from_record(s) for s in doc["steps"]),
            arg_schema=tuple(doc["arg_schema"]),
            support=int(doc["support"]),
            source_trace_ids=tuple(doc["source_trace_ids"]),
            rank=int(doc["rank"]),
            is_medoid=bool(doc["is_medoid"]),
            prototype_id=doc.get("prototype_id", ""),
        )


# ---------------------------------------------------------------------------
# signature distance and medoid


def _check_signature(sig: Sequence[str]) -> None:
    for i, v in enumerate(sig):
        if not isinstance(v, str) or not v:
            raise UnresolvedVerbError(repr(v), reason=f"signature position {i} is unresolved")


def levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def d_sig(a: Sequence[str], b: Sequence[str]) -> SignatureDistance:
    _check_signature(a)
    _check_signature(b)
    raw = levenshtein(a, b)
    longest = max(len(a), len(b))
    return SignatureDistance(raw, raw / longest if longest else 0.0)


def medoid(candidates: Sequence[tuple[str, Sequence[str]]]) -> str:
    """Candidate with minimal summed normalized distance; ties on raw total, then id."""
    if not candidates:
        raise ValueError("medoid needs at least one candidate")
    best_key = None
    best_id = ""
    for cid, sig in candidates:
        dists = [d_sig(sig, other) for _, other in candidates]
        key = (sum(d.value for d in dists), sum(d.raw for d in dists), cid)
        if best_key is None or key < best_key:
            best_key, best_id = key, cid
    return best_id


# ---------------------------------------------------------------------------
# parameterization


def is_placeholder(value: str) -> bool:
    return bool(_PLACEHOLDER.match(value))


def classify_value(field_type: str, value: str, target: str | None = None) -> str:
    """Refine a declared field type from the literal it holds."""
    if field_type != "text":
        return field_type
    v = value.strip()
    if _URL.match(v):
        return "url"
    if _PATH.match(v):
        return "file_path"
    if target and "search" in target.lower():
        return "query"
    return "text"


def prune_steps(actions: Sequence[ActionStep], prune_verbs: Iterable[str] = ("wait",)) -> list[ActionStep]:
    drop = set(prune_verbs)
    return [a for a in actions if not a.is_recovery and a.verb not in drop]


def parameterize(prototype_trace: Sequence[ActionStep], phi: AliasMap, prune_verbs: Iterable[str] = ("wait",),
                 sg_id: str = "", prototype_id: str = "") -> SkillHint:
    steps = [canonicalize_action(a, phi) for a in prototype_trace]
    kept = prune_steps(steps, prune_verbs)
    if not kept:
        raise DegenerateSkillError(f"prototype {prototype_id or '?'} is empty after pruning")
    out: list[ActionStep] = []
    schema: list[str] = []
    for step in kept:
        args = dict(step.args)
        for fname, value in step.args.items():
            ftype = phi.field_type(step.verb, fname)
            if ftype not in PARAM_TYPES:
                continue
            if is_placeholder(value):
                token = value
            else:
                token = f"<{classify_value(ftype, value, step.args.get('target', step.object))}>"
            args[fname] = token
            if token not in schema:
                schema.append(token)
        out.append(ActionStep(raw=step.raw, verb=step.verb, args=args, object=step.object, flags=()))
    return SkillHint(sg_id, signature_of(out), tuple(out), tuple(schema), prototype_id=prototype_id)


def support_of(signature: Sequence[str], members: Iterable[Sequence[str]], tau_support: float) -> int:
    return sum(1 for m in members if 1.0 - d_sig(m, signature).value >= tau_support - 1e-12)


def support_and_rank(members: Sequence[Sequence[str]], schemas: Sequence[SkillHint], tau_support: float) -> list[SkillHint]:
    scored = [replace(s, support=support_of(s.verb_sequence, members, tau_support)) for s in schemas]
    scored.sort(key=lambda s: (-s.support, not s.is_medoid, s.verb_sequence))
    return [replace(s, rank=i) for i, s in enumerate(scored, start=1)]


def representative_traces(members: Sequence[tuple[str, Sequence[str]]], prototype: Sequence[str], k: int = 5) -> list[str]:
    keyed = []
    for mid, sig in members:
        d = d_sig(sig, prototype)
        keyed.append((d.value, d.raw, mid))
    return [mid for _, _, mid in sorted(keyed)[:k]]


# ---------------------------------------------------------------------------
# per-subgroup induction


def induce_for_members(sg_id: str, units: Sequence[IntentUnit], phi: AliasMap,
                       cfg: SkillConfig = SkillConfig()) -> list[SkillHint]:
    """Ranked skill hints for one subgroup; empty when no member carries actions."""
    pruned: list[tuple[str, VerbSignature, IntentUnit]] = []
    for u in sorted(units, key=lambda u: u.id):
        if not u.actions:
            continue
        steps = prune_steps([canonicalize_action(a, phi) for a in u.actions], cfg.prune_verbs)
        if steps:
            pruned.append((u.id, signature_of(steps), u))
    if not pruned:
        return []
    sigs = [(uid, sig) for uid, sig, _ in pruned]
    proto_id = medoid(sigs)
    by_id = {uid: (sig, u) for uid, sig, u in pruned}
    proto_sig = by_id[proto_id][0]
    member_sigs = [sig for _, sig in sigs]

    chosen: dict[VerbSignature, tuple[str, bool]] = {proto_sig: (proto_id, True)}
    for uid, sig in sigs:
        if sig in chosen:
            continue
        if support_of(sig, member_sigs, cfg.tau_support) >= cfg.min_support:
            chosen[sig] = (uid, False)

    schemas = []
    for sig, (uid, is_med) in chosen.items():
        hint = parameterize(by_id[uid][1].actions, phi, cfg.prune_verbs, sg_id=sg_id, prototype_id=uid)
        reps = representative_traces(sigs, sig, cfg.top_k)
        schemas.append(replace(hint, is_medoid=is_med, source_trace_ids=tuple(reps)))
    return support_and_rank(member_sigs, schemas, cfg.tau_support)


def induce_skills(hierarchy: "IntentHierarchy", units: Mapping[str, IntentUnit], phi: AliasMap,
                  cfg: SkillConfig = SkillConfig()) -> "IntentHierarchy":
    """Attach ranked skill hints to every subgroup; returns a new hierarchy."""
    return hierarchy.with_hints({
        sg.id: induce_for_members(sg.id, [units[m] for m in sg.member_ids], phi, cfg)
        for sg in hierarchy.subgroups()
    })
