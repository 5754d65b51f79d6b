"""Intent units, action steps and alias-map canonicalization.

Trace files are line-delimited JSON, one intent unit per line::

    {"id": "u1", "kind": "control", "env": "...", "act": "...", "desc": "...",
     "actions": [{"raw": "focus URL bar", "verb": "press", "args": {...}}]}

Browsing units carry ``key`` instead of ``act``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import AliasMapError, TraceFormatError, UnresolvedVerbError

CONTROL = "control"
BROWSING = "browsing"
TRACE_KINDS = (CONTROL, BROWSING)

FIELD_TYPES = ("url", "query", "file_path", "text", "component_ref", "app_name")
VOCABULARY_SIZE = 17

# step flags that mark retries and other non-goal steps
RECOVERY_FLAGS = frozenset({"retry", "recovery", "incidental"})

VerbSignature = tuple[str, ...]


@dataclass(frozen=True)
class ActionStep:
    raw: str
    verb: str | None = None
    args: Mapping[str, str] = field(default_factory=dict)
    object: str | None = None
    flags: tuple[str, ...] = ()

    @property
    def is_recovery(self) -> bool:
        return any(f in RECOVERY_FLAGS for f in self.flags)


@dataclass(frozen=True)
class IntentUnit:
    """One labeled interaction unit: three view texts plus its action trace."""

    id: str
    kind: str
    env: str
    act_or_key: str
    desc: str
    actions: tuple[ActionStep, ...] = ()
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in TRACE_KINDS:
            raise ValueError(f"unknown trace kind {self.kind!r}")
        for name in ("env", "act_or_key", "desc"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"unit {self.id!r}: view {name} must be non-empty text")

    @property
    def middle_view(self) -> str:
        return "A" if self.kind == CONTROL else "K"

    def views(self) -> dict[str, str]:
        return {"E": self.env, self.middle_view: self.act_or_key, "D": self.desc}


@dataclass(frozen=True)
class AliasEntry:
    pattern: re.Pattern[str]
    verb: str
    fields: Mapping[str, str]
    priority: int = 0


@dataclass(frozen=True)
class AliasMap:
    vocabulary: tuple[str, ...]
    field_schema: Mapping[str, Mapping[str, str]]
    entries: tuple[AliasEntry, ...]

    def __post_init__(self) -> None:
        if len(self.vocabulary) != VOCABULARY_SIZE or len(set(self.vocabulary)) != VOCABULARY_SIZE:
            raise AliasMapError(f"vocabulary must list exactly {VOCABULARY_SIZE} distinct verbs")
        for verb in self.vocabulary:
            if verb not in self.field_schema:
                raise AliasMapError(f"verb {verb!r} has no field schema")
            for fname, ftype in self.field_schema[verb].items():
                if ftype not in FIELD_TYPES:
                    raise AliasMapError(f"{verb}.{fname}: unknown field type {ftype!r}")
        for entry in self.entries:
            if entry.verb not in self.vocabulary:
                raise AliasMapError(f"pattern {entry.pattern.pattern!r} maps to unknown verb {entry.verb!r}")
            unknown = set(entry.fields) - set(self.field_schema[entry.verb])
            if unknown:
                raise AliasMapError(f"pattern {entry.pattern.pattern!r}: fields {sorted(unknown)} not in schema")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AliasMap":
        try:
            entries = tuple(
                AliasEntry(
                    pattern=re.compile(p["pattern"], re.IGNORECASE),
                    verb=p["verb"],
                    fields=dict(p.get("fields", {})),
                    priority=int(p.get("priority", 0)),
                )
                for p in doc["patterns"]
            )
            return cls(
                vocabulary=tuple(doc["vocabulary"]),
                field_schema={k: dict(v) for k, v in doc["field_schema"].items()},
                entries=entries,
            )
        except (KeyError, TypeError, re.error) as exc:
            raise AliasMapError(f"malformed alias map: {exc}") from exc

    def field_type(self, verb: str, field_name: str) -> str:
        return self.field_schema[verb][field_name]

    def is_canonical(self, step: ActionStep) -> bool:
        if step.verb not in self.field_schema:
            return False
        return set(step.args) <= set(self.field_schema[step.verb])


def load_alias_map(path: str | Path | None = None) -> AliasMap:
    if path is None:
        text = resources.files("intentmem.data").joinpath("alias_map.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    try:
        return AliasMap.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise AliasMapError(f"alias map is not valid JSON: {exc}") from exc


def _strip_quotes(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        value = value[1:-1]
    return value


def canonicalize_action(step: ActionStep, phi: AliasMap) -> ActionStep:
    """Map a logged action onto its canonical verb and typed argument fields.

    Already-canonical steps are returned unchanged (apart from syncing ``object``
    with the ``target`` argument), which makes the operation idempotent.
    """
    if step.verb is not None and phi.is_canonical(step):
        obj = step.args.get("target", step.object)
        return step if obj == step.object else replace(step, object=obj)

    label = step.raw.strip()
    best: tuple[int, int] | None = None
    winners: list[tuple[AliasEntry, re.Match[str]]] = []
    for entry in phi.entries:
        m = entry.pattern.search(label)
        if m is None:
            continue
        key = (m.end() - m.start(), entry.priority)
        if best is None or key > best:
            best, winners = key, [(entry, m)]
        elif key == best:
            winners.append((entry, m))
    if not winners:
        raise UnresolvedVerbError(step.raw)
    if len(winners) > 1:
        raise UnresolvedVerbError(step.raw, reason=f"{len(winners)} alias patterns tie")

    entry, m = winners[0]
    groups = m.groupdict()
    args: dict[str, str] = {}
    for fname, template in entry.fields.items():
        names = re.findall(r"\{(\w+)\}", template)
        if any(groups.get(n) is None for n in names):
            continue
        args[fname] = _strip_quotes(template.format(**{n: groups[n] for n in names}))
    # explicit args logged with the step win over pattern captures
    for fname, value in step.args.items():
        if fname in phi.field_schema[entry.verb]:
            args[fname] = value
    return replace(step, verb=entry.verb, args=args, object=args.get("target", step.object))


def canonicalize_unit(unit: IntentUnit, phi: AliasMap) -> IntentUnit:
    return replace(unit, actions=tuple(canonicalize_action(a, phi) for a in unit.actions))


def signature_of(actions: Sequence[ActionStep], phi: AliasMap | None = None) -> VerbSignature:
    """Ordered verb predicates of a canonical trace."""
    verbs = []
    for i, step in enumerate(actions):
        if step.verb is None or (phi is not None and step.verb not in phi.field_schema):
            raise UnresolvedVerbError(step.raw, reason=f"step {i} has no canonical verb")
        verbs.append(step.verb)
    return tuple(verbs)


# ---------------------------------------------------------------------------
# trace file format


@dataclass(frozen=True)
class Diagnostic:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class TraceFile:
    units: list[IntentUnit]
    diagnostics: list[Diagnostic] = field(default_factory=list)


def step_from_record(rec: Any) -> ActionStep:
    if not isinstance(rec, dict) or not isinstance(rec.get("raw"), str):
        raise ValueError("action must be an object with a string 'raw'")
    args = rec.get("args", {})
    if not isinstance(args, dict) or not all(isinstance(v, str) for v in args.values()):
        raise ValueError("action args must map field names to strings")
    flags = rec.get("flags", [])
    if not isinstance(flags, list):
        raise ValueError("action flags must be a list")
    return ActionStep(
        raw=rec["raw"],
        verb=rec.get("verb"),
        args=dict(args),
        object=rec.get("object"),
        flags=tuple(str(f) for f in flags),
    )


def unit_from_record(rec: Any) -> IntentUnit:
    if not isinstance(rec, dict):
        raise ValueError("record must be a JSON object")
    kind = rec.get("kind")
    if kind not in TRACE_KINDS:
        raise ValueError(f"kind must be one of {TRACE_KINDS}, got {kind!r}")
    middle_key = "act" if kind == CONTROL else "key"
    for key in ("id", "env", middle_key, "desc"):
        if not isinstance(rec.get(key), str) or not rec[key].strip():
            raise ValueError(f"missing or empty {key!r}")
    actions = rec.get("actions", [])
    if not isinstance(actions, list):
        raise ValueError("actions must be a list")
    tags = rec.get("tags", {})
    if not isinstance(tags, dict):
        raise ValueError("tags must be an object")
    return IntentUnit(
        id=rec["id"],
        kind=kind,
        env=rec["env"],
        act_or_key=rec[middle_key],
        desc=rec["desc"],
        actions=tuple(step_from_record(a) for a in actions),
        tags={str(k): str(v) for k, v in tags.items()},
    )


def step_to_record(step: ActionStep) -> dict[str, Any]:
    rec: dict[str, Any] = {"raw": step.raw}
    if step.verb is not None:
        rec["verb"] = step.verb
    if step.args:
        rec["args"] = dict(step.args)
    if step.object is not None:
        rec["object"] = step.object
    if step.flags:
        rec["flags"] = list(step.flags)
    return rec


def unit_to_record(unit: IntentUnit) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "id": unit.id,
        "kind": unit.kind,
        "env": unit.env,
        "act" if unit.kind == CONTROL else "key": unit.act_or_key,
        "desc": unit.desc,
        "actions": [step_to_record(a) for a in unit.actions],
    }
    if unit.tags:
        rec["tags"] = dict(unit.tags)
    return rec


def parse_trace_file(data: bytes) -> TraceFile:
    """Parse line-delimited trace records, keeping valid lines.

    Blank input yields an empty result; input with content but no valid
    record raises ``TraceFormatError``.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TraceFormatError(f"trace file is not UTF-8: {exc}") from exc
    units: list[IntentUnit] = []
    diagnostics: list[Diagnostic] = []
    seen: set[str] = set()
    nonblank = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        nonblank += 1
        try:
            unit = unit_from_record(json.loads(line))
        except (json.JSONDecodeError, ValueError) as exc:
            diagnostics.append(Diagnostic(lineno, str(exc)))
            continue
        if unit.id in seen:
            diagnostics.append(Diagnostic(lineno, f"duplicate unit id {unit.id!r}"))
            continue
        seen.add(unit.id)
        units.append(unit)
    if nonblank and not units:
        detail = "; ".join(str(d) for d in diagnostics[:3])
        raise TraceFormatError(f"no valid trace records ({detail})")
    return TraceFile(units, diagnostics)


def read_trace_file(path: str | Path) -> TraceFile:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise TraceFormatError(f"{path}: {exc.strerror or exc}") from exc
    return parse_trace_file(data)


def serialize_units(units: Sequence[IntentUnit]) -> bytes:
    lines = [json.dumps(unit_to_record(u), ensure_ascii=False, separators=(", ", ": ")) for u in units]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""
