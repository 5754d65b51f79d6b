"""Command labeling, cache-case classification and plan production.

A command is labeled into task units (ENV/ACT/description plus parameter
bindings). Its prototype embedding is looked up in plan memory:

* hit     -- a stored plan is close enough and covers every ACT: reuse it,
             rebinding parameters, with no generator calls;
* partial -- close, with one or two ACTs missing: reuse and splice in steps
             from the best-supported skill hint of each missing ACT's subgroup;
* miss    -- synthesize every slot from retrieved exemplars and skill hints.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from .encoder import UnitEncoder
from .errors import PlanningError, SlotError
from .memory import (APPROVED, REJECTED, IntentIndex, PlanMemory, active_ig, cosine, query_plan, query_sg,
                     store_plan, top_units)
from .plans import GAP_FILLED, REUSED, SYNTHESIZED, GlobalPlan, PlanStep, PlanUnit
from .skills import SkillHint, classify_value, is_placeholder
from .trace_model import CONTROL, AliasMap, IntentUnit, canonicalize_action, load_alias_map

MISS = "miss"
HIT = "hit"
PARTIAL = "partial"


def _load_json(name: str, path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return json.loads(resources.files("intentmem.data").joinpath(name).read_text("utf-8"))
    return json.loads(Path(path).read_text("utf-8"))


# ---------------------------------------------------------------------------
# labeling


@dataclass(frozen=True)
class TaskUnit:
    env: str
    act: str
    desc: str
    app: str = ""
    bindings: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class CommandLabeling:
    command: str
    units: tuple[TaskUnit, ...]

    @property
    def acts(self) -> list[str]:
        return [u.act for u in self.units]

    @property
    def envs(self) -> list[str]:
        return [u.env for u in self.units]

    def bindings(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for u in self.units:
            for k, v in u.bindings.items():
                out.setdefault(k, v)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"command": self.command,
                "units": [{"env": u.env, "act": u.act, "desc": u.desc, "app": u.app, "bindings": dict(u.bindings)}
                          for u in self.units]}


class Labeler(Protocol):
    def label(self, command: str) -> CommandLabeling: ...


class RuleLabeler:
    """Clause splitting plus a regex rule table mapping clauses to task units."""

    def __init__(self, rules_path: str | Path | None = None):
        doc = _load_json("labeler_rules.json", rules_path)
        self.split = re.compile(doc["clause_split"], re.IGNORECASE)
        self.unit_specs: dict[str, dict[str, str]] = doc["units"]
        self.app_aliases: dict[str, str] = doc["app_aliases"]
        self.rules = [(re.compile(r["pattern"], re.IGNORECASE), list(r["acts"])) for r in doc["rules"]]
        self.binding_patterns = {k: re.compile(v, re.IGNORECASE) for k, v in doc["bindings"].items()}

    @property
    def act_names(self) -> list[str]:
        return list(self.unit_specs)

    def make_unit(self, act: str, bindings: Mapping[str, str]) -> TaskUnit:
        entry = self.unit_specs[act]
        desc = entry["desc"]
        for k, v in bindings.items():
            desc = desc.replace("{" + k + "}", v)
        return TaskUnit(entry["env"], act, desc, entry.get("app", ""), dict(bindings))

    def _clause_units(self, clause: str) -> list[TaskUnit]:
        for pattern, acts in self.rules:
            m = pattern.match(clause)
            if m is None:
                continue
            groups = {k: v.strip() for k, v in m.groupdict().items() if v}
            app = self.app_aliases.get(groups.pop("app", "").lower(), "")
            units = []
            for act in acts:
                act = act.replace("{app}", app)
                if act not in self.unit_specs:
                    raise PlanningError(f"rule produced unknown ACT {act!r}")
                needed = set(re.findall(r"\{(\w+)\}", self.unit_specs[act]["desc"]))
                units.append(self.make_unit(act, {k: v for k, v in groups.items() if k in needed}))
            return units
        return []

    def label(self, command: str) -> CommandLabeling:
        text = command.strip().rstrip(".!")
        if not text:
            raise PlanningError("empty command")
        units: list[TaskUnit] = []
        opened: set[str] = set()
        for clause in self.split.split(text):
            clause = clause.strip()
            if not clause:
                continue
            for u in self._clause_units(clause):
                if u.act == f"open {u.app}":
                    if u.app in opened:
                        continue
                    opened.add(u.app)
                units.append(u)
        if not units:
            raise PlanningError(f"labeler produced no task units for {command!r}")
        return CommandLabeling(command, tuple(units))

    def extract_bindings(self, command: str) -> dict[str, str]:
        out = {}
        for kind, pattern in self.binding_patterns.items():
            best = None
            for m in pattern.finditer(command):
                v = m.group("value").strip()
                if best is None or len(v) > len(best):
                    best = v
            quoted = re.findall(r"[\"']([^\"']+)[\"']", command)
            if quoted and kind in ("query", "text"):
                best = max(quoted, key=len)
            if best:
                out[kind] = best
        return out


class NoisyLabeler:
    """Wraps a labeler and perturbs its task units with seeded noise."""

    def __init__(self, base: RuleLabeler, noise: float, seed: int = 0):
        self.base = base
        self.noise = noise
        self.rng = np.random.default_rng(seed)

    def label(self, command: str) -> CommandLabeling:
        lab = self.base.label(command)
        acts = self.base.act_names
        units = []
        for u in lab.units:
            # draw both numbers every time so swap sets are nested across noise levels
            r = self.rng.random()
            other = acts[int(self.rng.integers(len(acts)))]
            if r < self.noise:
                u = self.base.make_unit(other, u.bindings)
            units.append(u)
        return replace(lab, units=tuple(units))


# ---------------------------------------------------------------------------
# prototypes


def _pseudo_unit(uid: str, env: str, act: str, desc: str) -> IntentUnit:
    return IntentUnit(id=uid, kind=CONTROL, env=env, act_or_key=act, desc=desc)


@dataclass(frozen=True)
class IntentPrototype:
    z: np.ndarray
    slot_z: tuple[np.ndarray, ...]
    slots: tuple[str, ...]


def slot_labels(labeling: CommandLabeling) -> list[str]:
    out, seen = [], {}
    for u in labeling.units:
        seen[u.act] = seen.get(u.act, 0) + 1
        out.append(u.act if seen[u.act] == 1 else f"{u.act} #{seen[u.act]}")
    return out


def build_prototype(labeling: CommandLabeling, encoder: UnitEncoder) -> IntentPrototype:
    whole = _pseudo_unit("query", "; ".join(labeling.envs), "; ".join(labeling.acts), labeling.command)
    pseudo = [_pseudo_unit(f"slot{i}", u.env, u.act, u.desc) for i, u in enumerate(labeling.units)]
    embs = encoder.encode_many([whole] + pseudo)
    return IntentPrototype(embs[0].z, tuple(e.z for e in embs[1:]), tuple(slot_labels(labeling)))


# ---------------------------------------------------------------------------
# generation


def bind_text(token: str | None, bindings: Mapping[str, str]) -> tuple[str | None, str | None]:
    """Return ``(text, param)`` for a placeholder or literal value."""
    if token is None:
        return None, None
    if is_placeholder(token):
        kind = token[1:-1]
        return bindings.get(kind, token), kind
    return token, None


def steps_from_hint(hint: SkillHint, bindings: Mapping[str, str]) -> list[PlanStep]:
    out = []
    for a in hint.steps:
        raw = a.args.get("text") or a.args.get("keys") or a.args.get("path")
        text, param = bind_text(raw, bindings)
        target, _ = bind_text(a.args.get("target", a.object), bindings)
        out.append(PlanStep(a.verb, target, text, param))
    return out


def unit_bindings(labeling: CommandLabeling, tu: TaskUnit) -> dict[str, str]:
    """Command-level values overlaid with the unit's own, plus the unit's app name."""
    out = {**labeling.bindings(), **tu.bindings}
    if tu.app:
        out.setdefault("app_name", tu.app)
    return out


def steps_from_trace(unit: IntentUnit, phi: AliasMap, bindings: Mapping[str, str]) -> list[PlanStep]:
    """Convert an exemplar's logged trace as-is, rebinding values by their classified type."""
    out = []
    for a in unit.actions:
        step = canonicalize_action(a, phi)
        raw = step.args.get("text") or step.args.get("keys") or step.args.get("path")
        text, param = raw, None
        if raw is not None and step.verb in ("text_input", "save", "open"):
            field = "text" if "text" in step.args else "path"
            kind = classify_value(phi.field_type(step.verb, field), raw, step.args.get("target", step.object))
            if kind in bindings:
                text, param = bindings[kind], kind
        out.append(PlanStep(step.verb, step.args.get("target", step.object), text, param))
    return out


class HintGenerator:
    """Deterministic built-in generator; counts how often it is invoked."""

    def __init__(self, phi: AliasMap | None = None, act_templates_path: str | Path | None = None):
        self.phi = phi or load_alias_map()
        self.act_templates: dict[str, list[dict[str, str]]] = _load_json("act_templates.json", act_templates_path)["templates"]
        self.calls = 0

    def template_steps(self, act: str, bindings: Mapping[str, str]) -> list[PlanStep]:
        base = act.split(" #")[0]
        if base not in self.act_templates:
            verb = base.split()[0] if base.split()[0] in self.phi.vocabulary else "click"
            return [PlanStep(verb, " ".join(base.split()[1:]) or None)]
        out = []
        for t in self.act_templates[base]:
            param = t.get("param")
            text = bindings.get(param, f"<{param}>") if param else t.get("text")
            out.append(PlanStep(t["verb"], t.get("object"), text, param))
        return out

    def generate(self, unit: TaskUnit, hint: SkillHint | None, exemplars: Sequence[IntentUnit],
                 bindings: Mapping[str, str]) -> list[PlanStep]:
        self.calls += 1
        if hint is not None:
            return steps_from_hint(hint, bindings)
        for ex in exemplars:
            if ex.actions:
                return steps_from_trace(ex, self.phi, bindings)
        return self.template_steps(unit.act, bindings)


# ---------------------------------------------------------------------------
# cache cases


@dataclass(frozen=True)
class PlannerConfig:
    hit_threshold: float = 0.95
    partial_threshold: float = 0.80
    max_missing: int = 2
    relevance_floor: float = 0.3
    use_sg: bool = True  # gated subgroup retrieval
    use_greedy: bool = False  # flat nearest-unit retrieval
    use_skills: bool = True
    use_pm: bool = True
    exemplars: int = 2


@dataclass(frozen=True)
class CacheDecision:
    case: str
    plan_id: str | None = None
    score: float | None = None
    missing_acts: tuple[str, ...] = ()
    ig_id: str | None = None

    def __post_init__(self) -> None:
        if self.case == HIT and self.missing_acts:
            raise PlanningError("a hit cannot have missing ACTs")
        if self.case == PARTIAL and not 1 <= len(self.missing_acts) <= 2:
            raise PlanningError("a partial hit needs one or two missing ACTs")

    def to_dict(self) -> dict[str, Any]:
        return {"case": self.case, "plan_id": self.plan_id, "score": self.score,
                "missing_acts": list(self.missing_acts), "ig_id": self.ig_id}


def missing_acts(wanted: Sequence[str], covered: Sequence[str]) -> list[str]:
    pool = list(covered)
    out = []
    for act in wanted:
        if act in pool:
            pool.remove(act)
        else:
            out.append(act)
    return out


def classify_case(proto: IntentPrototype, labeling: CommandLabeling, mem: PlanMemory | None,
                  index: IntentIndex | None, cfg: PlannerConfig = PlannerConfig()) -> CacheDecision:
    ig = active_ig(index, proto.z) if index is not None and not index.empty else None
    if not cfg.use_pm or mem is None:
        return CacheDecision(MISS, ig_id=ig)
    found = query_plan(mem, proto.z, ig)
    if found is None:
        return CacheDecision(MISS, ig_id=ig)
    plan_id, score = found
    miss = missing_acts(labeling.acts, mem.get(plan_id).act_labels)
    if score >= cfg.hit_threshold and not miss:
        return CacheDecision(HIT, plan_id, score, (), ig)
    shared = len(labeling.acts) - len(miss)
    if cfg.use_skills and score >= cfg.partial_threshold and 1 <= len(miss) <= cfg.max_missing and shared >= 1:
        return CacheDecision(PARTIAL, plan_id, score, tuple(miss), ig)
    return CacheDecision(MISS, None, score, (), ig)


# ---------------------------------------------------------------------------
# plan production


def _retrieve(index: IntentIndex | None, z: np.ndarray, cfg: PlannerConfig) -> tuple[SkillHint | None, list[IntentUnit], str | None]:
    if index is None or index.empty:
        return None, [], None
    if cfg.use_sg:
        ig = active_ig(index, z)
        ranked = query_sg(index, ig, z, top_k=1) if ig is not None else []
        if not ranked or ranked[0][1] < cfg.relevance_floor:
            ranked = query_sg(index, None, z, top_k=1)
        if not ranked or ranked[0][1] < cfg.relevance_floor:
            return None, [], None
        sg_id = ranked[0][0]
        hint = index.sg(sg_id).best_hint() if cfg.use_skills else None
        return hint, top_units(index, sg_id, z, cfg.exemplars), sg_id
    if cfg.use_greedy:
        scored = sorted((-cosine(z, index.embeddings[uid]), uid) for uid in index.units)
        if scored and -scored[0][0] >= cfg.relevance_floor:
            return None, [index.units[scored[0][1]]], None
    return None, [], None


def synthesize_plan(proto: IntentPrototype, labeling: CommandLabeling, index: IntentIndex | None,
                    generator: HintGenerator, cfg: PlannerConfig = PlannerConfig()) -> GlobalPlan:
    units = []
    for slot, tu, z in zip(proto.slots, labeling.units, proto.slot_z):
        hint, exemplars, sg_id = _retrieve(index, z, cfg)
        bindings = unit_bindings(labeling, tu)
        try:
            steps = generator.generate(tu, hint, exemplars, bindings)
        except Exception as exc:  # noqa: BLE001 - external generators fail in arbitrary ways
            raise SlotError(slot, f"generator failed: {exc}") from exc
        if not steps:
            raise SlotError(slot, "generator returned no steps")
        sources = tuple(x for x in ([sg_id] if sg_id else []) + [u.id for u in exemplars])
        units.append(PlanUnit(slot, tu.env, tu.act, tu.desc, tuple(steps), SYNTHESIZED, sources))
    return GlobalPlan(tuple(units), labeling.command)


def rebind_plan(plan: GlobalPlan, labeling: CommandLabeling) -> GlobalPlan:
    cmd = labeling.bindings()
    by_act = {u.act: u for u in labeling.units}
    units = []
    for pu in plan.units:
        tu = by_act.get(pu.act)
        b = {**cmd, **(tu.bindings if tu else {})}
        steps = tuple(replace(s, text=b[s.param]) if s.param and s.param in b else s for s in pu.steps)
        units.append(replace(pu, steps=steps, desc=tu.desc if tu else pu.desc))
    return replace(plan, units=tuple(units), command=labeling.command)


def trim_plan(plan: GlobalPlan, acts: Sequence[str]) -> GlobalPlan:
    """Drop plan units whose ACT the command did not ask for (multiset-aware)."""
    pool = list(acts)
    kept = []
    for pu in plan.units:
        if pu.act in pool:
            pool.remove(pu.act)
            kept.append(pu)
    if not kept:
        raise PlanningError("stored plan shares no ACT with the command")
    return replace(plan, units=tuple(kept))


def reuse_plan(mem: PlanMemory, plan_id: str, labeling: CommandLabeling) -> GlobalPlan:
    entry = mem.get(plan_id)
    plan = trim_plan(entry.plan, labeling.acts)
    return rebind_plan(plan, labeling).with_provenance(REUSED, (plan_id,))


def insert_position(plan: GlobalPlan, labeling: CommandLabeling, act: str) -> int:
    acts = labeling.acts
    k = acts.index(act)
    if k == 0:
        return 0
    prev = acts[k - 1]
    for i, pu in enumerate(plan.units):
        if pu.act == prev:
            return i + 1
    return max(len(plan.units) - 1, 0)


def gap_fill(plan: GlobalPlan, missing: Sequence[str], index: IntentIndex | None, labeling: CommandLabeling,
             proto: IntentPrototype, generator: HintGenerator | None = None,
             cfg: PlannerConfig = PlannerConfig()) -> GlobalPlan:
    """Splice steps for each missing ACT into ``plan``; original units are kept in order."""
    if len(missing) > cfg.max_missing:
        raise PlanningError(f"{len(missing)} missing ACTs exceeds the gap-fill limit of {cfg.max_missing}")
    out = plan
    for act in missing:
        k = labeling.acts.index(act)
        tu, z, slot = labeling.units[k], proto.slot_z[k], proto.slots[k]
        bindings = unit_bindings(labeling, tu)
        hint = None
        sources: tuple[str, ...] = ()
        if index is not None and not index.empty:
            ig = active_ig(index, z)
            ranked = query_sg(index, ig, z, top_k=1) if ig is not None else query_sg(index, None, z, top_k=1)
            if ranked:
                sg = index.sg(ranked[0][0])
                supported = sorted(sg.skill_hints, key=lambda h: (-h.support, h.rank))
                hint = supported[0] if supported else None
                sources = (sg.id,)
        if hint is not None:
            steps = steps_from_hint(hint, bindings)
        elif generator is not None:
            steps = generator.template_steps(act, bindings)
        else:
            raise SlotError(slot, "no skill hint to fill the gap")
        pos = insert_position(out, labeling, act)
        units = list(out.units)
        units.insert(pos, PlanUnit(slot, tu.env, tu.act, tu.desc, tuple(steps), GAP_FILLED, sources))
        out = replace(out, units=tuple(units))
    return out


@dataclass
class PlanResult:
    plan: GlobalPlan
    decision: CacheDecision
    labeling: CommandLabeling
    prototype: IntentPrototype
    generator_calls: int


class Planner:
    def __init__(self, encoder: UnitEncoder, index: IntentIndex | None = None, memory: PlanMemory | None = None,
                 labeler: Labeler | None = None, generator: HintGenerator | None = None,
                 cfg: PlannerConfig = PlannerConfig(), phi: AliasMap | None = None):
        self.phi = phi or load_alias_map()
        self.encoder = encoder
        self.index = index
        self.memory = memory
        self.labeler = labeler or RuleLabeler()
        self.generator = generator or HintGenerator(self.phi)
        self.cfg = cfg

    def plan(self, command: str) -> PlanResult:
        labeling = self.labeler.label(command)
        proto = build_prototype(labeling, self.encoder)
        decision = classify_case(proto, labeling, self.memory, self.index, self.cfg)
        before = self.generator.calls
        if decision.case == HIT:
            plan = reuse_plan(self.memory, decision.plan_id, labeling)
        elif decision.case == PARTIAL:
            base = reuse_plan(self.memory, decision.plan_id, labeling)
            plan = gap_fill(base, decision.missing_acts, self.index, labeling, proto, self.generator, self.cfg)
        else:
            plan = synthesize_plan(proto, labeling, self.index, self.generator, self.cfg)
        plan.validate(self.phi.vocabulary)
        return PlanResult(plan, decision, labeling, proto, self.generator.calls - before)

    def approve(self, result: PlanResult, decision: str) -> bool:
        return approve_plan(result, decision, self.memory)


def approve_plan(result: PlanResult, decision: str, mem: PlanMemory | None) -> bool:
    """Store an approved plan tagged with the active IG; rejected plans are dropped."""
    if decision not in (APPROVED, REJECTED):
        raise PlanningError(f"decision must be {APPROVED!r} or {REJECTED!r}")
    if decision == REJECTED or mem is None:
        return False
    store_plan(mem, result.plan, APPROVED, result.prototype.z, result.decision.ig_id,
               result.labeling.envs, result.labeling.acts)
    return True
