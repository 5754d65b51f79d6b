"""Plan execution with hint injection, grounding, a rule-based critic and
bounded retries.

For every plan unit: fetch a hint from the nearest subgroup, ground each step
against the current screen through the action template library, execute, then
ask the critic. ``retryable`` re-plans the unit's unfinished part once per
retry (at most ``max_retries`` times); ``blocked`` or exhaustion ends the run.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from .encoder import UnitEncoder
from .errors import UnresolvableTargetError
from .memory import IntentIndex, query_sg, top_units
from .plans import GlobalPlan, PlanStep, PlanUnit
from .sim_desktop import Action, Component, ScreenState, SimDesktop, declared_ids
from .skills import SkillHint, is_placeholder
from .trace_model import CONTROL, IntentUnit

SUCCESS = "success"
RETRYABLE = "retryable"
BLOCKED = "blocked"
OUTCOME_SUCCESS = "SUCCESS"
OUTCOME_BLOCKED = "BLOCKED"

Template = Mapping[str, Any]


def load_templates(path: str | Path | None = None) -> dict[str, list[list[Template]]]:
    if path is None:
        text = resources.files("intentmem.data").joinpath("action_templates.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return dict(json.loads(text)["templates"])


def templates_for(verb: str, templates: Mapping[str, Sequence[Sequence[Template]]]) -> list[list[Template]]:
    if verb in templates:
        return [list(alt) for alt in templates[verb]]
    return [[{"verb": verb, "target": "{object}", "text": "{text}"}]]


# ---------------------------------------------------------------------------
# hints


@dataclass(frozen=True)
class Hint:
    sg_id: str | None = None
    score: float = 0.0
    skill_hints: tuple[SkillHint, ...] = ()
    exemplar_ids: tuple[str, ...] = ()
    labels: tuple[str, ...] = ()

    @property
    def empty(self) -> bool:
        return self.sg_id is None

    @property
    def best(self) -> SkillHint | None:
        return self.skill_hints[0] if self.skill_hints else None


def plan_unit_pseudo(pu: PlanUnit) -> IntentUnit:
    return IntentUnit(id=f"pu:{pu.slot}", kind=CONTROL, env=pu.env or pu.slot, act_or_key=pu.act or pu.slot,
                      desc=pu.desc or pu.slot)


def inject_hint(pu: PlanUnit, index: IntentIndex | None, encoder: UnitEncoder | None,
                relevance_floor: float = 0.3, k: int = 2) -> Hint:
    if index is None or encoder is None or index.empty:
        return Hint()
    z = encoder.encode(plan_unit_pseudo(pu)).z
    ranked = query_sg(index, None, z, top_k=1)
    if not ranked or ranked[0][1] < relevance_floor:
        return Hint()
    sg_id, score = ranked[0]
    exemplars = top_units(index, sg_id, z, k)
    labels: list[str] = []
    for u in exemplars:
        for a in u.actions:
            for value in (a.object, a.args.get("target")):
                if value and value not in labels:
                    labels.append(value)
    return Hint(sg_id, score, index.sg(sg_id).skill_hints, tuple(u.id for u in exemplars), tuple(labels))


# ---------------------------------------------------------------------------
# grounding and target resolution


def normalize_label(s: str) -> str:
    return " ".join(re.findall(r"[a-z0-9]+", s.lower()))


def qualified_label(c: Component, state: ScreenState) -> str:
    return f"{c.label} ({state.title_of(c.window)})"


def resolve_target(target: str, state: ScreenState, role: str | None = None,
                   hint_labels: Sequence[str] = ()) -> Component:
    pool = [c for c in state.actionable if role is None or c.role == role]
    nt = normalize_label(target)
    tiers = [
        [c for c in pool if c.id == target],
        [c for c in pool if c.label == target or (nt and normalize_label(c.label) == nt)],
        [c for c in pool if nt and (nt in normalize_label(c.label) or nt in normalize_label(c.id))],
    ]
    for tier in tiers:
        if not tier:
            continue
        hints = {normalize_label(h) for h in hint_labels}
        order = {c.id: i for i, c in enumerate(state.components)}

        def key(c: Component):
            return (normalize_label(qualified_label(c, state)) not in hints, c.window != state.focused, order[c.id])

        return min(tier, key=key)
    raise UnresolvableTargetError(target, [c.id for c in pool])


def _fill(template: str | None, step: PlanStep) -> str | None:
    if template is None:
        return None
    if "{object}" in template and not step.object:
        return None
    if "{text}" in template and step.text is None:
        return None
    return template.replace("{object}", step.object or "").replace("{text}", step.text or "")


def bind_action(tmpl: Template, step: PlanStep, state: ScreenState, hint: Hint) -> Action:
    verb = tmpl["verb"]
    target = _fill(tmpl.get("target"), step)
    text = _fill(tmpl.get("text"), step)
    if target is None:
        return Action(verb, None, text)
    if verb == "switch_focus":
        nt = normalize_label(target)
        for wid, title in state.windows:
            if wid == target or normalize_label(title) == nt or normalize_label(wid) == nt:
                return Action(verb, wid, text)
        raise UnresolvableTargetError(target, [w for w, _ in state.windows])
    comp = resolve_target(target, state, tmpl.get("role"), hint.labels)
    return Action(verb, comp.id, text)


@dataclass(frozen=True)
class OptimizedStep:
    action: Action
    alternative: tuple[Template, ...]
    observation: str


def optimize_step(state: ScreenState, step: PlanStep, plan: GlobalPlan | None, pu: PlanUnit | None,
                  observation: str, hint: Hint, templates: Mapping[str, Any]) -> OptimizedStep:
    """Pick the first template alternative whose first action grounds on ``state``."""
    considered: list[str] = []
    for alt in templates_for(step.verb, templates):
        try:
            action = bind_action(alt[0], step, state, hint)
        except UnresolvableTargetError as exc:
            considered.extend(exc.candidates)
            continue
        return OptimizedStep(action, tuple(alt), observation)
    raise UnresolvableTargetError(step.object or step.verb, sorted(set(considered)))


def next_target_resolvable(pu: PlanUnit | None, state: ScreenState, templates: Mapping[str, Any]) -> bool:
    if pu is None or not pu.steps:
        return True
    try:
        optimize_step(state, pu.steps[0], None, pu, "", Hint(), templates)
    except UnresolvableTargetError:
        return False
    return True


# ---------------------------------------------------------------------------
# critic


@dataclass(frozen=True)
class CriticVerdict:
    q: str
    observation: str


def critic_eval(pu: PlanUnit, plan: GlobalPlan, state_after: ScreenState, sim: SimDesktop,
                next_pu: PlanUnit | None = None, templates: Mapping[str, Any] | None = None,
                all_steps_applied: bool = True) -> CriticVerdict:
    scenario = sim.scenario
    if sim.hard_stop:
        return CriticVerdict(BLOCKED, "hard stop flagged by the environment")
    known = declared_ids(scenario.doc)[0]
    if state_after.focused is not None and state_after.focused not in known:
        return CriticVerdict(BLOCKED, f"unknown window {state_after.focused!r}")
    post = scenario.postconditions.get(pu.slot)
    if post is not None:
        if not sim.holds(post):
            return CriticVerdict(RETRYABLE, f"postcondition failed for {pu.slot!r}")
    elif not all_steps_applied:
        return CriticVerdict(RETRYABLE, f"postcondition failed for {pu.slot!r}: a step did not apply")
    expected = scenario.expect_focus.get(pu.slot)
    if expected is not None and state_after.focused != expected:
        return CriticVerdict(RETRYABLE, f"focus: expected {expected!r}, found {state_after.focused!r}")
    if next_pu is not None and not next_target_resolvable(next_pu, state_after, templates or {}):
        return CriticVerdict(RETRYABLE, f"next unit {next_pu.slot!r}: first target unresolvable")
    return CriticVerdict(SUCCESS, "")


# ---------------------------------------------------------------------------
# execution record


@dataclass(frozen=True)
class StepLog:
    unit: int
    attempt: int
    plan_step: int | None  # index into the original plan's flat step list; None for inserted steps
    step: str
    action: Mapping[str, Any] | None
    applied: bool
    reason: str
    tick: int


@dataclass(frozen=True)
class VerdictLog:
    unit: int
    attempt: int
    q: str
    observation: str


@dataclass
class ExecutionRecord:
    task_id: str
    outcome: str
    plan: GlobalPlan
    log: list[StepLog]
    verdicts: list[VerdictLog]
    retries: int
    gprime_applications: int
    plan_steps_total: int
    executed_plan_steps: list[int]
    ticks: int
    generator_calls: int = 0
    diagnostic: str = ""
    unit_outcomes: list[str] = field(default_factory=list)
    # real elapsed seconds per phase; excluded from serialization so replays compare byte-equal
    wall: dict[str, float] = field(default_factory=dict)

    @property
    def steps_attempted(self) -> int:
        return len(self.log)

    @property
    def steps_successful(self) -> int:
        ok_units = {i for i, q in enumerate(self.unit_outcomes) if q == SUCCESS}
        return sum(1 for s in self.log if s.applied and s.unit in ok_units)

    @property
    def plan_steps_executed(self) -> int:
        return len(self.executed_plan_steps)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "outcome": self.outcome,
            "plan": self.plan.to_dict(),
            "log": [
                {"unit": s.unit, "attempt": s.attempt, "plan_step": s.plan_step, "step": s.step,
                 "action": dict(s.action) if s.action is not None else None, "applied": s.applied,
                 "reason": s.reason, "tick": s.tick}
                for s in self.log
            ],
            "verdicts": [{"unit": v.unit, "attempt": v.attempt, "q": v.q, "observation": v.observation}
                         for v in self.verdicts],
            "unit_outcomes": list(self.unit_outcomes),
            "counters": {
                "steps_attempted": self.steps_attempted,
                "steps_successful": self.steps_successful,
                "retries": self.retries,
                "gprime_applications": self.gprime_applications,
                "generator_calls": self.generator_calls,
                "plan_steps_total": self.plan_steps_total,
                "plan_steps_executed": self.plan_steps_executed,
            },
            "executed_plan_steps": list(self.executed_plan_steps),
            "ticks": self.ticks,
            "diagnostic": self.diagnostic,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


# ---------------------------------------------------------------------------
# the loop


@dataclass(frozen=True)
class ExecConfig:
    max_retries: int = 3
    relevance_floor: float = 0.3
    hint_k: int = 2


class Executor:
    def __init__(self, sim: SimDesktop, index: IntentIndex | None = None, encoder: UnitEncoder | None = None,
                 cfg: ExecConfig = ExecConfig(), templates: Mapping[str, Any] | None = None):
        self.sim = sim
        self.index = index
        self.encoder = encoder
        self.cfg = cfg
        self.templates = templates if templates is not None else load_templates()

    def _run_step(self, ui: int, attempt: int, orig: int | None, step: PlanStep, hint: Hint,
                  plan: GlobalPlan, pu: PlanUnit, obs: str, log: list[StepLog]) -> tuple[bool, str]:
        state = self.sim.ground()
        desc = step.describe()
        try:
            opt = optimize_step(state, step, plan, pu, obs, hint, self.templates)
        except UnresolvableTargetError as exc:
            log.append(StepLog(ui, attempt, orig, desc, None, False, str(exc), self.sim.clock.ticks))
            return False, str(exc)
        action = opt.action
        for k, tmpl in enumerate(opt.alternative):
            if k > 0:
                state = self.sim.ground()
                try:
                    action = bind_action(tmpl, step, state, hint)
                except UnresolvableTargetError as exc:
                    log.append(StepLog(ui, attempt, orig, desc, None, False, str(exc), self.sim.clock.ticks))
                    return False, str(exc)
            res = self.sim.apply(action)
            log.append(StepLog(ui, attempt, orig, desc, action.to_dict(), res.applied, res.reason, res.tick))
            if not res.applied:
                return False, res.reason
        return True, "applied"

    def _window_of(self, target: str | None) -> str | None:
        if target is None:
            return None
        for c in self.sim.ground().components:
            if c.id == target or normalize_label(c.label) == normalize_label(target):
                return c.window
        return None

    def _g_prime_new(self, pu: PlanUnit, verdict: CriticVerdict, failed: list[tuple[int | None, PlanStep]],
                     reasons: list[str], hint: Hint) -> list[tuple[int | None, PlanStep]]:
        focus_issue = verdict.observation.startswith("focus") or any(r.startswith("not focused") for r in reasons)
        if focus_issue:
            window = self.sim.scenario.expect_focus.get(pu.slot)
            if window is None and failed:
                window = self._window_of(failed[0][1].object)
            if window is not None:
                return [(None, PlanStep("switch_focus", window))] + failed
        if failed:
            return failed
        if hint.best is not None:
            return [(None, s) for s in bind_skill_steps(hint.best, _unit_text(pu), _unit_targets(pu))]
        return []

    def run(self, plan: GlobalPlan, task_id: str = "", generator_calls: int = 0) -> ExecutionRecord:
        t0 = time.perf_counter()
        wall = {"hint": 0.0, "execute": 0.0, "critic": 0.0}
        log: list[StepLog] = []
        verdicts: list[VerdictLog] = []
        executed: set[int] = set()
        unit_outcomes: list[str] = []
        retries = gprime = 0
        outcome = OUTCOME_SUCCESS
        diagnostic = ""
        units = list(plan.units)
        total = plan.n_steps
        flat = 0
        ui = 0
        obs = ""
        try:
            for ui, pu in enumerate(units):
                t = time.perf_counter()
                hint = inject_hint(pu, self.index, self.encoder, self.cfg.relevance_floor, self.cfg.hint_k)
                wall["hint"] += time.perf_counter() - t
                pending: list[tuple[int | None, PlanStep]] = [(flat + j, s) for j, s in enumerate(pu.steps)]
                flat += len(pu.steps)
                done: list[tuple[int | None, PlanStep]] = []
                attempt = 0
                while True:
                    t = time.perf_counter()
                    failed: list[tuple[int | None, PlanStep]] = []
                    reasons: list[str] = []
                    for k, (orig, step) in enumerate(pending):
                        ok, why = self._run_step(ui, attempt, orig, step, hint, plan, pu, obs, log)
                        if ok:
                            done.append((orig, step))
                            if orig is not None:
                                executed.add(orig)
                        else:
                            failed.append((orig, step))
                            reasons.append(why)
                    wall["execute"] += time.perf_counter() - t
                    t = time.perf_counter()
                    state = self.sim.ground()
                    nxt = units[ui + 1] if ui + 1 < len(units) else None
                    verdict = critic_eval(pu, plan, state, self.sim, nxt, self.templates, not failed)
                    wall["critic"] += time.perf_counter() - t
                    obs = verdict.observation
                    if verdict.q == RETRYABLE and attempt >= self.cfg.max_retries:
                        verdict = CriticVerdict(BLOCKED, f"retries exhausted: {verdict.observation}")
                    verdicts.append(VerdictLog(ui, attempt, verdict.q, verdict.observation))
                    if verdict.q != RETRYABLE:
                        break
                    # re-plan the unfinished part of the unit; completed steps stay
                    pending = self._g_prime_new(pu, verdict, failed, reasons, hint)
                    units[ui] = replace(pu, steps=tuple(s for _, s in done) + tuple(s for _, s in pending))
                    plan = replace(plan, units=tuple(units))
                    retries += 1
                    gprime += 1
                    attempt += 1
                unit_outcomes.append(verdict.q)
                if verdict.q == BLOCKED:
                    outcome = OUTCOME_BLOCKED
                    break
        except Exception as exc:  # noqa: BLE001 - a crashing environment ends the run as blocked
            outcome = OUTCOME_BLOCKED
            diagnostic = f"{type(exc).__name__}: {exc}"
            if len(unit_outcomes) == ui:
                unit_outcomes.append(BLOCKED)
        wall["total"] = time.perf_counter() - t0
        return ExecutionRecord(
            task_id=task_id, outcome=outcome, plan=plan, log=log, verdicts=verdicts, retries=retries,
            gprime_applications=gprime, plan_steps_total=total,
            executed_plan_steps=sorted(executed), ticks=self.sim.clock.ticks, generator_calls=generator_calls,
            diagnostic=diagnostic, unit_outcomes=unit_outcomes, wall=wall,
        )


def _unit_text(pu: PlanUnit) -> str | None:
    for s in pu.steps:
        if s.text:
            return s.text
    return None


def _unit_targets(pu: PlanUnit) -> dict[str, str]:
    return {s.verb: s.object for s in pu.steps if s.object}


def bind_skill_steps(hint: SkillHint, value: str | None, targets: Mapping[str, str] | None = None) -> list[PlanStep]:
    """Concrete steps from a skill hint.

    Value placeholders take ``value``; a placeholder target takes the unit's
    own target for the same verb when ``targets`` has one.
    """
    out = []
    for a in hint.steps:
        text = a.args.get("text") or a.args.get("keys")
        param = None
        if text is not None and is_placeholder(text):
            param = text[1:-1]
            text = value if value is not None else text
        target = a.args.get("target", a.object)
        if target is not None and is_placeholder(target):
            target = (targets or {}).get(a.verb, target)
        out.append(PlanStep(a.verb, target, text, param))
    return out


def run_plan(plan: GlobalPlan, sim: SimDesktop, index: IntentIndex | None = None, encoder: UnitEncoder | None = None,
             cfg: ExecConfig = ExecConfig(), task_id: str = "", generator_calls: int = 0) -> ExecutionRecord:
    return Executor(sim, index, encoder, cfg).run(plan, task_id, generator_calls)
