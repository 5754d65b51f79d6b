"""Scriptable simulated desktop.

A scenario document declares windows with components, deterministic
transition rules keyed by ``(verb, component or window, text)``, scripted or
seeded-random faults, per-unit postconditions and expected focus. Time is a
logical tick counter.

Scenario document (JSON)::

    {"name": "...",
     "windows": [{"id": "desktop", "title": "Desktop", "panels": ["icons"],
                  "components": [{"id": "icon:notepad", "role": "icon", "label": "Notepad"}]},
                 {"id": "popup", "title": "Update", "occludes": "*", "components": [...]}],
     "focused": "desktop",
     "state": {"saved": false},
     "rules": [{"verb": "doubleclick", "component": "icon:notepad",
                "effects": [{"op": "open_window", "window": {...}}]}],
     "faults": [{"after_step": 4, "effects": [{"op": "open_window", "window": {...}}]}],
     "random_faults": {"seed": 0, "rate": 0.1, "effects": [...]},
     "postconditions": {"write note": {"state": {"typed": "hello"}}},
     "expect_focus": {"write note": "notepad"},
     "costs": {"wait": 5},
     "hard_stop": false}

Effect ops: ``open_window``, ``close_window``, ``focus``, ``set``, ``append``
(``$text`` expands to the action text and ``${key}`` to a state value), ``add_component``,
``remove_component``, ``hard_stop``. Predicates are objects whose keys are all
required to hold: ``focused``, ``window_open``, ``window_closed``, ``state``,
``state_contains``, ``component``.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ScenarioError

# verbs that deliver keystrokes to the focused window
KEYBOARD_VERBS = frozenset({"text_input", "enter", "hotkey", "copy", "paste", "save", "select"})
BUILTIN_VERBS = frozenset({"switch_focus", "wait"})
EFFECT_OPS = frozenset({"open_window", "close_window", "focus", "set", "append", "add_component",
                        "remove_component", "hard_stop"})
_STATE_REF = re.compile(r"\$\{(\w+)\}")
PREDICATE_KEYS = frozenset({"focused", "window_open", "window_closed", "state", "state_contains", "component"})


@dataclass(frozen=True)
class Component:
    id: str
    role: str
    label: str
    window: str
    actionable: bool = True
    occluded: bool = False

    @property
    def usable(self) -> bool:
        return self.actionable and not self.occluded


@dataclass(frozen=True)
class ScreenState:
    window_title: str | None
    focused: str | None
    windows: tuple[tuple[str, str], ...]  # (id, title), stacking order
    panels: tuple[str, ...]
    components: tuple[Component, ...]
    counts: Mapping[str, int]

    @property
    def actionable(self) -> list[Component]:
        return [c for c in self.components if c.usable]

    def component(self, cid: str) -> Component | None:
        for c in self.components:
            if c.id == cid:
                return c
        return None

    def title_of(self, wid: str) -> str:
        return dict(self.windows).get(wid, wid)


@dataclass(frozen=True)
class Action:
    verb: str
    target: str | None = None
    text: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"verb": self.verb}
        if self.target is not None:
            d["target"] = self.target
        if self.text is not None:
            d["text"] = self.text
        return d


@dataclass(frozen=True)
class StepResult:
    applied: bool
    reason: str
    tick: int


@dataclass(frozen=True)
class Rule:
    verb: str
    component: str | None
    window: str | None
    text: str | None
    when: Mapping[str, Any] | None
    effects: tuple[Mapping[str, Any], ...]

    @property
    def key(self) -> tuple[str, str, str, str | None]:
        return (self.verb, "component" if self.component else "window", self.component or self.window or "", self.text)


@dataclass(frozen=True)
class Fault:
    effects: tuple[Mapping[str, Any], ...]
    after_step: int | None = None
    when: Mapping[str, Any] | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    windows: tuple[Mapping[str, Any], ...]
    focused: str | None
    state: Mapping[str, Any]
    rules: tuple[Rule, ...]
    faults: tuple[Fault, ...]
    random_faults: Mapping[str, Any] | None
    postconditions: Mapping[str, Mapping[str, Any]]
    expect_focus: Mapping[str, str]
    costs: Mapping[str, int]
    hard_stop: bool
    doc: Mapping[str, Any] = field(repr=False, default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.doc, sort_keys=True, indent=1) + "\n"


def _check_predicate(pred: Any, where: str) -> None:
    if pred is None:
        return
    if not isinstance(pred, dict) or not set(pred) <= PREDICATE_KEYS:
        raise ScenarioError(f"{where}: predicate keys must be a subset of {sorted(PREDICATE_KEYS)}")


def _check_effects(effects: Any, where: str) -> tuple[Mapping[str, Any], ...]:
    if not isinstance(effects, list):
        raise ScenarioError(f"{where}: effects must be a list")
    for k, eff in enumerate(effects):
        if not isinstance(eff, dict) or eff.get("op") not in EFFECT_OPS:
            raise ScenarioError(f"{where}: effect {k} has unknown op {eff.get('op') if isinstance(eff, dict) else eff!r}")
        if eff["op"] in ("open_window", "add_component"):
            _check_window(eff.get("window") if eff["op"] == "open_window" else {"id": "_", "components": [eff.get("component")]},
                          f"{where} effect {k}")
    return tuple(effects)


def _check_window(w: Any, where: str) -> None:
    if not isinstance(w, dict) or not isinstance(w.get("id"), str):
        raise ScenarioError(f"{where}: window needs a string id")
    for c in w.get("components", []):
        if not isinstance(c, dict) or not all(isinstance(c.get(k), str) for k in ("id", "label")):
            raise ScenarioError(f"{where}: component needs string id and label")


def declared_ids(doc: Mapping[str, Any]) -> tuple[set[str], set[str]]:
    """Window and component ids that exist initially or can be created by an effect."""
    wins, comps = set(), set()

    def visit_window(w: Mapping[str, Any]) -> None:
        wins.add(w["id"])
        comps.update(c["id"] for c in w.get("components", []))

    for w in doc.get("windows", []):
        visit_window(w)
    effect_lists = [r.get("effects", []) for r in doc.get("rules", [])]
    effect_lists += [f.get("effects", []) for f in doc.get("faults", [])]
    effect_lists.append((doc.get("random_faults") or {}).get("effects", []))
    for effects in effect_lists:
        for eff in effects:
            if eff.get("op") == "open_window":
                visit_window(eff["window"])
            elif eff.get("op") == "add_component":
                comps.add(eff["component"]["id"])
    return wins, comps


def load_scenario(data: bytes | str | Mapping[str, Any]) -> Scenario:
    if isinstance(data, Mapping):
        doc = copy.deepcopy(dict(data))
    else:
        try:
            doc = json.loads(data)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    for i, w in enumerate(doc.get("windows", [])):
        _check_window(w, f"window {i}")
    try:
        wins, comps = declared_ids(doc)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ScenarioError(f"malformed window or component inside an effect: {exc!r}") from exc

    rules: list[Rule] = []
    seen: dict[tuple, int] = {}
    for i, r in enumerate(doc.get("rules", [])):
        where = f"rule {i} ({r.get('verb')} {r.get('component') or r.get('window')})"
        if not isinstance(r.get("verb"), str):
            raise ScenarioError(f"{where}: missing verb")
        if bool(r.get("component")) == bool(r.get("window")):
            raise ScenarioError(f"{where}: exactly one of component/window is required")
        if r.get("component") and r["component"] not in comps:
            raise ScenarioError(f"{where}: unknown component {r['component']!r}")
        if r.get("window") and r["window"] not in wins:
            raise ScenarioError(f"{where}: unknown window {r['window']!r}")
        _check_predicate(r.get("when"), where)
        rule = Rule(r["verb"], r.get("component"), r.get("window"), r.get("text"), r.get("when"),
                    _check_effects(r.get("effects", []), where))
        if rule.key in seen:
            raise ScenarioError(f"{where}: duplicates the match key of rule {seen[rule.key]}")
        seen[rule.key] = i
        rules.append(rule)

    faults = []
    for i, f in enumerate(doc.get("faults", [])):
        where = f"fault {i}"
        if (f.get("after_step") is None) == (f.get("when") is None):
            raise ScenarioError(f"{where}: exactly one of after_step/when is required")
        _check_predicate(f.get("when"), where)
        faults.append(Fault(_check_effects(f.get("effects", []), where), f.get("after_step"), f.get("when")))
    rf = doc.get("random_faults")
    if rf is not None:
        _check_effects(rf.get("effects", []), "random_faults")
        if not 0.0 <= float(rf.get("rate", 0.0)) <= 1.0:
            raise ScenarioError("random_faults: rate must be in [0, 1]")
    for label, pred in doc.get("postconditions", {}).items():
        _check_predicate(pred, f"postcondition {label!r}")
    focused = doc.get("focused")
    if focused is not None and focused not in {w["id"] for w in doc.get("windows", [])}:
        raise ScenarioError(f"initially focused window {focused!r} does not exist")
    return Scenario(
        name=str(doc.get("name", "")),
        windows=tuple(doc.get("windows", [])),
        focused=focused,
        state=dict(doc.get("state", {})),
        rules=tuple(rules),
        faults=tuple(faults),
        random_faults=rf,
        postconditions=dict(doc.get("postconditions", {})),
        expect_focus=dict(doc.get("expect_focus", {})),
        costs={str(k): int(v) for k, v in doc.get("costs", {}).items()},
        hard_stop=bool(doc.get("hard_stop", False)),
        doc=doc,
    )


def read_scenario(path: str | Path) -> Scenario:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from exc
    return load_scenario(data)


class SimClock:
    def __init__(self, costs: Mapping[str, int] | None = None, default_cost: int = 1):
        self.ticks = 0
        self.costs = dict(costs or {})
        self.default_cost = default_cost

    def advance(self, verb: str) -> int:
        self.ticks += self.costs.get(verb, self.default_cost)
        return self.ticks


class SimDesktop:
    """Mutable scene driven by a scenario; one instance per run."""

    def __init__(self, scenario: Scenario, seed: int = 0):
        self.scenario = scenario
        self.windows: list[dict[str, Any]] = [copy.deepcopy(dict(w)) for w in scenario.windows]
        self.focused = scenario.focused
        self.state: dict[str, Any] = copy.deepcopy(dict(scenario.state))
        self.hard_stop = scenario.hard_stop
        self.clock = SimClock(scenario.costs)
        self.step_index = 0
        self._fired: set[int] = set()
        self._rng = np.random.default_rng([seed, int((scenario.random_faults or {}).get("seed", 0))])
        self._rules = {r.key: r for r in scenario.rules}

    # -- scene queries -------------------------------------------------

    def window(self, wid: str) -> dict[str, Any] | None:
        for w in self.windows:
            if w["id"] == wid:
                return w
        return None

    def _occluded_ids(self) -> set[str]:
        out: set[str] = set()
        for i, w in enumerate(self.windows):
            occ = w.get("occludes")
            if not occ:
                continue
            for other in self.windows[:i]:
                for c in other.get("components", []):
                    if occ == "*" or c["id"] in occ or other["id"] in occ:
                        out.add(c["id"])
        return out

    def ground(self) -> ScreenState:
        occluded = self._occluded_ids()
        comps = []
        for w in self.windows:
            for c in w.get("components", []):
                comps.append(Component(c["id"], c.get("role", "component"), c["label"], w["id"],
                                       bool(c.get("actionable", True)), c["id"] in occluded))
        counts: dict[str, int] = {}
        for c in comps:
            counts[c.role] = counts.get(c.role, 0) + 1
        focused = self.window(self.focused) if self.focused else None
        return ScreenState(
            window_title=focused.get("title", focused["id"]) if focused else None,
            focused=self.focused,
            windows=tuple((w["id"], w.get("title", w["id"])) for w in self.windows),
            panels=tuple(focused.get("panels", [])) if focused else (),
            components=tuple(comps),
            counts=dict(sorted(counts.items())),
        )

    def holds(self, pred: Mapping[str, Any] | None) -> bool:
        if not pred:
            return True
        open_ids = {w["id"] for w in self.windows}
        if "focused" in pred and self.focused != pred["focused"]:
            return False
        if "window_open" in pred and pred["window_open"] not in open_ids:
            return False
        if "window_closed" in pred and pred["window_closed"] in open_ids:
            return False
        for k, v in pred.get("state", {}).items():
            if self.state.get(k) != v:
                return False
        for k, v in pred.get("state_contains", {}).items():
            if str(v) not in str(self.state.get(k, "")):
                return False
        if "component" in pred and not any(c["id"] == pred["component"]
                                           for w in self.windows for c in w.get("components", [])):
            return False
        return True

    # -- mutation -------------------------------------------------------

    def _apply_effects(self, effects, text: str | None) -> None:
        for eff in effects:
            op = eff["op"]
            if op == "open_window":
                win = copy.deepcopy(dict(eff["window"]))
                self.windows = [w for w in self.windows if w["id"] != win["id"]] + [win]
                if eff.get("focus", True):
                    self.focused = win["id"]
            elif op == "close_window":
                self.windows = [w for w in self.windows if w["id"] != eff["id"]]
                if self.focused == eff["id"]:
                    self.focused = eff.get("refocus") or (self.windows[-1]["id"] if self.windows else None)
            elif op == "focus":
                if self.window(eff["id"]) is not None:
                    self.focused = eff["id"]
            elif op == "set":
                self.state[eff["key"]] = eff["value"]
            elif op == "append":
                value = self._expand(str(eff.get("value", "$text")), text)
                self.state[eff["key"]] = str(self.state.get(eff["key"], "")) + value
            elif op == "add_component":
                w = self.window(eff["window"])
                if w is not None:
                    w.setdefault("components", []).append(copy.deepcopy(dict(eff["component"])))
            elif op == "remove_component":
                for w in self.windows:
                    w["components"] = [c for c in w.get("components", []) if c["id"] != eff["id"]]
            elif op == "hard_stop":
                self.hard_stop = True

    def _expand(self, value: str, text: str | None) -> str:
        value = _STATE_REF.sub(lambda m: str(self.state.get(m.group(1), "")), value)
        return value.replace("$text", text or "")

    def _fire_faults(self) -> None:
        for i, f in enumerate(self.scenario.faults):
            if i in self._fired:
                continue
            if (f.after_step is not None and self.step_index == f.after_step) or (f.when is not None and self.holds(f.when)):
                self._fired.add(i)
                self._apply_effects(f.effects, None)
        rf = self.scenario.random_faults
        if rf and self._rng.random() < float(rf.get("rate", 0.0)):
            self._apply_effects(rf.get("effects", []), None)

    def apply(self, action: Action) -> StepResult:
        self.step_index += 1
        self.clock.advance(action.verb)
        result = self._apply(action)
        self._fire_faults()
        return StepResult(result[0], result[1], self.clock.ticks)

    def _apply(self, a: Action) -> tuple[bool, str]:
        if a.verb == "wait":
            return True, "waited"
        if a.verb == "switch_focus":
            wid = a.target
            comp_window = self._component_window(a.target) if a.target else None
            wid = comp_window or wid
            if wid is None or self.window(wid) is None:
                return False, f"no window {a.target!r}"
            self.focused = wid
            return True, f"focused {wid}"
        rule = None
        if a.target is not None:
            wid = self._component_window(a.target)
            if wid is None:
                return False, f"missing component {a.target!r}"
            if a.target in self._occluded_ids():
                return False, f"component {a.target!r} is occluded"
            comp = self._component(a.target)
            if not comp.get("actionable", True):
                return False, f"component {a.target!r} is not actionable"
            if a.verb in KEYBOARD_VERBS and self.focused != wid:
                return False, f"not focused: {a.target!r} is in {wid!r}, focus is {self.focused!r}"
            if a.verb not in KEYBOARD_VERBS:
                self.focused = wid
            rule = self._rules.get((a.verb, "component", a.target, a.text)) or \
                self._rules.get((a.verb, "component", a.target, None))
        else:
            if self.focused is None:
                return False, "no focused window"
            rule = self._rules.get((a.verb, "window", self.focused, a.text)) or \
                self._rules.get((a.verb, "window", self.focused, None))
        if rule is None:
            return False, "no effect"
        if not self.holds(rule.when):
            return False, "guard not satisfied"
        self._apply_effects(rule.effects, a.text)
        return True, "applied"

    def _component(self, cid: str) -> dict[str, Any]:
        for w in self.windows:
            for c in w.get("components", []):
                if c["id"] == cid:
                    return c
        raise KeyError(cid)

    def _component_window(self, cid: str | None) -> str | None:
        for w in self.windows:
            for c in w.get("components", []):
                if c["id"] == cid:
                    return w["id"]
        return None

    def snapshot(self) -> dict[str, Any]:
        return {"windows": copy.deepcopy(self.windows), "focused": self.focused, "state": copy.deepcopy(self.state),
                "ticks": self.clock.ticks, "hard_stop": self.hard_stop}


def ground(sim: SimDesktop) -> ScreenState:
    return sim.ground()


def apply(sim: SimDesktop, action: Action) -> StepResult:
    return sim.apply(action)
