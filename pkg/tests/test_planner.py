from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from conftest import FIXTURES
from scripted import ScriptedEncoder, load_case
from intentmem.errors import PlanningError, SlotError
from intentmem.memory import APPROVED, REJECTED, PlanMemory, load_index
from intentmem.planner import (
    HIT,
    MISS,
    PARTIAL,
    CacheDecision,
    CommandLabeling,
    HintGenerator,
    NoisyLabeler,
    Planner,
    PlannerConfig,
    RuleLabeler,
    TaskUnit,
    insert_position,
    missing_acts,
    slot_labels,
    steps_from_hint,
    trim_plan,
)
from intentmem.plans import GAP_FILLED, REUSED, SYNTHESIZED, GlobalPlan, PlanStep, PlanUnit

CACHE = FIXTURES / "cache"


def _num(expr):
    return float(eval(expr, {"__builtins__": {}, "sqrt": math.sqrt}))


def _case_planner(name):
    case = load_case(CACHE / f"{name}.json")
    enc = ScriptedEncoder(case["query_z"], case["slot_z"])
    planner = Planner(enc, load_index(CACHE / "index.json"), PlanMemory(PlanMemory.load(CACHE / "memory.json").entries))
    return case, planner


def _check_decision(decision, expected):
    assert decision.case == expected["case"]
    assert decision.plan_id == expected["plan_id"]
    assert decision.score == pytest.approx(_num(expected["score"]), abs=1e-12)
    assert list(decision.missing_acts) == expected["missing_acts"]
    assert decision.ig_id == expected["ig_id"]


def _triples(steps):
    return [(s.verb, s.object, s.text) for s in steps]


def test_case1_miss_synthesizes():
    case, planner = _case_planner("case1_miss")
    res = planner.plan(case["command"])
    _check_decision(res.decision, case["expected"])
    assert res.generator_calls == case["generator_calls"]
    assert {u.provenance for u in res.plan.units} == {SYNTHESIZED}


def test_case2_hit_reuses_without_generation():
    case, planner = _case_planner("case2_hit")
    res = planner.plan(case["command"])
    _check_decision(res.decision, case["expected"])
    assert res.generator_calls == 0 and planner.generator.calls == 0
    assert _triples(res.plan.steps) == [tuple(s) for s in case["steps"]]
    assert {u.provenance for u in res.plan.units} == {REUSED}


def test_case3_partial_adds_bound_hint_steps():
    case, planner = _case_planner("case3_partial")
    res = planner.plan(case["command"])
    _check_decision(res.decision, case["expected"])
    assert res.generator_calls == case["generator_calls"]
    hint = planner.index.sg(case["hint_sg"]).best_hint()
    bound = steps_from_hint(hint, case["hint_bindings"])
    want = Counter(tuple(s) for s in case["original_steps"]) + Counter(_triples(bound))
    assert Counter(_triples(res.plan.steps)) == want
    assert [u.act for u in res.plan.units] == ["open notepad", "write note", "save file"]
    assert res.plan.units[-1].provenance == GAP_FILLED


def test_pm_off_always_misses():
    case, planner = _case_planner("case2_hit")
    planner.cfg = PlannerConfig(use_pm=False)
    assert planner.plan(case["command"]).decision.case == MISS


def test_partial_needs_skills():
    case, planner = _case_planner("case3_partial")
    planner.cfg = PlannerConfig(use_skills=False)
    assert planner.plan(case["command"]).decision.case == MISS


def test_cache_decision_invariants():
    with pytest.raises(PlanningError):
        CacheDecision(HIT, "p", 1.0, ("x",))
    with pytest.raises(PlanningError):
        CacheDecision(PARTIAL, "p", 0.9, ())
    with pytest.raises(PlanningError):
        CacheDecision(PARTIAL, "p", 0.9, ("a", "b", "c"))


def test_missing_acts_is_multiset_difference():
    assert missing_acts(["a", "b", "a"], ["a", "b"]) == ["a"]
    assert missing_acts(["a"], ["a", "a"]) == []


def _unit(act, *verbs):
    return PlanUnit(act, "e", act, act, tuple(PlanStep(v) for v in verbs))


def test_trim_plan_keeps_requested_acts():
    plan = GlobalPlan((_unit("a", "click"), _unit("b", "enter"), _unit("a", "scroll")))
    assert [u.act for u in trim_plan(plan, ["a", "b"]).units] == ["a", "b"]
    with pytest.raises(PlanningError):
        trim_plan(plan, ["z"])


def test_insert_position_follows_command_order():
    lab = CommandLabeling("c", tuple(TaskUnit("e", a, a) for a in ("x", "y", "z")))
    plan = GlobalPlan((_unit("x", "click"), _unit("z", "click")))
    assert insert_position(plan, lab, "y") == 1
    assert insert_position(plan, lab, "x") == 0


def test_slot_labels_disambiguate_repeats():
    lab = CommandLabeling("c", (TaskUnit("e", "a", "d"), TaskUnit("e", "a", "d"), TaskUnit("e", "b", "d")))
    assert slot_labels(lab) == ["a", "a #2", "b"]


@pytest.mark.parametrize("command, acts", [
    ("open notepad and write buy milk", ["open notepad", "write note"]),
    ("write meeting at noon in notepad, then save it as notes.txt", ["open notepad", "write note", "save file"]),
    ("open the folder C:\\Projects", ["open explorer", "open folder"]),
    ("search pizza near me at a browser, then visit www.shop.example", ["open browser", "search", "visit site"]),
    ("open music", ["open music"]),
])
def test_rule_labeler(command, acts):
    assert RuleLabeler().label(command).acts == acts


def test_rule_labeler_bindings():
    lab = RuleLabeler().label("write draft intro in notepad, save it as draft.txt")
    assert lab.bindings() == {"text": "draft intro", "file_path": "draft.txt"}


def test_rule_labeler_rejects_unknown():
    with pytest.raises(PlanningError):
        RuleLabeler().label("dance a little")
    with pytest.raises(PlanningError):
        RuleLabeler().label("   ")


def test_noisy_labeler_swaps_nest_across_levels():
    base = RuleLabeler()
    cmds = ["open notepad and write buy milk", "search dog at a browser"] * 10
    changed = {}
    for noise in (0.0, 0.2, 0.5, 1.0):
        lab = NoisyLabeler(base, noise, seed=3)
        changed[noise] = {(i, k) for i, c in enumerate(cmds)
                          for k, (u, v) in enumerate(zip(lab.label(c).units, base.label(c).units)) if u.act != v.act}
    assert changed[0.0] == set()
    assert changed[0.2] <= changed[0.5] <= changed[1.0]


def test_generator_falls_back_to_templates():
    gen = HintGenerator()
    steps = gen.generate(TaskUnit("e", "search", "d"), None, [], {"query": "cats"})
    assert _triples(steps) == [("text_input", "search box", "cats")]
    assert gen.calls == 1


class _Boom(HintGenerator):
    def generate(self, *a, **k):
        raise RuntimeError("down")


def test_generator_failure_names_the_slot():
    case, planner = _case_planner("case1_miss")
    planner.generator = _Boom()
    with pytest.raises(SlotError, match="open browser"):
        planner.plan(case["command"])


def test_approval_gates_storage():
    case, planner = _case_planner("case1_miss")
    res = planner.plan(case["command"])
    n = len(planner.memory)
    assert planner.approve(res, REJECTED) is False and len(planner.memory) == n
    assert planner.approve(res, APPROVED) is True and len(planner.memory) == n + 1
    with pytest.raises(PlanningError):
        planner.approve(res, "sure")
    again = planner.plan(case["command"])
    assert again.decision.case == HIT and again.generator_calls == 0


def test_golden_planner_is_deterministic(learned):
    cmd = "write project ideas in notepad and save it as ideas.txt"
    a = Planner(learned.encoder, learned.index).plan(cmd)
    b = Planner(learned.encoder, learned.index).plan(cmd)
    assert a.plan == b.plan
    assert [u.act for u in a.plan.units] == ["open notepad", "write note", "save file"]
    texts = [s.text for s in a.plan.steps if s.text]
    assert "project ideas" in texts and "ideas.txt" in texts
