from __future__ import annotations

from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentmem.errors import DegenerateSkillError, UnresolvedVerbError
from intentmem.skills import (
    SkillConfig,
    classify_value,
    d_sig,
    induce_for_members,
    medoid,
    parameterize,
    support_of,
)
from intentmem.trace_model import ActionStep, IntentUnit, load_alias_map

PHI = load_alias_map()
VERBS = ("open", "click", "text_input", "enter", "hotkey", "scroll")
sigs = st.lists(st.sampled_from(VERBS), max_size=6).map(tuple)


def edit_oracle(a, b) -> int:
    """Recursive definition of edit distance, independent of the DP table."""

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == 0 or j == 0:
            return i + j
        return min(go(i - 1, j) + 1, go(i, j - 1) + 1, go(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return go(len(a), len(b))


def medoid_oracle(cands):
    def cost(sig):
        return sum(edit_oracle(sig, o) / max(len(sig), len(o), 1) for _, o in cands)

    costs = [(cost(s), sum(edit_oracle(s, o) for _, o in cands), cid) for cid, s in cands]
    return min(costs)[2]


def random_candidates(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    return [(f"t{i}", tuple(rng.choice(VERBS, int(rng.integers(0, 6))))) for i in range(n)]


def test_d_sig_examples():
    d = d_sig(["open"], ["open", "click"])
    assert (d.raw, d.value) == (1, 0.5)
    assert d_sig([], []).value == 0.0
    with pytest.raises(UnresolvedVerbError):
        d_sig(["open", None], ["open"])


@given(sigs, sigs)
def test_edit_distance_matches_oracle(a, b):
    assert d_sig(a, b).raw == edit_oracle(a, b)


@settings(max_examples=300)
@given(sigs, sigs, sigs)
def test_d_sig_metric_axioms(a, b, c):
    ab, ba, ac, bc = d_sig(a, b).value, d_sig(b, a).value, d_sig(a, c).value, d_sig(b, c).value
    assert 0.0 <= ab <= 1.0
    assert (ab == 0.0) == (a == b)
    assert ab == ba
    assert ac <= ab + bc + 1e-12


@pytest.mark.parametrize("seed", range(40))
def test_medoid_matches_exhaustive(seed):
    cands = random_candidates(seed)
    assert medoid(cands) == medoid_oracle(cands)


@settings(max_examples=50)
@given(st.lists(sigs, min_size=1, max_size=8), sigs)
def test_support_monotone_in_threshold(members, sig):
    values = [support_of(sig, members, t) for t in np.linspace(0.0, 1.0, 11)]
    assert all(x >= y for x, y in zip(values, values[1:]))
    assert values[0] == len(members)


def test_classify_value():
    assert classify_value("text", "https://x.org") == "url"
    assert classify_value("text", "notes.txt") == "file_path"
    assert classify_value("text", "cheap flights", "search_box") == "query"
    assert classify_value("text", "buy milk", "editor") == "text"
    assert classify_value("component_ref", "https://x.org") == "component_ref"


def _steps(*raws):
    return tuple(ActionStep(r) for r in raws)


def test_parameterize_prunes_and_templates():
    hint = parameterize(_steps("click the search box", "wait", "type cheap flights into the search box",
                               "close the popup", "press enter"), PHI, prototype_id="u1")
    assert hint.verb_sequence == ("click", "text_input", "close", "enter")
    text_step = hint.steps[1]
    assert text_step.args["text"] == "<query>"
    assert hint.arg_schema == ("<query>", "<app_name>")


def test_parameterize_drops_recovery_steps():
    steps = (ActionStep("open Notepad"), ActionStep("close the popup", flags=("recovery",)))
    hint = parameterize(steps, PHI)
    assert hint.verb_sequence == ("open",)
    assert hint.steps[0].args["target"] == "<app_name>"


def test_parameterize_empty_after_pruning():
    with pytest.raises(DegenerateSkillError):
        parameterize(_steps("wait", "wait 2s"), PHI, prototype_id="x")


def _unit(uid, *raws):
    return IntentUnit(uid, "control", "local", "save file", "save the file", _steps(*raws))


def test_induce_ranks_by_support_with_medoid_first():
    units = [
        _unit("a", "ctrl+s", "type report.txt into the file name box", "click Save"),
        _unit("b", "ctrl+s", "type notes.txt into the file name box", "click Save"),
        _unit("c", "ctrl+s", "type x.txt into the file name box", "wait", "click Save"),
        _unit("d", "save report.txt"),
    ]
    hints = induce_for_members("sg0", units, PHI, SkillConfig(tau_support=0.6, min_support=1))
    best = hints[0]
    assert best.is_medoid and best.rank == 1
    assert best.verb_sequence == ("hotkey", "text_input", "click")
    assert best.support == 3
    assert best.steps[1].args["text"] == "<file_path>"
    assert set(best.source_trace_ids) <= {"a", "b", "c", "d"}
    assert [h.rank for h in hints] == list(range(1, len(hints) + 1))
    assert all(x.support >= y.support for x, y in zip(hints, hints[1:]))


def test_induce_without_actions_is_empty():
    assert induce_for_members("sg0", [IntentUnit("a", "control", "e", "a", "d")], PHI) == []
