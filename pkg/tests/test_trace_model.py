from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentmem.errors import AliasMapError, TraceFormatError, UnresolvedVerbError
from intentmem.trace_model import (
    VOCABULARY_SIZE,
    ActionStep,
    AliasMap,
    IntentUnit,
    canonicalize_action,
    load_alias_map,
    parse_trace_file,
    read_trace_file,
    serialize_units,
    signature_of,
    unit_to_record,
)

PHI = load_alias_map()


def _line(**kw) -> str:
    rec = {"id": "u1", "kind": "control", "env": "web", "act": "search", "desc": "look it up", "actions": []}
    rec.update(kw)
    return json.dumps(rec)


def test_alias_map_has_full_vocabulary():
    assert len(PHI.vocabulary) == VOCABULARY_SIZE
    assert set(PHI.vocabulary) == set(PHI.field_schema)


def test_alias_map_rejects_unknown_verb():
    doc = json.loads(json.dumps({"vocabulary": list(PHI.vocabulary), "field_schema": PHI.field_schema,
                                 "patterns": [{"pattern": "x", "verb": "teleport"}]}))
    with pytest.raises(AliasMapError):
        AliasMap.from_dict(doc)


def test_alias_map_rejects_short_vocabulary():
    with pytest.raises(AliasMapError):
        AliasMap.from_dict({"vocabulary": ["open"], "field_schema": {"open": {}}, "patterns": []})


@pytest.mark.parametrize("raw, verb, args", [
    ("double-click Notepad", "doubleclick", {"target": "Notepad"}),
    ("open Notepad", "open", {"target": "Notepad"}),
    ("press enter", "enter", {}),
    ("type 'buy milk' into the editor", "text_input", {"target": "editor", "text": "buy milk"}),
    ("ctrl+s", "hotkey", {"keys": "ctrl+s"}),
    ("visit www.example.com", "text_input", {"target": "address_bar", "text": "www.example.com"}),
    ("save report.txt", "save", {"path": "report.txt"}),
    ("scroll down", "scroll", {}),
])
def test_canonicalize_examples(raw, verb, args):
    step = canonicalize_action(ActionStep(raw), PHI)
    assert step.verb == verb
    assert dict(step.args) == args


def test_canonicalize_unknown_raises():
    with pytest.raises(UnresolvedVerbError):
        canonicalize_action(ActionStep("teleport somewhere"), PHI)


def test_explicit_args_override_captures():
    step = canonicalize_action(ActionStep("click the button", args={"target": "ok_btn"}), PHI)
    assert step.verb == "click" and step.args["target"] == "ok_btn" and step.object == "ok_btn"


RAWS = ["open Notepad", "double-click Mail", "click the Send button", "press enter", "ctrl+s",
        "type hello into the search box", "scroll down", "wait", "close the popup", "copy", "paste into editor"]


@given(st.sampled_from(RAWS))
def test_canonicalize_is_idempotent(raw):
    once = canonicalize_action(ActionStep(raw), PHI)
    assert canonicalize_action(once, PHI) == once
    assert once.verb in PHI.vocabulary


def test_signature_requires_verbs():
    with pytest.raises(UnresolvedVerbError):
        signature_of([ActionStep("open x")])
    assert signature_of([ActionStep("x", verb="open"), ActionStep("y", verb="click")]) == ("open", "click")


def test_unit_requires_nonempty_views():
    with pytest.raises(ValueError):
        IntentUnit("u", "control", "web", " ", "d")
    with pytest.raises(ValueError):
        IntentUnit("u", "other", "web", "a", "d")


def test_middle_view_follows_kind():
    assert IntentUnit("a", "control", "e", "x", "d").views() == {"E": "e", "A": "x", "D": "d"}
    assert IntentUnit("b", "browsing", "e", "x", "d").views() == {"E": "e", "K": "x", "D": "d"}


def test_parse_keeps_valid_lines_and_reports_bad_ones():
    data = "\n".join([_line(), "{not json", _line(id="u2", env=""), _line(), _line(id="u3")]).encode()
    tf = parse_trace_file(data)
    assert [u.id for u in tf.units] == ["u1", "u3"]
    assert [d.line for d in tf.diagnostics] == [2, 3, 4]
    assert "duplicate" in tf.diagnostics[-1].message


def test_parse_all_invalid_raises():
    with pytest.raises(TraceFormatError):
        parse_trace_file(b"{bad\n[1, 2]\n")


def test_parse_blank_input_is_empty():
    assert parse_trace_file(b"\n  \n").units == []


def test_parse_non_utf8_raises():
    with pytest.raises(TraceFormatError):
        parse_trace_file(b"\xff\xfe")


def test_read_missing_file_is_typed(tmp_path):
    with pytest.raises(TraceFormatError):
        read_trace_file(tmp_path / "absent.jsonl")


_text = st.text(alphabet="abcdefgh xyz", min_size=1, max_size=12).filter(lambda s: s.strip())


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(["control", "browsing"]), _text, _text, _text,
                          st.lists(st.sampled_from(RAWS), max_size=4)), min_size=1, max_size=5))
def test_serialize_roundtrip(rows):
    units = [IntentUnit(f"u{i}", k, e, a, d, tuple(ActionStep(r) for r in acts))
             for i, (k, e, a, d, acts) in enumerate(rows)]
    back = parse_trace_file(serialize_units(units))
    assert back.diagnostics == []
    assert [unit_to_record(u) for u in back.units] == [unit_to_record(u) for u in units]


def test_golden_corpus_parses_cleanly():
    from conftest import DATA

    tf = read_trace_file(DATA / "golden_traces.jsonl")
    assert len(tf.units) == 99 and tf.diagnostics == []
    for u in tf.units:
        for a in u.actions:
            assert canonicalize_action(a, PHI).verb in PHI.vocabulary
