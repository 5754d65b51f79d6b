from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from intentmem.config import load_config
from intentmem.encoder import load_checkpoint, save_checkpoint
from intentmem.errors import ConfigError, CorruptFileError, PersistenceError
from intentmem.hierarchy import load_hierarchy, save_hierarchy
from intentmem.memory import PlanMemory, load_index, save_index
from intentmem.persist import (
    atomic_write_text,
    decode_array,
    encode_array,
    file_digest,
    read_document,
    write_document,
)


def test_defaults_and_seed_override():
    cfg = load_config()
    assert cfg.seed == 0 and cfg.epochs == 20
    seeded = load_config(seed=7)
    assert seeded.seed == 7 and seeded.encoder.seed == 7


def test_user_file_overlays_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"training": {"epochs": 3}, "executor": {"max_retries": 1}}))
    cfg = load_config(path)
    assert cfg.epochs == 3 and cfg.executor.max_retries == 1
    assert cfg.planner == load_config().planner


@pytest.mark.parametrize("text, match", [
    ('{"bogus": 1}', "unknown config sections"),
    ('{"planner": {"nope": 1}}', "bad config value"),
    ("[1]", "top level"),
    ("{", "Expecting"),
])
def test_bad_config_raises(tmp_path, text, match):
    path = tmp_path / "c.json"
    path.write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.json")


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_array_roundtrip_is_exact(arr):
    back = decode_array(json.loads(json.dumps(encode_array(arr))))
    assert back.tobytes() == arr.tobytes()


def test_bad_array_record():
    with pytest.raises(CorruptFileError):
        decode_array({"shape": [2], "dtype": "<f8", "data": "!!"})


def test_document_header_is_checked(tmp_path):
    path = tmp_path / "d.json"
    write_document(path, "plan", {"x": 1})
    assert read_document(path, "plan")["x"] == 1
    with pytest.raises(CorruptFileError, match="expected format"):
        read_document(path, "report")
    doc = json.loads(path.read_text())
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(CorruptFileError, match="version"):
        read_document(path, "plan")
    path.write_bytes(b"\xff\xfe")
    with pytest.raises(CorruptFileError):
        read_document(path, "plan")
    with pytest.raises(PersistenceError):
        read_document(tmp_path / "missing.json", "plan")


def test_nan_payload_is_refused_and_target_untouched(tmp_path):
    path = tmp_path / "d.json"
    write_document(path, "plan", {"x": 1})
    before = path.read_bytes()
    with pytest.raises(PersistenceError):
        write_document(path, "plan", {"x": float("nan")})
    assert path.read_bytes() == before


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write_text(tmp_path / "a.txt", "one")
    atomic_write_text(tmp_path / "a.txt", "two")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
    assert (tmp_path / "a.txt").read_text() == "two"


def _truncate(path):
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])


def _wrong_format(path):
    doc = json.loads(path.read_text())
    text = json.dumps(doc).replace('"format": "intentmem/', '"format": "intentmem/x', 1)
    path.write_text(text)


@pytest.mark.parametrize("corrupt", [_truncate, _wrong_format])
def test_corrupt_artifacts_raise_typed_errors(learned, tmp_path, corrupt):
    paths = {"h": tmp_path / "h.json", "i": tmp_path / "i.json", "c": tmp_path / "c.json"}
    save_hierarchy(learned.index.hierarchy, paths["h"])
    save_index(learned.index, paths["i"])
    save_checkpoint(learned.params, paths["c"])
    loaders = {"h": load_hierarchy, "i": load_index, "c": load_checkpoint}
    for key, path in paths.items():
        digest = file_digest(path)
        corrupt(path)
        with pytest.raises(CorruptFileError):
            loaders[key](path)
        assert file_digest(path) != digest
    assert sorted(p.name for p in tmp_path.iterdir()) == ["c.json", "h.json", "i.json"]


def test_corrupt_memory_does_not_replace_existing_state(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"format": "intentmem/plan-memory", "version": 1, "entries": [{"plan_id": 1}]}')
    mem = PlanMemory()
    with pytest.raises(CorruptFileError):
        mem = PlanMemory.load(path)
    assert len(mem) == 0 and mem.path is None


def test_artifact_roundtrip_is_byte_stable(learned, tmp_path):
    save_index(learned.index, tmp_path / "a.json")
    save_index(load_index(tmp_path / "a.json"), tmp_path / "b.json")
    assert file_digest(tmp_path / "a.json") == file_digest(tmp_path / "b.json")
    save_checkpoint(learned.params, tmp_path / "c1.json")
    save_checkpoint(load_checkpoint(tmp_path / "c1.json"), tmp_path / "c2.json")
    assert file_digest(tmp_path / "c1.json") == file_digest(tmp_path / "c2.json")
