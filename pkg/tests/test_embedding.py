from __future__ import annotations

import json

import numpy as np
import pytest
import requests

from intentmem.embedding import (
    EmbeddingCache,
    HashingProvider,
    ProviderConfig,
    embed_units,
    embed_views,
    make_provider,
)
from intentmem.errors import ProviderError
from intentmem.trace_model import IntentUnit


def test_hashing_is_deterministic_and_normalized():
    p = HashingProvider(64)
    a, b = p.embed(["open the notepad", "open the notepad"])
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0)


def test_hashing_preserves_lexical_overlap():
    p = HashingProvider(3072)
    a, b, c = p.embed(["search the web for flights", "search the web for hotels", "play a song"])
    assert a @ b > a @ c


def test_provider_rejects_empty_text():
    prov = make_provider(ProviderConfig(dimension=16))
    with pytest.raises(ProviderError):
        prov.embed(["ok", "  "])


def test_config_validation():
    with pytest.raises(ProviderError):
        ProviderConfig(kind="magic")
    with pytest.raises(ProviderError):
        ProviderConfig(kind="http")
    with pytest.raises(ProviderError):
        ProviderConfig(dimension=4)


def test_views_follow_unit_kind():
    prov = make_provider(ProviderConfig(dimension=16))
    views = embed_views(IntentUnit("u", "browsing", "web", "flights", "find flights"), prov)
    assert sorted(views) == ["D", "E", "K"]
    batched = embed_units([IntentUnit("u", "browsing", "web", "flights", "find flights")], prov)[0]
    for v in views:
        assert np.array_equal(batched[v], views[v].vector)


def test_cache_avoids_repeat_calls(tmp_path):
    cfg = ProviderConfig(dimension=16, cache_path=str(tmp_path / "cache.jsonl"))
    prov = make_provider(cfg)
    first = prov.embed(["alpha", "beta"])
    second = prov.embed(["beta", "alpha"])
    assert prov.calls == 1
    assert np.array_equal(first[::-1], second)
    reopened = make_provider(cfg)
    assert len(reopened.cache) == 2
    assert np.array_equal(reopened.embed(["alpha"])[0], first[0])
    assert reopened.calls == 0


def test_cache_tolerates_torn_tail(tmp_path):
    path = tmp_path / "cache.jsonl"
    path.write_text(json.dumps({"key": "k", "vector": [1.0, 2.0]}) + "\n{\"key\": \"z\", \"vec", "utf-8")
    cache = EmbeddingCache(path)
    assert len(cache) == 1 and cache.get("k").tolist() == [1.0, 2.0]


class _Resp:
    def __init__(self, body, status=200):
        self.body, self.status = body, status

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError(f"status {self.status}")

    def json(self):
        return self.body


class _Session:
    def __init__(self, resp):
        self.resp, self.sent = resp, []

    def post(self, url, json=None, headers=None, timeout=None):
        self.sent.append((url, json, headers))
        return self.resp


def test_http_provider_reads_response():
    cfg = ProviderConfig(kind="http", endpoint="http://embed.local/v1", dimension=8, auth_token="t", model="m")
    sess = _Session(_Resp({"data": [{"embedding": [0.5] * 8}, {"embedding": [1.0] * 8}]}))
    out = make_provider(cfg, session=sess).embed(["a", "b"])
    assert out.shape == (2, 8) and out[1, 0] == 1.0
    url, payload, headers = sess.sent[0]
    assert payload == {"input": ["a", "b"], "model": "m"}
    assert headers == {"Authorization": "Bearer t"}


@pytest.mark.parametrize("resp", [
    _Resp({"data": [{"embedding": [0.5] * 7}]}),
    _Resp({"wrong": []}),
    _Resp({}, status=500),
    _Resp({"data": [{"embedding": [float("nan")] * 8}]}),
])
def test_http_provider_errors_are_typed(resp):
    cfg = ProviderConfig(kind="http", endpoint="http://embed.local/v1", dimension=8)
    with pytest.raises(ProviderError):
        make_provider(cfg, session=_Session(resp)).embed(["a"])
