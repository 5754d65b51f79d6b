"""Per-view raw text embeddings.

Two providers: a deterministic signed feature-hashing embedder (the offline
default) and an HTTP client for an external embedding service. Either can be
wrapped with an append-only on-disk cache keyed by provider id and content
digest.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import requests

from .errors import ProviderError
from .trace_model import IntentUnit

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "hashing"
    dimension: int = 3072
    endpoint: str | None = None
    auth_token: str | None = None
    model: str | None = None
    cache_path: str | None = None
    input_field: str = "input"
    data_field: str = "data"
    embedding_field: str = "embedding"
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.kind not in ("hashing", "http"):
            raise ProviderError(f"unknown provider kind {self.kind!r}")
        if self.dimension < 8:
            raise ProviderError("embedding dimension must be >= 8")
        if self.kind == "http" and not self.endpoint:
            raise ProviderError("http provider needs an endpoint")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ProviderConfig":
        return cls(**dict(doc))


@dataclass(frozen=True)
class RawEmbedding:
    vector: np.ndarray
    provider_id: str


def hashed_features(text: str, ngram_max: int = 2) -> list[str]:
    tokens = _TOKEN.findall(text.lower())
    if not tokens:
        return ["raw:" + text]
    feats = []
    for n in range(1, ngram_max + 1):
        for i in range(len(tokens) - n + 1):
            feats.append(f"{n}:" + " ".join(tokens[i : i + n]))
    return feats


class HashingProvider:
    """Signed feature hashing of token uni/bi-grams, L2-normalized."""

    def __init__(self, dimension: int = 3072, ngram_max: int = 2):
        self.dimension = dimension
        self.ngram_max = ngram_max
        self.provider_id = f"hashing-v1:d{dimension}:n{ngram_max}"

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for feat in hashed_features(text, self.ngram_max):
            h = int.from_bytes(hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest(), "big")
            vec[h % self.dimension] += 1.0 if (h >> 63) & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # every feature cancelled out; fall back to a single bucket
            h = int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big")
            vec[h % self.dimension] = 1.0
            norm = 1.0
        return vec / norm

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self._embed_one(t) for t in texts]) if texts else np.zeros((0, self.dimension))


def _dig(doc: Any, dotted: str) -> Any:
    for part in dotted.split(".") if dotted else []:
        doc = doc[int(part)] if isinstance(doc, list) else doc[part]
    return doc


class HttpProvider:
    """POST ``{input_field: [texts]}``; read ``data_field[*].embedding_field``."""

    def __init__(self, cfg: ProviderConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.dimension = cfg.dimension
        self.session = session or requests.Session()
        self.provider_id = f"http:{cfg.endpoint}:{cfg.model or '-'}:d{cfg.dimension}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension))
        payload: dict[str, Any] = {self.cfg.input_field: list(texts)}
        if self.cfg.model:
            payload["model"] = self.cfg.model
        headers = {"Authorization": f"Bearer {self.cfg.auth_token}"} if self.cfg.auth_token else {}
        try:
            resp = self.session.post(self.cfg.endpoint, json=payload, headers=headers, timeout=self.cfg.timeout)
            resp.raise_for_status()
            body = resp.json()
            rows = [_dig(item, self.cfg.embedding_field) for item in _dig(body, self.cfg.data_field)]
        except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"embedding request to {self.cfg.endpoint} failed: {exc}") from exc
        out = np.asarray(rows, dtype=float)
        if out.shape != (len(texts), self.dimension):
            raise ProviderError(f"remote returned shape {out.shape}, expected {(len(texts), self.dimension)}")
        if not np.all(np.isfinite(out)):
            raise ProviderError("remote returned non-finite embedding values")
        return out


class EmbeddingCache:
    """Append-only JSONL file of ``{"key": digest, "vector": [...]}`` records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._store: dict[str, np.ndarray] = {}
        if self.path.exists():
            for line in self.path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self._store[rec["key"]] = np.asarray(rec["vector"], dtype=float)
                except (json.JSONDecodeError, KeyError, TypeError):
                    # a torn final append is tolerated; the entry is recomputed
                    continue

    @staticmethod
    def key(provider_id: str, text: str) -> str:
        return hashlib.sha256(f"{provider_id}\x00{text}".encode("utf-8")).hexdigest()

    def get(self, key: str) -> np.ndarray | None:
        return self._store.get(key)

    def put(self, key: str, vector: np.ndarray) -> None:
        with self._lock:
            if key in self._store:
                return
            self._store[key] = np.array(vector, dtype=float)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "vector": [float(v) for v in vector]}) + "\n")

    def __len__(self) -> int:
        return len(self._store)


class Provider:
    """A backend plus optional cache; the object the rest of the package uses."""

    def __init__(self, backend: HashingProvider | HttpProvider, cache: EmbeddingCache | None = None):
        self.backend = backend
        self.cache = cache
        self.provider_id = backend.provider_id
        self.dimension = backend.dimension
        self.calls = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        for t in texts:
            if not isinstance(t, str) or not t.strip():
                raise ProviderError("cannot embed empty text")
        if self.cache is None:
            self.calls += 1
            return self.backend.embed(texts)
        keys = [EmbeddingCache.key(self.provider_id, t) for t in texts]
        out = np.zeros((len(texts), self.dimension))
        missing = [i for i, k in enumerate(keys) if self.cache.get(k) is None]
        if missing:
            self.calls += 1
            fresh = self.backend.embed([texts[i] for i in missing])
            for row, i in zip(fresh, missing):
                self.cache.put(keys[i], row)
        for i, k in enumerate(keys):
            out[i] = self.cache.get(k)
        return out

    def embed_one(self, text: str) -> RawEmbedding:
        return RawEmbedding(self.embed([text])[0], self.provider_id)


def make_provider(cfg: ProviderConfig, session: requests.Session | None = None) -> Provider:
    backend: HashingProvider | HttpProvider
    if cfg.kind == "hashing":
        backend = HashingProvider(cfg.dimension)
    else:
        backend = HttpProvider(cfg, session=session)
    cache = EmbeddingCache(cfg.cache_path) if cfg.cache_path else None
    return Provider(backend, cache)


@lru_cache(maxsize=16)
def get_provider(cfg: ProviderConfig) -> Provider:
    return make_provider(cfg)


def _as_provider(p: Provider | ProviderConfig) -> Provider:
    return get_provider(p) if isinstance(p, ProviderConfig) else p


def embed_text(text: str, provider: Provider | ProviderConfig) -> RawEmbedding:
    return _as_provider(provider).embed_one(text)


def embed_views(unit: IntentUnit, provider: Provider | ProviderConfig) -> dict[str, RawEmbedding]:
    """Embeddings for exactly the views the unit carries: E, A|K, D."""
    prov = _as_provider(provider)
    views = unit.views()
    vecs = prov.embed(list(views.values()))
    return {v: RawEmbedding(vecs[i], prov.provider_id) for i, v in enumerate(views)}


def embed_units(units: Sequence[IntentUnit], provider: Provider | ProviderConfig) -> list[dict[str, np.ndarray]]:
    """Batched ``embed_views`` returning bare vectors."""
    prov = _as_provider(provider)
    texts: list[str] = []
    for u in units:
        texts.extend(u.views().values())
    vecs = prov.embed(texts) if texts else np.zeros((0, prov.dimension))
    out = []
    for i, u in enumerate(units):
        out.append({v: vecs[3 * i + j] for j, v in enumerate(u.views())})
    return out
