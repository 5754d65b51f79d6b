"""Offline build: traces to a trained encoder, an intent hierarchy with skills, and an index."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .config import Config
from .embedding import Provider, make_provider
from .encoder import EncoderParams, SharedEmbedding, UnitEncoder, corpus_items, init_params, train
from .errors import TraceFormatError
from .hierarchy import IntentHierarchy, build_hierarchy
from .memory import IntentIndex
from .skills import induce_skills
from .trace_model import AliasMap, IntentUnit, load_alias_map, read_trace_file

log = logging.getLogger(__name__)


@dataclass
class Artifacts:
    units: list[IntentUnit]
    encoder: UnitEncoder
    embeddings: dict[str, SharedEmbedding]
    hierarchy: IntentHierarchy
    index: IntentIndex

    @property
    def params(self) -> EncoderParams | None:
        return self.encoder.params


def ingest(path: str | Path) -> list[IntentUnit]:
    tf = read_trace_file(path)
    for d in tf.diagnostics:
        log.warning("%s", d)
    if not tf.units:
        raise TraceFormatError(f"{path}: no valid intent units")
    return list(tf.units)


def train_encoder(units: Sequence[IntentUnit], provider: Provider, cfg: Config) -> EncoderParams:
    items = corpus_items(units, provider)
    params = init_params(cfg.encoder)
    return train(items, params, cfg.epochs, min(cfg.batch_size, len(items)))


def build_index(units: Sequence[IntentUnit], encoder: UnitEncoder, cfg: Config,
                phi: AliasMap | None = None) -> Artifacts:
    phi = phi or load_alias_map()
    embs = encoder.encode_many(units)
    by_id = {u.id: e for u, e in zip(units, embs)}
    h = build_hierarchy([(u.id, by_id[u.id]) for u in units], cfg.hierarchy)
    h = induce_skills(h, {u.id: u for u in units}, phi, cfg.skills)
    index = IntentIndex(h, {u.id: u for u in units}, {k: e.z for k, e in by_id.items()})
    return Artifacts(list(units), encoder, by_id, h, index)


def build_all(units: Sequence[IntentUnit], cfg: Config, learned: bool = True,
              provider: Provider | None = None, phi: AliasMap | None = None) -> Artifacts:
    """Train (when ``learned``) and index ``units``; ``learned=False`` keeps raw embeddings."""
    provider = provider or make_provider(cfg.provider)
    params = train_encoder(units, provider, cfg) if learned else None
    return build_index(units, UnitEncoder(provider, params), cfg, phi)
