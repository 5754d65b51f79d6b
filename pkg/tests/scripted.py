"""Test doubles: an encoder whose outputs are read from a fixture."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from intentmem.encoder import SharedEmbedding
from intentmem.trace_model import IntentUnit


class ScriptedEncoder:
    """Returns ``query_z`` for the whole-command prototype and ``slot_z[act]`` for each slot."""

    learned = True

    def __init__(self, query_z: Sequence[float], slot_z: Mapping[str, Sequence[float]]):
        self.query_z = np.asarray(query_z, dtype=float)
        self.slot_z = {k: np.asarray(v, dtype=float) for k, v in slot_z.items()}

    def _one(self, unit: IntentUnit) -> SharedEmbedding:
        z = self.query_z if unit.id == "query" else self.slot_z.get(unit.act_or_key, self.query_z)
        return SharedEmbedding(z, {"E": z, "A": z, "D": z})

    def encode(self, unit: IntentUnit) -> SharedEmbedding:
        return self._one(unit)

    def encode_many(self, units: Sequence[IntentUnit]) -> list[SharedEmbedding]:
        return [self._one(u) for u in units]


def load_case(path: str | Path) -> dict:
    return json.loads(Path(path).read_text("utf-8"))
