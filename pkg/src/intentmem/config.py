"""Run configuration: packaged JSON defaults overlaid with a user file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .embedding import ProviderConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .executor import ExecConfig
from .hierarchy import HierarchyConfig
from .planner import PlannerConfig
from .skills import SkillConfig


@dataclass(frozen=True)
class Config:
    seed: int = 0
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    epochs: int = 20
    batch_size: int = 32
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)
    skills: SkillConfig = field(default_factory=SkillConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    executor: ExecConfig = field(default_factory=ExecConfig)

    def with_seed(self, seed: int) -> "Config":
        return replace(self, seed=seed, encoder=replace(self.encoder, seed=seed))


def _merge(base: dict[str, Any], over: Mapping[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = _merge(dict(out[k]), v)
        else:
            out[k] = v
    return out


def default_document() -> dict[str, Any]:
    return json.loads(resources.files("intentmem.data").joinpath("default_config.json").read_text("utf-8"))


def config_from_doc(doc: Mapping[str, Any]) -> Config:
    known = {"seed", "provider", "encoder", "training", "hierarchy", "skills", "planner", "executor"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        seed = int(doc.get("seed", 0))
        enc = dict(doc.get("encoder", {}))
        enc.setdefault("seed", seed)
        skills = dict(doc.get("skills", {}))
        if "prune_verbs" in skills:
            skills["prune_verbs"] = tuple(skills["prune_verbs"])
        training = doc.get("training", {})
        return Config(
            seed=seed,
            provider=ProviderConfig.from_dict(doc.get("provider", {})),
            encoder=EncoderConfig.from_dict(enc),
            epochs=int(training.get("epochs", 20)),
            batch_size=int(training.get("batch_size", 32)),
            hierarchy=HierarchyConfig.from_dict(doc.get("hierarchy", {})),
            skills=SkillConfig(**skills),
            planner=PlannerConfig(**doc.get("planner", {})),
            executor=ExecConfig(**doc.get("executor", {})),
        )
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path: str | Path | None = None, seed: int | None = None) -> Config:
    doc = default_document()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        doc = _merge(doc, user)
    cfg = config_from_doc(doc)
    return cfg.with_seed(seed) if seed is not None else cfg
