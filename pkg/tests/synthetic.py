"""Planted two-level corpora: environments at the top level, actions beneath."""

from __future__ import annotations

import numpy as np

from intentmem.trace_model import IntentUnit

ENVS = {"web": "web browser", "local": "desktop app"}
ACTS = {"web": ("search query", "open link"), "local": ("edit document", "play music")}
DESCS = {
    ("web", 0): "look up information online",
    ("web", 1): "follow a hyperlink to a page",
    ("local", 0): "write and revise text in a file",
    ("local", 1): "listen to songs from the library",
}
FILLER = ("alpha bravo charlie delta echo foxtrot golf hotel india juliet "
          "kilo lima mike november oscar papa quebec romeo sierra tango").split()


def planted_corpus(seed: int, per_cluster: int = 30, filler: int = 2) -> list[IntentUnit]:
    """2 environments x 2 actions = 4 planted clusters.

    Environment and action views are the clean cluster labels; each
    description adds ``filler`` random tokens as unit-level noise.
    """
    rng = np.random.default_rng(seed)
    out = []
    for env, env_text in ENVS.items():
        for a, act in enumerate(ACTS[env]):
            for i in range(per_cluster):
                noise = " ".join(rng.choice(FILLER, filler, replace=False)) if filler else ""
                desc = f"{DESCS[(env, a)]} {noise}".strip()
                out.append(IntentUnit(f"{env}{a}-{i:02d}", "control", env_text, act, desc,
                                      tags={"env": env, "act": f"{env}.{a}"}))
    return out
