"""Intent memory for desktop agents: multi-view encoding, intent clustering,
skill induction, plan memory and a planner/critic loop over a simulated desktop."""

from __future__ import annotations

__version__ = "0.1.0"
