"""Exception hierarchy.

Every error raised on purpose by the package derives from ``IntentMemError``;
the CLI prints the class name as the machine-readable error class.
"""

from __future__ import annotations


class IntentMemError(Exception):
    """Base class for all package errors."""


class TraceFormatError(IntentMemError):
    """A trace file could not be parsed into any valid unit."""


class UnresolvedVerbError(IntentMemError):
    def __init__(self, raw_label: str, reason: str = "no alias pattern matches"):
        super().__init__(f"{reason}: {raw_label!r}")
        self.raw_label = raw_label


class AliasMapError(IntentMemError):
    """Malformed or ambiguous alias map."""


class ProviderError(IntentMemError):
    """Embedding/labeling provider failure (transport, shape, precondition)."""


class EncoderError(IntentMemError):
    """Shape mismatch or non-finite value inside the encoder."""


class DivergenceError(EncoderError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}")
        self.epoch = epoch


class ClusteringError(IntentMemError):
    pass


class DegenerateSkillError(IntentMemError):
    pass


class PersistenceError(IntentMemError):
    pass


class CorruptFileError(PersistenceError):
    """File exists but is not a valid document of the expected kind/version."""


class PlanningError(IntentMemError):
    pass


class SlotError(PlanningError):
    def __init__(self, slot: str, message: str):
        super().__init__(f"slot {slot!r}: {message}")
        self.slot = slot


class UnresolvableTargetError(IntentMemError):
    def __init__(self, target: str, candidates: list[str]):
        super().__init__(f"unresolvable target {target!r} (considered {len(candidates)} components)")
        self.target = target
        self.candidates = candidates


class ScenarioError(IntentMemError):
    pass


class MetricError(IntentMemError):
    pass


class ConfigError(IntentMemError):
    """Configuration file is unreadable or names unknown keys."""
