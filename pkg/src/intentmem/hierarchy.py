"""Two-level intent hierarchy: intent groups (IG) split into subgroups (SG).

The first clustering pass forms IGs, the second re-clusters each IG into SGs.
Points the first pass leaves as noise go to a reserved ``unassigned`` IG as
singleton SGs; second-pass noise also becomes singleton SGs. Both kinds are
flagged ``noise`` and left out of the quality metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .encoder import VIEW_TO_SLOT, SharedEmbedding
from .errors import ClusteringError, CorruptFileError, MetricError
from .hdbscan import NOISE, hdbscan
from .persist import as_vector, read_document, vector_list, write_document
from .skills import SkillHint

UNASSIGNED = "ig-unassigned"
_COINCIDENT = 1e-9


@dataclass(frozen=True)
class HierarchyConfig:
    min_cluster_size: int = 2
    min_samples: int = 1
    top_k: int = 5
    # per-slot weights for the IG pass over per-view projections; None uses fused z
    ig_weights: Mapping[str, float] | None = field(default_factory=lambda: {"E": 1.0})
    # same for the SG pass
    sg_weights: Mapping[str, float] | None = None

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "HierarchyConfig":
        return cls(**dict(doc))

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_cluster_size": self.min_cluster_size,
            "min_samples": self.min_samples,
            "top_k": self.top_k,
            "ig_weights": dict(self.ig_weights) if self.ig_weights is not None else None,
            "sg_weights": dict(self.sg_weights) if self.sg_weights is not None else None,
        }


@dataclass(frozen=True)
class SubGroup:
    id: str
    ig_id: str
    member_ids: tuple[str, ...]
    centroid: np.ndarray
    representative_ids: tuple[str, ...]
    skill_hints: tuple[SkillHint, ...] = ()
    noise: bool = False

    @property
    def size(self) -> int:
        return len(self.member_ids)

    @property
    def support(self) -> int:
        return self.size

    def best_hint(self) -> SkillHint | None:
        return self.skill_hints[0] if self.skill_hints else None


@dataclass(frozen=True)
class IntentGroup:
    id: str
    member_ids: tuple[str, ...]
    centroid: np.ndarray
    subgroups: tuple[SubGroup, ...]

    @property
    def unassigned(self) -> bool:
        return self.id == UNASSIGNED


@dataclass(frozen=True)
class IntentHierarchy:
    groups: tuple[IntentGroup, ...]
    config: HierarchyConfig = HierarchyConfig()

    def subgroups(self) -> list[SubGroup]:
        return [sg for g in self.groups for sg in g.subgroups]

    def subgroup(self, sg_id: str) -> SubGroup:
        for sg in self.subgroups():
            if sg.id == sg_id:
                return sg
        raise KeyError(sg_id)

    def group(self, ig_id: str) -> IntentGroup:
        for g in self.groups:
            if g.id == ig_id:
                return g
        raise KeyError(ig_id)

    def sg_of(self) -> dict[str, str]:
        return {m: sg.id for sg in self.subgroups() for m in sg.member_ids}

    def ig_of(self) -> dict[str, str]:
        return {m: g.id for g in self.groups for m in g.member_ids}

    def with_hints(self, hints: Mapping[str, Sequence[SkillHint]]) -> "IntentHierarchy":
        groups = tuple(
            replace(g, subgroups=tuple(replace(sg, skill_hints=tuple(hints.get(sg.id, sg.skill_hints)))
                                       for sg in g.subgroups))
            for g in self.groups
        )
        return replace(self, groups=groups)


# ---------------------------------------------------------------------------
# construction


def weighted_view(emb: SharedEmbedding, weights: Mapping[str, float] | None) -> np.ndarray:
    """Re-weighted fusion of per-view projections; ``None`` returns fused z."""
    if weights is None:
        return np.asarray(emb.z, dtype=float)
    by_slot = {VIEW_TO_SLOT[v]: np.asarray(x, dtype=float) for v, x in emb.per_view.items()}
    total = sum(weights.values())
    if total <= 0:
        raise ClusteringError("view weights must have a positive sum")
    return sum(w * by_slot[s] for s, w in weights.items()) / total


def _representatives(ids: Sequence[str], zs: np.ndarray, centroid: np.ndarray, k: int) -> tuple[str, ...]:
    cn = np.linalg.norm(centroid)
    keyed = []
    for uid, z in zip(ids, zs):
        zn = np.linalg.norm(z)
        cos = float(z @ centroid / (zn * cn)) if zn > 0 and cn > 0 else 0.0
        keyed.append((-cos, uid))
    return tuple(uid for _, uid in sorted(keyed)[:k])


def _make_sg(sg_id: str, ig_id: str, ids: Sequence[str], zs: np.ndarray, k: int, noise: bool) -> SubGroup:
    order = np.argsort(np.asarray(ids, dtype=object), kind="stable")
    ids = [ids[i] for i in order]
    zs = zs[order]
    centroid = zs.mean(axis=0)
    return SubGroup(sg_id, ig_id, tuple(ids), centroid, _representatives(ids, zs, centroid, k), noise=noise)


def _partition(labels: np.ndarray) -> tuple[list[list[int]], list[int]]:
    clusters = [list(np.flatnonzero(labels == lab)) for lab in sorted(set(labels.tolist()) - {NOISE})]
    return clusters, list(np.flatnonzero(labels == NOISE))


def build_hierarchy(units: Sequence[tuple[str, SharedEmbedding]], cfg: HierarchyConfig = HierarchyConfig()) -> IntentHierarchy:
    if len(units) < cfg.min_cluster_size:
        raise ClusteringError(f"need at least {cfg.min_cluster_size} units, got {len(units)}")
    ids = [uid for uid, _ in units]
    if len(set(ids)) != len(ids):
        raise ClusteringError("unit ids must be unique")
    z = np.stack([np.asarray(e.z, dtype=float) for _, e in units])
    x_ig = np.stack([weighted_view(e, cfg.ig_weights) for _, e in units])
    x_sg = np.stack([weighted_view(e, cfg.sg_weights) for _, e in units])

    first = hdbscan(x_ig, cfg.min_cluster_size, cfg.min_samples)
    ig_clusters, ig_noise = _partition(first.labels)
    # name clusters by their smallest unit id so ids do not depend on input order
    ig_clusters.sort(key=lambda c: min(ids[i] for i in c))

    groups: list[IntentGroup] = []
    for gi, members in enumerate(ig_clusters):
        ig_id = f"ig{gi}"
        m_ids = [ids[i] for i in members]
        sgs: list[SubGroup] = []
        if len(members) >= cfg.min_cluster_size:
            second = hdbscan(x_sg[members], cfg.min_cluster_size, cfg.min_samples)
            sg_clusters, sg_noise = _partition(second.labels)
            sg_clusters.sort(key=lambda c: min(ids[members[i]] for i in c))
        else:
            sg_clusters, sg_noise = [], list(range(len(members)))
        for si, local in enumerate(sg_clusters):
            rows = [members[i] for i in local]
            sgs.append(_make_sg(f"{ig_id}.sg{si}", ig_id, [ids[i] for i in rows], z[rows], cfg.top_k, False))
        for local in sorted(sg_noise, key=lambda i: ids[members[i]]):
            row = members[local]
            sgs.append(_make_sg(f"{ig_id}.sg{len(sgs)}", ig_id, [ids[row]], z[[row]], cfg.top_k, True))
        groups.append(IntentGroup(ig_id, tuple(sorted(m_ids)), z[members].mean(axis=0), tuple(sgs)))

    if ig_noise:
        sgs = []
        for row in sorted(ig_noise, key=lambda i: ids[i]):
            sgs.append(_make_sg(f"{UNASSIGNED}.sg{len(sgs)}", UNASSIGNED, [ids[row]], z[[row]], cfg.top_k, True))
        groups.append(IntentGroup(UNASSIGNED, tuple(sorted(ids[i] for i in ig_noise)),
                                  z[ig_noise].mean(axis=0), tuple(sgs)))
    return IntentHierarchy(tuple(groups), cfg)


# ---------------------------------------------------------------------------
# quality metrics


@dataclass(frozen=True)
class SGSeparation:
    sg_id: str
    size: int
    intra: float
    inter: float
    flagged: bool


@dataclass(frozen=True)
class SeparationReport:
    rows: tuple[SGSeparation, ...]
    sep_w: float | None
    status: str  # ok | insufficient_subgroups | degenerate

    def recompute(self) -> float | None:
        used = [r for r in self.rows if not r.flagged]
        total = sum(r.size for r in used)
        return sum(r.size * r.inter / r.intra for r in used) / total if total else None


def separation_from_groups(groups: Mapping[str, Sequence[np.ndarray]]) -> SeparationReport:
    """Size-weighted inter/intra ratio over explicit point groups (Euclidean)."""
    names = sorted(groups)
    if len(names) < 2:
        return SeparationReport((), None, "insufficient_subgroups")
    pts = {k: np.asarray(groups[k], dtype=float) for k in names}
    cents = {k: pts[k].mean(axis=0) for k in names}
    rows = []
    for k in names:
        intra = float(np.mean(np.linalg.norm(pts[k] - cents[k], axis=1)))
        inter = float(min(np.linalg.norm(cents[k] - cents[o]) for o in names if o != k))
        # coincident points leave float residue around 1e-16, not an exact zero
        tol = _COINCIDENT * (1.0 + float(np.linalg.norm(cents[k])))
        rows.append(SGSeparation(k, len(pts[k]), intra, inter, intra <= tol or inter <= tol))
    report = SeparationReport(tuple(rows), None, "ok")
    sep = report.recompute()
    status = "degenerate" if any(r.flagged for r in rows) else "ok"
    return SeparationReport(tuple(rows), sep, status)


def separation_metrics(h: IntentHierarchy, embeddings: Mapping[str, np.ndarray | SharedEmbedding]) -> SeparationReport:
    groups = {}
    for sg in h.subgroups():
        if sg.noise:
            continue
        groups[sg.id] = [_vec(embeddings[m]) for m in sg.member_ids]
    return separation_from_groups(groups)


def _vec(e: np.ndarray | SharedEmbedding) -> np.ndarray:
    return np.asarray(e.z if isinstance(e, SharedEmbedding) else e, dtype=float)


@dataclass(frozen=True)
class PurityReport:
    per_sg: Mapping[str, tuple[float, float]]  # sg_id -> (env purity, act purity)
    mu_env: float
    sigma_env: float
    mu_act: float
    sigma_act: float


def majority_fraction(tags: Sequence[str]) -> float:
    if not tags:
        raise MetricError("purity of an empty subgroup is undefined")
    counts: dict[str, int] = {}
    for t in tags:
        counts[t] = counts.get(t, 0) + 1
    return max(counts.values()) / len(tags)


def purity_metrics(h: IntentHierarchy, tags: Mapping[str, tuple[str, str]]) -> PurityReport:
    per_sg = {}
    for sg in h.subgroups():
        if sg.noise:
            continue
        per_sg[sg.id] = (majority_fraction([tags[m][0] for m in sg.member_ids]),
                         majority_fraction([tags[m][1] for m in sg.member_ids]))
    if not per_sg:
        raise MetricError("no non-noise subgroups to score")
    env = np.array([v[0] for v in per_sg.values()])
    act = np.array([v[1] for v in per_sg.values()])
    return PurityReport(per_sg, float(env.mean()), float(env.std()), float(act.mean()), float(act.std()))


# ---------------------------------------------------------------------------
# persistence


def hierarchy_to_doc(h: IntentHierarchy) -> dict[str, Any]:
    return {
        "config": h.config.to_dict(),
        "groups": [
            {
                "id": g.id,
                "member_ids": list(g.member_ids),
                "centroid": vector_list(g.centroid),
                "subgroups": [
                    {
                        "id": sg.id,
                        "member_ids": list(sg.member_ids),
                        "centroid": vector_list(sg.centroid),
                        "representative_ids": list(sg.representative_ids),
                        "support": sg.support,
                        "noise": sg.noise,
                        "skill_hints": [hint.to_dict() for hint in sg.skill_hints],
                    }
                    for sg in g.subgroups
                ],
            }
            for g in h.groups
        ],
    }


def hierarchy_from_doc(doc: Mapping[str, Any], source: str = "<memory>") -> IntentHierarchy:
    try:
        cfg = HierarchyConfig.from_dict(doc["config"])
        groups = []
        for g in doc["groups"]:
            sgs = []
            for s in g["subgroups"]:
                sgs.append(SubGroup(
                    id=s["id"], ig_id=g["id"], member_ids=tuple(s["member_ids"]),
                    centroid=as_vector(s["centroid"]),
                    representative_ids=tuple(s["representative_ids"]),
                    skill_hints=tuple(SkillHint.from_dict(x) for x in s["skill_hints"]),
                    noise=bool(s["noise"]),
                ))
            groups.append(IntentGroup(g["id"], tuple(g["member_ids"]), as_vector(g["centroid"]), tuple(sgs)))
        h = IntentHierarchy(tuple(groups), cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"{source}: malformed hierarchy ({exc!r})") from exc
    _validate(h, source)
    return h


def _validate(h: IntentHierarchy, source: str) -> None:
    seen: set[str] = set()
    for g in h.groups:
        sg_members = [m for sg in g.subgroups for m in sg.member_ids]
        if sorted(sg_members) != sorted(g.member_ids):
            raise CorruptFileError(f"{source}: IG {g.id} members disagree with its subgroups")
        for sg in g.subgroups:
            if not sg.member_ids or not set(sg.representative_ids) <= set(sg.member_ids):
                raise CorruptFileError(f"{source}: SG {sg.id} has bad members or representatives")
        dup = seen & set(g.member_ids)
        if dup:
            raise CorruptFileError(f"{source}: units {sorted(dup)} appear in more than one IG")
        seen |= set(g.member_ids)


def save_hierarchy(h: IntentHierarchy, path: str | Path) -> None:
    write_document(path, "hierarchy", hierarchy_to_doc(h))


def load_hierarchy(path: str | Path) -> IntentHierarchy:
    return hierarchy_from_doc(read_document(path, "hierarchy"), str(path))
