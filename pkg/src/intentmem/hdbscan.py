"""Hierarchical density-based clustering, written out step by step.

Pipeline: core distances -> mutual-reachability graph -> minimum spanning tree
(Kruskal, ties broken on ``(weight, i, j)``) -> single-linkage tree with
equal-weight merges flattened into one node -> condensed tree -> excess-of-mass
flat extraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ClusteringError

NOISE = -1
LAMBDA_CAP = 1e12


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int = 2
    min_samples: int = 1
    metric: str = "euclidean"
    allow_single_cluster: bool = True


@dataclass
class CondensedCluster:
    id: int
    parent: int | None
    birth: float  # lambda at which the cluster appears
    size: int
    children: list[int] = field(default_factory=list)
    # (point index, lambda at which it left this cluster)
    fallen: list[tuple[int, float]] = field(default_factory=list)
    death: float | None = None  # lambda of the split into child clusters
    stability: float = 0.0


@dataclass
class ClusterResult:
    labels: np.ndarray
    stabilities: dict[int, float]
    params: ClusterParams
    tree: list[CondensedCluster] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.stabilities)

    def members(self, label: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.labels == label)]


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        lo, hi = min(ra, rb), max(ra, rb)
        self.parent[hi] = lo
        return lo


def pairwise_distances(points: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    if metric not in ("euclidean", "cosine"):
        raise ClusteringError(f"unsupported metric {metric!r}")
    d = cdist(points, points, metric=metric)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def core_distances(dist: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the ``min_samples``-th nearest neighbour, counting the point itself."""
    n = dist.shape[0]
    k = min(min_samples, n) - 1
    return np.sort(dist, axis=1)[:, k]


def mutual_reachability(dist: np.ndarray, core: np.ndarray) -> np.ndarray:
    return np.maximum(dist, np.maximum(core[:, None], core[None, :]))


def minimum_spanning_tree(mreach: np.ndarray) -> list[tuple[float, int, int]]:
    n = mreach.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    w = mreach[iu, ju]
    order = np.lexsort((ju, iu, w))
    uf = _UnionFind(n)
    edges: list[tuple[float, int, int]] = []
    for e in order:
        i, j = int(iu[e]), int(ju[e])
        if uf.find(i) != uf.find(j):
            uf.union(i, j)
            edges.append((float(w[e]), i, j))
            if len(edges) == n - 1:
                break
    return edges


@dataclass
class _Node:
    weight: float  # merge distance; 0 for leaves
    children: list[int]
    size: int
    point: int | None = None


def single_linkage_tree(n: int, mst: Sequence[tuple[float, int, int]]) -> tuple[list[_Node], int]:
    """Build the merge tree; all merges at one weight that touch a component fuse into one node."""
    nodes = [_Node(0.0, [], 1, point=i) for i in range(n)]
    uf = _UnionFind(n)
    comp_node = {i: i for i in range(n)}
    k = 0
    while k < len(mst):
        w = mst[k][0]
        group = []
        while k < len(mst) and mst[k][0] == w:
            group.append(mst[k])
            k += 1
        # components touched at this weight, merged together in one step
        before = {}
        for _, i, j in group:
            for p in (i, j):
                r = uf.find(p)
                before.setdefault(r, comp_node[r])
        for _, i, j in group:
            uf.union(i, j)
        merged: dict[int, list[int]] = {}
        for r, node in before.items():
            merged.setdefault(uf.find(r), []).append(node)
        for root in sorted(merged):
            kids = sorted(merged[root])
            nodes.append(_Node(w, kids, sum(nodes[c].size for c in kids)))
            comp_node[root] = len(nodes) - 1
    root_node = comp_node[uf.find(0)] if n else -1
    return nodes, root_node


def _lam(w: float) -> float:
    return LAMBDA_CAP if w <= 0.0 else min(1.0 / w, LAMBDA_CAP)


def _leaf_points(nodes: list[_Node], idx: int) -> list[int]:
    out, stack = [], [idx]
    while stack:
        node = nodes[stack.pop()]
        if node.point is not None:
            out.append(node.point)
        else:
            stack.extend(node.children)
    return out


def condense_tree(nodes: list[_Node], root: int, min_cluster_size: int) -> list[CondensedCluster]:
    clusters = [CondensedCluster(0, None, 0.0, nodes[root].size)]
    stack = [(root, 0)]
    while stack:
        idx, cid = stack.pop()
        node = nodes[idx]
        cl = clusters[cid]
        if node.point is not None:
            cl.fallen.append((node.point, LAMBDA_CAP))
            continue
        lam = _lam(node.weight)
        big = [c for c in node.children if nodes[c].size >= min_cluster_size]
        for c in node.children:
            if c not in big:
                cl.fallen.extend((p, lam) for p in _leaf_points(nodes, c))
        if len(big) >= 2:
            cl.death = lam
            for c in big:
                child = CondensedCluster(len(clusters), cid, lam, nodes[c].size)
                clusters.append(child)
                cl.children.append(child.id)
                stack.append((c, child.id))
        elif len(big) == 1:
            stack.append((big[0], cid))
        else:
            cl.death = lam
    for cl in clusters:
        s = sum(lam - cl.birth for _, lam in cl.fallen)
        if cl.children:
            s += sum(clusters[c].size for c in cl.children) * (cl.death - cl.birth)
        cl.stability = s
    return clusters


def extract_eom(clusters: list[CondensedCluster], allow_single_cluster: bool = True) -> list[int]:
    """Excess-of-mass selection; returns selected cluster ids."""
    selected: dict[int, bool] = {}
    subtree: dict[int, float] = {}
    for cl in sorted(clusters, key=lambda c: -c.id):
        if not cl.children:
            selected[cl.id] = True
            subtree[cl.id] = cl.stability
            continue
        child_sum = sum(subtree[c] for c in cl.children)
        if cl.parent is None and not allow_single_cluster:
            selected[cl.id] = False
            subtree[cl.id] = child_sum
        elif cl.stability >= child_sum:
            selected[cl.id] = True
            subtree[cl.id] = cl.stability
        else:
            selected[cl.id] = False
            subtree[cl.id] = child_sum
    if not allow_single_cluster and not clusters[0].children:
        selected[0] = False
    # keep only the topmost selected clusters
    out = []
    stack = [0]
    while stack:
        cid = stack.pop()
        if selected[cid]:
            out.append(cid)
        else:
            stack.extend(clusters[cid].children)
    return sorted(out)


def _members(clusters: list[CondensedCluster], cid: int) -> list[int]:
    pts, stack = [], [cid]
    while stack:
        cl = clusters[stack.pop()]
        pts.extend(p for p, _ in cl.fallen)
        stack.extend(cl.children)
    return pts


def hdbscan(points: Sequence[Sequence[float]] | np.ndarray, min_cluster_size: int = 2, min_samples: int = 1,
            metric: str = "euclidean", allow_single_cluster: bool = True) -> ClusterResult:
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ClusteringError("need a non-empty 2-d array of points")
    if not np.all(np.isfinite(X)):
        raise ClusteringError("points contain non-finite coordinates")
    if min_cluster_size < 2:
        raise ClusteringError("min_cluster_size must be >= 2")
    if min_samples < 1:
        raise ClusteringError("min_samples must be >= 1")
    params = ClusterParams(min_cluster_size, min_samples, metric, allow_single_cluster)
    n = X.shape[0]
    labels = np.full(n, NOISE, dtype=int)
    if n < min_cluster_size:
        return ClusterResult(labels, {}, params)

    dist = pairwise_distances(X, metric)
    mreach = mutual_reachability(dist, core_distances(dist, min_samples))
    nodes, root = single_linkage_tree(n, minimum_spanning_tree(mreach))
    tree = condense_tree(nodes, root, min_cluster_size)
    chosen = extract_eom(tree, allow_single_cluster)

    groups = sorted((sorted(_members(tree, cid)), cid) for cid in chosen)
    stabilities = {}
    for label, (pts, cid) in enumerate(groups):
        labels[pts] = label
        stabilities[label] = tree[cid].stability
    return ClusterResult(labels, stabilities, params, tree)
