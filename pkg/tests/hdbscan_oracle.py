"""Set-based reference for the density clustering: level-set components of the
full mutual-reachability graph, recursed top-down, with exhaustive stability
bookkeeping. Shares no code with the library implementation."""

from __future__ import annotations

import itertools
import math

CAP = 1e12


def _dist(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def _components(nodes, edges_ok):
    nodes = sorted(nodes)
    seen, comps = set(), []
    for s in nodes:
        if s in seen:
            continue
        comp, stack = {s}, [s]
        seen.add(s)
        while stack:
            u = stack.pop()
            for v in nodes:
                if v not in seen and edges_ok(u, v):
                    seen.add(v)
                    comp.add(v)
                    stack.append(v)
        comps.append(frozenset(comp))
    return comps


def oracle_labels(points, min_cluster_size=2, min_samples=1, allow_single_cluster=True):
    n = len(points)
    if n < min_cluster_size:
        return [-1] * n
    d = [[_dist(points[i], points[j]) for j in range(n)] for i in range(n)]
    core = [sorted(d[i])[min_samples - 1] for i in range(n)]
    mr = [[max(d[i][j], core[i], core[j]) if i != j else 0.0 for j in range(n)] for i in range(n)]

    def lam(w):
        return CAP if w <= 0 else min(1.0 / w, CAP)

    def split_level(members):
        """Largest weight that still keeps `members` connected (their merge weight)."""
        ws = sorted({mr[i][j] for i, j in itertools.combinations(sorted(members), 2)})
        for w in ws:
            if len(_components(members, lambda u, v: mr[u][v] <= w)) == 1:
                return w
        return 0.0

    # clusters: dict id -> (members, birth, parent); stability accumulates
    clusters = {}
    stab = {}
    children = {}

    def grow(cid, members, birth):
        clusters[cid] = members
        children[cid] = []
        stab[cid] = 0.0
        current = set(members)
        while True:
            if len(current) == 1:
                (p,) = current
                stab[cid] += CAP - birth
                return
            w = split_level(current)
            lv = lam(w)
            parts = _components(current, lambda u, v: mr[u][v] < w)
            big = [p for p in parts if len(p) >= min_cluster_size]
            for p in parts:
                if p not in big:
                    stab[cid] += len(p) * (lv - birth)
            if len(big) >= 2:
                for p in big:
                    stab[cid] += len(p) * (lv - birth)
                    child = len(clusters)
                    children[cid].append(child)
                    grow(child, p, lv)
                return
            if len(big) == 1:
                current = set(big[0])
                continue
            return

    grow(0, frozenset(range(n)), 0.0)

    def best(cid):
        if not children[cid]:
            return stab[cid], [cid]
        sub = [best(c) for c in children[cid]]
        total = sum(s for s, _ in sub)
        sel = [x for _, xs in sub for x in xs]
        if cid == 0 and not allow_single_cluster:
            return total, sel
        if stab[cid] >= total:
            return stab[cid], [cid]
        return total, sel

    _, chosen = best(0)
    if not allow_single_cluster and not children[0]:
        chosen = []
    labels = [-1] * n
    for k, members in enumerate(sorted((sorted(clusters[c]) for c in chosen))):
        for p in members:
            labels[p] = k
    return labels
