from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from hdbscan_oracle import oracle_labels
from intentmem.errors import ClusteringError
from intentmem.hdbscan import (
    NOISE,
    core_distances,
    hdbscan,
    minimum_spanning_tree,
    mutual_reachability,
    pairwise_distances,
)


def same_partition(a, b) -> bool:
    """Equal up to relabeling of clusters, with noise kept as noise."""
    a, b = list(a), list(b)
    if [x == NOISE for x in a] != [x == NOISE for x in b]:
        return False
    fwd, back = {}, {}
    for x, y in zip(a, b):
        if x == NOISE:
            continue
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def random_instance(seed: int):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    k = int(rng.integers(1, 4))
    centers = rng.uniform(-10, 10, size=(k, 2))
    pts = centers[rng.integers(k, size=n)] + rng.normal(0, rng.uniform(0.2, 3.0), size=(n, 2))
    mcs = int(rng.integers(2, 4))
    ms = int(rng.integers(1, 3))
    return pts, mcs, ms


def planted_two_blobs(seed: int, n: int = 10):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=2)
    d /= np.linalg.norm(d)
    a = rng.normal(0, 1.0, size=(n, 2))
    b = rng.normal(0, 1.0, size=(n, 2)) + 100.0 * d * 3.0
    return np.vstack([a, b]), [0] * n + [1] * n


@pytest.mark.parametrize("seed", range(25))
def test_matches_oracle(seed):
    pts, mcs, ms = random_instance(seed)
    got = hdbscan(pts, mcs, ms).labels
    want = oracle_labels(pts.tolist(), mcs, ms)
    assert same_partition(got, want), (got.tolist(), want)


@pytest.mark.parametrize("seed", range(10))
def test_two_blobs_recovered(seed):
    # with min_cluster_size=2 a Gaussian blob legitimately splits into microclusters
    pts, truth = planted_two_blobs(seed)
    res = hdbscan(pts, 6, 1)
    assert res.n_clusters == 2
    assert adjusted_rand_score(truth, res.labels) == 1.0


def test_matches_sklearn_on_generic_data():
    from sklearn.cluster import HDBSCAN

    for seed in range(5):
        pts, _, _ = random_instance(1000 + seed)
        if len(pts) < 4:
            continue
        ours = hdbscan(pts, 2, 1, allow_single_cluster=False).labels
        ref = HDBSCAN(min_cluster_size=2, min_samples=1, allow_single_cluster=False).fit(pts).labels_
        assert same_partition(ours, ref)


@pytest.mark.parametrize("seed", range(5))
def test_blob_microclusters_agree_with_sklearn(seed):
    from sklearn.cluster import HDBSCAN

    pts, _ = planted_two_blobs(seed)
    ref = HDBSCAN(min_cluster_size=2, min_samples=1, allow_single_cluster=True).fit(pts).labels_
    assert same_partition(hdbscan(pts, 2, 1).labels, ref)


def test_mutual_reachability_dominates_distance():
    pts = np.random.default_rng(0).normal(size=(8, 3))
    d = pairwise_distances(pts)
    core = core_distances(d, 3)
    mr = mutual_reachability(d, core)
    off = ~np.eye(8, dtype=bool)
    assert np.all(mr[off] >= d[off])
    assert np.allclose(mr, mr.T)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_mst_has_n_minus_one_edges_and_minimal_weight(seed):
    from scipy.sparse.csgraph import minimum_spanning_tree as scipy_mst

    pts = np.random.default_rng(seed).normal(size=(7, 2))
    d = pairwise_distances(pts)
    edges = minimum_spanning_tree(d)
    assert len(edges) == 6
    assert sum(w for w, _, _ in edges) == pytest.approx(scipy_mst(d).sum())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_labels_invariant_to_translation_and_order(seed):
    pts, mcs, ms = random_instance(seed)
    base = hdbscan(pts, mcs, ms).labels
    assert same_partition(base, hdbscan(pts + 5.0, mcs, ms).labels)
    perm = np.random.default_rng(seed).permutation(len(pts))
    shuffled = hdbscan(pts[perm], mcs, ms).labels
    assert same_partition(base[perm], shuffled)


def test_too_few_points_is_all_noise():
    assert hdbscan([[0.0, 0.0]], 2, 1).labels.tolist() == [NOISE]


def test_duplicate_points_form_one_cluster():
    res = hdbscan(np.zeros((4, 2)), 2, 1)
    assert set(res.labels.tolist()) == {0}


@pytest.mark.parametrize("bad", [
    dict(points=[[np.nan, 0.0], [0.0, 0.0]]),
    dict(points=[]),
    dict(points=[[0.0], [1.0]], min_cluster_size=1),
    dict(points=[[0.0], [1.0]], min_samples=0),
])
def test_invalid_input_raises(bad):
    with pytest.raises(ClusteringError):
        hdbscan(**bad)
