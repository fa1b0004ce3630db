import numpy as np
import pytest
import scipy.sparse as sp

from dctrack.cluster import (
    affinity_from_positions,
    build_affinity,
    classify_zones,
    cluster_exact,
    correlation_cluster,
    divide_frame,
    objective,
    symmetrize,
    zones_from_clusters,
)
from dctrack.errors import EmptyFrame, SizeExceeded
from dctrack.model import Track, ZoneKind

# theta favoring proximity, as in the affinity examples: negative distance
# weights, positive similarity weights
W_PROX = np.array([0.0, -1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])


def make_track(tid, pos):
    return Track(id=tid, trajectory=[(1, pos)])


def exhaustive_partitions(n):
    """Independent set-partition scan (recursive), used as the test oracle."""
    if n == 0:
        yield []
        return

    def rec(elem, parts):
        if elem == n:
            yield [list(p) for p in parts]
            return
        for p in parts:
            p.append(elem)
            yield from rec(elem + 1, parts)
            p.pop()
        parts.append([elem])
        yield from rec(elem + 1, parts)
        parts.pop()

    yield from rec(0, [])


def brute_best_objective(a):
    best = -np.inf
    for parts in exhaustive_partitions(a.shape[0]):
        best = max(best, objective(a, parts))
    return best


def random_signed_sym(rng, n):
    a = rng.uniform(-1, 1, (n, n))
    a = np.triu(a, 1)
    return a + a.T


def test_affinity_coincident_pair():
    a = affinity_from_positions([(0.5, 0.5)], [(0.5, 0.5)], W_PROX)
    assert a[0, 0] == pytest.approx(2.0)


def test_affinity_opposite_corners():
    a = affinity_from_positions([(0.0, 0.0)], [(1.0, 1.0)], W_PROX)
    assert a[0, 0] == pytest.approx(-2.0)


def test_affinity_symmetric_structure():
    # 2 tracks and 2 detections at unit-square corners; check entrywise
    tracks = [make_track(1, (0.0, 0.0)), make_track(2, (1.0, 1.0))]
    from dctrack.model import Detection

    dets = [
        Detection(frame=1, pos=(0.0, 1.0), bbox=(0, 100, 10, 10)),
        Detection(frame=1, pos=(1.0, 0.0), bbox=(100, 0, 10, 10)),
    ]
    a_sym = build_affinity(tracks, dets, W_PROX)
    assert a_sym.shape == (4, 4)
    assert np.all(a_sym[:2, :2] == 0) and np.all(a_sym[2:, 2:] == 0)
    assert np.allclose(a_sym, a_sym.T)
    theta = W_PROX[1:5]
    for i, t in enumerate(tracks):
        for j, d in enumerate(dets):
            dx = abs(t.last_pos()[0] - d.pos[0])
            dy = abs(t.last_pos()[1] - d.pos[1])
            expected = theta @ np.array([dx, dy, 1 - dx, 1 - dy])
            assert a_sym[i, 2 + j] == pytest.approx(expected)


def test_build_affinity_empty_frame():
    with pytest.raises(EmptyFrame):
        build_affinity([], [], W_PROX)


def test_all_negative_gives_singletons():
    a = np.full((5, 5), -1.0)
    np.fill_diagonal(a, 0.0)
    clusters = correlation_cluster(a)
    assert all(len(c) == 1 for c in clusters)
    assert objective(a, clusters) == 0.0


def test_two_separated_pairs_exact():
    # intra-pair affinity +2, cross -2: optimum is the two pairs
    block = np.array([[2.0, -2.0], [-2.0, 2.0]])
    a = symmetrize(block)
    clusters = cluster_exact(a)
    assert set(clusters) == {frozenset({0, 2}), frozenset({1, 3})}
    # cross-check against an independent exhaustive scan (15 partitions of 4)
    assert objective(a, clusters) == pytest.approx(brute_best_objective(a))


def test_exact_matches_exhaustive_scan():
    rng = np.random.default_rng(21)
    for _ in range(30):
        n = int(rng.integers(1, 7))
        a = random_signed_sym(rng, n)
        assert objective(a, cluster_exact(a)) == pytest.approx(
            brute_best_objective(a), abs=1e-12
        )


def test_greedy_near_exact():
    rng = np.random.default_rng(4)
    ratios = []
    for seed in range(60):
        a = random_signed_sym(rng, 8)
        exact = objective(a, cluster_exact(a))
        greedy = objective(a, correlation_cluster(a, seed=seed))
        assert greedy <= exact + 1e-12  # exact dominates
        if exact > 1e-12:
            ratios.append(greedy / exact)
    assert min(ratios) >= 0.9


def test_exact_size_guard():
    with pytest.raises(SizeExceeded):
        cluster_exact(np.zeros((11, 11)))


def test_mixed_composition_guarantee():
    # zero same-type blocks, strictly negative cross entries: all singletons
    rng = np.random.default_rng(9)
    block = -rng.uniform(0.1, 1.0, (3, 3))
    a = symmetrize(block)
    for clusters in (cluster_exact(a), correlation_cluster(a)):
        assert all(len(c) == 1 for c in clusters)


def test_permutation_equivariance_exact():
    rng = np.random.default_rng(13)
    for _ in range(20):
        n = 6
        a = random_signed_sym(rng, n)
        perm = rng.permutation(n)
        pa = a[np.ix_(perm, perm)]
        base = cluster_exact(a)
        permuted = cluster_exact(pa)
        # element e of the permuted problem is perm[e] of the original
        mapped = {frozenset(int(perm[e]) for e in c) for c in permuted}
        assert mapped == set(base)


def test_sparse_dense_agree():
    rng = np.random.default_rng(17)
    a = random_signed_sym(rng, 12)
    a[np.abs(a) < 0.6] = 0.0  # sparsify
    dense = correlation_cluster(a, seed=2)
    sparse = correlation_cluster(sp.csr_matrix(a), seed=2)
    assert set(dense) == set(sparse)
    assert objective(a, dense) == pytest.approx(objective(sp.csr_matrix(a), dense))


def test_zero_matrix_all_singletons():
    a = np.zeros((6, 6))
    assert all(len(c) == 1 for c in correlation_cluster(a))
    assert all(len(c) == 1 for c in cluster_exact(a))


def test_divide_step_near_linear_scaling():
    # positive edges only among ring neighbors: sparse instance
    import time

    def ring_instance(n, rng):
        rows, cols, vals = [], [], []
        for i in range(n):
            for d in (1, 2):
                j = (i + d) % n
                v = rng.uniform(0.5, 1.0) if rng.random() < 0.7 else -rng.uniform(0.5, 1.0)
                rows += [i, j]
                cols += [j, i]
                vals += [v, v]
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    rng = np.random.default_rng(0)
    times = {}
    for n in (100, 10_000):
        a = ring_instance(n, rng)
        t0 = time.perf_counter()
        correlation_cluster(a, trials=3, seed=0)
        times[n] = time.perf_counter() - t0
    # 100x elements with a log factor and generous constant slack
    assert times[10_000] <= 400 * max(times[100], 1e-4)


def test_classify_zones():
    clusters = [frozenset({0, 2}), frozenset({1, 3, 4}), frozenset({5})]
    # 2 tracks (elements 0, 1); detections are elements 2..5
    part = classify_zones(zones_from_clusters(clusters, n_tracks=2))
    kinds = {tuple(sorted(z.track_indices)): z.kind for z in part.zones}
    assert kinds[(0,)] is ZoneKind.SIMPLE  # 1 track, 1 det
    assert kinds[(1,)] is ZoneKind.COMPLEX  # 1 track, 2 dets
    assert kinds[()] is ZoneKind.COMPLEX  # lone detection


def test_divide_frame_groups_near_pairs():
    from dctrack.model import Detection

    tracks = [make_track(1, (0.1, 0.1)), make_track(2, (0.9, 0.9))]
    dets = [
        Detection(frame=2, pos=(0.12, 0.1), bbox=(100, 90, 20, 20)),
        Detection(frame=2, pos=(0.88, 0.9), bbox=(870, 890, 20, 20)),
    ]
    part = divide_frame(tracks, dets, W_PROX)
    assert len(part.zones) == 2
    assert all(z.kind is ZoneKind.SIMPLE for z in part.zones)
    by_track = {min(z.track_indices): z for z in part.zones}
    assert by_track[0].det_indices == frozenset({0})
    assert by_track[1].det_indices == frozenset({1})
