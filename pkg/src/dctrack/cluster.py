"""Divide step: correlation clustering of the symmetrized affinity matrix.

The affinity between track i and detection j is a learned combination of
per-axis distances and similarities. The symmetric matrix has zero
track-track and detection-detection blocks, so same-type elements can share a
zone only through a common opposite-type element.

The approximate solver is a random-pivot scheme on the positive-affinity
graph (best of ``trials`` seeded restarts) followed by a greedy merge pass
that accepts any merge strictly increasing the intra-cluster affinity sum.
``cluster_exact`` enumerates all set partitions and is the test oracle.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import EmptyFrame, SizeExceeded
from .model import Zone, ZonePartition, as_weight_array, I_DX, I_SY

EXACT_LIMIT = 10
_GAIN_TOL = 1e-12


def affinity_from_positions(track_pos: np.ndarray, det_pos: np.ndarray, w) -> np.ndarray:
    """Track-by-detection affinity block: theta . (|dx|, |dy|, 1-|dx|, 1-|dy|)."""
    wv = as_weight_array(w)
    theta = wv[I_DX : I_SY + 1]
    tp = np.asarray(track_pos, dtype=float).reshape(-1, 2)
    dp = np.asarray(det_pos, dtype=float).reshape(-1, 2)
    dx = np.abs(tp[:, 0][:, None] - dp[:, 0][None, :])
    dy = np.abs(tp[:, 1][:, None] - dp[:, 1][None, :])
    return theta[0] * dx + theta[1] * dy + theta[2] * (1.0 - dx) + theta[3] * (1.0 - dy)


def symmetrize(affinity: np.ndarray) -> np.ndarray:
    """Embed the rectangular affinity block in a zero-block-diagonal matrix."""
    nt, nd = affinity.shape
    n = nt + nd
    sym = np.zeros((n, n))
    sym[:nt, nt:] = affinity
    sym[nt:, :nt] = affinity.T
    return sym


def build_affinity(tracks, dets, w, track_pos=None) -> np.ndarray:
    """Symmetrized affinity over active tracks and current detections.

    ``track_pos`` overrides the per-track positions (used when the caller
    wants Kalman-predicted coordinates); by default the last observed
    position of each track is used. Occluded tracks must not be passed here.
    """
    if len(tracks) == 0 and len(dets) == 0:
        raise EmptyFrame("no tracks and no detections")
    if track_pos is None:
        track_pos = np.array([t.last_pos() for t in tracks], dtype=float).reshape(-1, 2)
    else:
        track_pos = np.asarray(track_pos, dtype=float).reshape(-1, 2)
    det_pos = np.array([d.pos for d in dets], dtype=float).reshape(-1, 2)
    block = affinity_from_positions(track_pos, det_pos, w)
    return symmetrize(block)


def _edge_list(a) -> tuple[int, np.ndarray, np.ndarray, np.ndarray]:
    """Upper-triangle nonzero entries as (n, rows, cols, values)."""
    if sp.issparse(a):
        coo = a.tocoo()
        keep = coo.row < coo.col
        return a.shape[0], coo.row[keep], coo.col[keep], coo.data[keep]
    mat = np.asarray(a, dtype=float)
    iu, ju = np.triu_indices(mat.shape[0], k=1)
    vals = mat[iu, ju]
    keep = vals != 0.0
    return mat.shape[0], iu[keep], ju[keep], vals[keep]


def _labels_of(clusters, n: int) -> np.ndarray:
    labels = np.empty(n, dtype=int)
    for idx, members in enumerate(clusters):
        for e in members:
            labels[e] = idx
    return labels


def _groups_of(labels) -> list:
    groups: dict = {}
    for e, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(e)
    return list(groups.values())


def objective(a, clusters) -> float:
    """Sum of affinities over unordered same-cluster pairs (absent entries = 0)."""
    n, ei, ej, ev = _edge_list(a)
    if n == 0 or ev.size == 0:
        return 0.0
    labels = _labels_of(clusters, n)
    same = labels[ei] == labels[ej]
    return float(ev[same].sum())


def _canonical(clusters) -> tuple:
    return tuple(sorted((frozenset(c) for c in clusters), key=min))


def _positive_neighbors(n, ei, ej, ev) -> list:
    nbrs = [[] for _ in range(n)]
    for i, j, v in zip(ei, ej, ev):
        if v > 0:
            nbrs[i].append(j)
            nbrs[j].append(i)
    return [np.array(b, dtype=int) for b in nbrs]


def _pivot_trial(n, neighbors, rng) -> list:
    clustered = np.zeros(n, dtype=bool)
    clusters = []
    for pivot in rng.permutation(n):
        if clustered[pivot]:
            continue
        members = [int(pivot)]
        clustered[pivot] = True
        for v in neighbors[pivot]:
            if not clustered[v]:
                members.append(int(v))
                clustered[v] = True
        clusters.append(members)
    return clusters


def _merge_pass(n, ei, ej, ev, clusters) -> np.ndarray:
    """Merge cluster pairs while some merge strictly raises the objective.

    Incremental: per-cluster neighbor sums with union-by-size, so the pass
    stays near-linear in the number of stored edges. Returns labels.
    """
    labels = _labels_of(clusters, n)
    nbr: dict = {int(lab): {} for lab in np.unique(labels)}
    size = {c: 0 for c in nbr}
    for lab in labels:
        size[int(lab)] += 1
    for i, j, v in zip(ei, ej, ev):
        a, b = int(labels[i]), int(labels[j])
        if a != b:
            nbr[a][b] = nbr[a].get(b, 0.0) + v
            nbr[b][a] = nbr[b].get(a, 0.0) + v
    queue = [(a, b) for a in nbr for b, s in nbr[a].items() if a < b and s > _GAIN_TOL]
    head = 0
    while head < len(queue):
        a, b = queue[head]
        head += 1
        if a not in nbr or b not in nbr:
            continue
        if nbr[a].get(b, 0.0) <= _GAIN_TOL:
            continue
        if size[a] < size[b]:
            a, b = b, a
        # fold b into a
        for other, v in nbr[b].items():
            if other == a:
                continue
            total = nbr[a].get(other, 0.0) + v
            nbr[a][other] = total
            nbr[other][a] = total
            del nbr[other][b]
            if total > _GAIN_TOL:
                queue.append((a, other) if a < other else (other, a))
        nbr[a].pop(b, None)
        del nbr[b]
        size[a] += size.pop(b)
        labels[labels == b] = a
    return labels


def _refine_moves(n, ei, ej, ev, labels, max_sweeps: int = 15) -> np.ndarray:
    """Single-element moves (to another cluster or a fresh singleton) while
    the objective strictly improves; bounded best-improvement sweeps."""
    adj = [[] for _ in range(n)]
    for i, j, v in zip(ei, ej, ev):
        adj[int(i)].append((int(j), float(v)))
        adj[int(j)].append((int(i), float(v)))
    labels = labels.astype(int).copy()
    fresh = int(labels.max()) + 1 if n else 0
    for _ in range(max_sweeps):
        moved = False
        for e in range(n):
            own = labels[e]
            gains: dict = {}
            stay = 0.0
            for q, v in adj[e]:
                c = labels[q]
                if c == own:
                    stay += v
                else:
                    gains[c] = gains.get(c, 0.0) + v
            best_c, best_gain = own, 0.0
            for c, s in sorted(gains.items()):
                if s - stay > best_gain + _GAIN_TOL:
                    best_c, best_gain = c, s - stay
            if -stay > best_gain + _GAIN_TOL:  # leave into a fresh singleton
                best_c, best_gain = fresh, -stay
                fresh += 1
            if best_c != own:
                labels[e] = best_c
                moved = True
        if not moved:
            break
    return labels


_SPLIT_LIMIT = 12


def _split_pass(n, ei, ej, ev, labels) -> np.ndarray:
    """Best 2-way split of each small cluster whose cross affinity is negative.

    Exhaustive over bipartitions, so only clusters up to _SPLIT_LIMIT members
    are considered (keeps the sparse path near-linear)."""
    labels = labels.astype(int).copy()
    fresh = int(labels.max()) + 1 if n else 0
    pair_w: dict = {}
    for i, j, v in zip(ei, ej, ev):
        pair_w[(int(i), int(j))] = float(v)
    for members in _groups_of(labels):
        s = len(members)
        if s < 2 or s > _SPLIT_LIMIT:
            continue
        sub = np.zeros((s, s))
        for p in range(s):
            for q in range(p + 1, s):
                key = (members[p], members[q]) if members[p] < members[q] else (members[q], members[p])
                sub[p, q] = pair_w.get(key, 0.0)
        best_cross = 0.0
        best_side = None
        for bits in range(1, 1 << (s - 1)):  # member 0 stays on side A
            side = np.array([(bits >> (p - 1)) & 1 if p else 0 for p in range(s)], dtype=bool)
            cross = float(sub[np.ix_(~side, side)].sum() + sub[np.ix_(side, ~side)].sum())
            if cross < best_cross - _GAIN_TOL:
                best_cross = cross
                best_side = side
        if best_side is not None:
            for p in np.nonzero(best_side)[0]:
                labels[members[p]] = fresh
            fresh += 1
    return labels


_SWAP_LIMIT = 64


def _swap_pass(n, ei, ej, ev, labels, max_sweeps: int = 10) -> np.ndarray:
    """Exchange pairs of elements between clusters while that improves the
    objective. Quadratic, so only applied to small instances."""
    if n > _SWAP_LIMIT:
        return labels
    dense = np.zeros((n, n))
    dense[ei, ej] = ev
    dense[ej, ei] = ev
    labels = labels.astype(int).copy()
    for _ in range(max_sweeps):
        moved = False
        for e in range(n):
            for f in range(e + 1, n):
                ce, cf = labels[e], labels[f]
                if ce == cf:
                    continue
                in_ce = labels == ce
                in_cf = labels == cf
                gain = (
                    dense[e, in_cf].sum() - dense[e, f] - dense[e, in_ce].sum()
                ) + (dense[f, in_ce].sum() - dense[f, e] - dense[f, in_cf].sum())
                if gain > _GAIN_TOL:
                    labels[e], labels[f] = cf, ce
                    moved = True
        if not moved:
            break
    return labels


def correlation_cluster(a_sym, trials: int = 5, seed: int = 0) -> tuple:
    """Approximate correlation clustering; deterministic under a fixed seed.

    Random-pivot restarts on the positive-affinity graph, then rounds of
    greedy merging, single-element moves, small-cluster splits and pair
    exchanges until the objective stops improving. Accepts a dense symmetric
    array or a scipy.sparse matrix (absent entries count as zero affinity).
    Returns clusters of element indices as a tuple of frozensets sorted by
    smallest member.
    """
    n = a_sym.shape[0]
    if n == 0:
        return ()
    _, ei, ej, ev = _edge_list(a_sym)
    neighbors = _positive_neighbors(n, ei, ej, ev)
    rng = np.random.default_rng(seed)

    def score(labels):
        if ev.size == 0:
            return 0.0
        return float(ev[labels[ei] == labels[ej]].sum())

    restarts = max(1, trials)
    if n <= EXACT_LIMIT:  # restarts are nearly free on tiny instances
        restarts = max(restarts, 3 * n)
    best_labels = None
    best_obj = -np.inf
    for _ in range(restarts):
        labels = _labels_of(_pivot_trial(n, neighbors, rng), n)
        obj = score(labels)
        for _round in range(4):  # each refinement can unlock the others
            labels = _merge_pass(n, ei, ej, ev, _groups_of(labels))
            labels = _refine_moves(n, ei, ej, ev, labels)
            labels = _split_pass(n, ei, ej, ev, labels)
            labels = _swap_pass(n, ei, ej, ev, labels)
            new_obj = score(labels)
            if new_obj <= obj + _GAIN_TOL:
                obj = max(obj, new_obj)
                break
            obj = new_obj
        if obj > best_obj:
            best_obj = obj
            best_labels = labels
    if best_obj < 0.0:  # never worse than all singletons
        best_labels = np.arange(n)
    groups: dict = {}
    for e in range(n):
        groups.setdefault(int(best_labels[e]), []).append(e)
    return _canonical(groups.values())


def _restricted_growth_strings(n: int):
    a = [0] * n
    while True:
        yield a
        j = n - 1
        while j > 0 and a[j] > max(a[:j]):
            j -= 1
        if j == 0:
            return
        a[j] += 1
        for k in range(j + 1, n):
            a[k] = 0


def cluster_exact(a_sym, limit: int = EXACT_LIMIT) -> tuple:
    """Globally optimal partition by exhaustive enumeration (n <= limit).

    Objective ties prefer finer partitions, so an all-zero matrix (and any
    matrix with no positive entries) yields all singletons.
    """
    n = a_sym.shape[0]
    if n > limit:
        raise SizeExceeded(f"exact clustering limited to n <= {limit}, got {n}")
    if n == 0:
        return ()
    _, ei, ej, ev = _edge_list(a_sym)
    best_labels = None
    best_obj = -np.inf
    best_count = -1
    for labels in _restricted_growth_strings(n):
        arr = np.asarray(labels)
        obj = float(ev[arr[ei] == arr[ej]].sum()) if ev.size else 0.0
        count = arr.max() + 1
        if obj > best_obj or (obj == best_obj and count > best_count):
            best_obj = obj
            best_count = count
            best_labels = arr.copy()
    groups: dict = {}
    for e, lab in enumerate(best_labels):
        groups.setdefault(int(lab), []).append(e)
    return _canonical(groups.values())


def zones_from_clusters(clusters, n_tracks: int) -> ZonePartition:
    """Map element-index clusters back to (track, detection) zones; kinds unset."""
    zones = []
    for members in clusters:
        t_idx = frozenset(e for e in members if e < n_tracks)
        d_idx = frozenset(e - n_tracks for e in members if e >= n_tracks)
        zones.append(Zone(t_idx, d_idx))
    return ZonePartition(tuple(zones))


def classify_zones(partition: ZonePartition) -> ZonePartition:
    """Tag each zone simple iff it holds equally many tracks and detections."""
    return ZonePartition(tuple(z.classified() for z in partition.zones))


def divide_frame(tracks, dets, w, trials: int = 5, seed: int = 0, track_pos=None) -> ZonePartition:
    """Full divide step: affinity, clustering, classification."""
    if len(tracks) == 0 and len(dets) == 0:
        return ZonePartition.empty()
    a_sym = build_affinity(tracks, dets, w, track_pos=track_pos)
    clusters = correlation_cluster(a_sym, trials=trials, seed=seed)
    return classify_zones(zones_from_clusters(clusters, len(tracks)))
