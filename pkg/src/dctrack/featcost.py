"""Per-pair features, zone-dependent masks, and the augmented cost matrix.

Every track-detection pair gets a length-9 feature vector

    (1, |dx|, |dy|, 1-|dx|, 1-|dy|, |dx|, |dy|, g1, g2)

where the distances deliberately appear twice (simple-zone slots and
complex-zone slots carry separate weights), g1 is an appearance distance and
g2 a motion-coherence score, both rescaled to [0, 1]. A mask selects the
active slots per cell: distance slots inside a simple zone, the complex block
for pairs of complex-zone elements (and occluded-track rows), an infinite
bias for cross-zone cells, and a bare bias for dummy rows/columns.
"""

from __future__ import annotations

import numpy as np

from . import assign, kalman
from .config import Config
from .errors import LayoutError, MissingAppearance
from .model import (
    AssignmentInstance,
    Detection,
    Histogram,
    Track,
    ZoneKind,
    ZonePartition,
    as_weight_array,
    COL_DET,
    COL_EXIT,
    COL_SLOT,
    I_BIAS,
    I_CX,
    I_CY,
    I_DX,
    I_DY,
    I_G1,
    I_G2,
    I_SX,
    I_SY,
    ROW_BIRTH,
    ROW_OCC,
    ROW_TRACK,
    W_DIM,
)

MASK_SIMPLE = np.array([0, 1, 1, 0, 0, 0, 0, 0, 0], dtype=float)
MASK_COMPLEX = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1], dtype=float)
MASK_ALL = np.array([0, 1, 1, 0, 0, 1, 1, 1, 1], dtype=float)
MASK_XI = np.array([1, 0, 0, 0, 0, 0, 0, 0, 0], dtype=float)
MASK_FORBIDDEN = np.array([np.inf, 0, 0, 0, 0, 0, 0, 0, 0], dtype=float)
MASK_AFFINITY = np.array([0, 1, 1, 1, 1, 0, 0, 0, 0], dtype=float)


def _pair_mask(simple_context: bool, mode: str) -> np.ndarray:
    if mode == "simple":
        return MASK_SIMPLE
    if mode == "all":
        return MASK_ALL
    return MASK_SIMPLE if simple_context else MASK_COMPLEX


def _smoothed(bins: np.ndarray, eps: float) -> np.ndarray:
    sm = bins + eps
    return sm / sm.sum(axis=1, keepdims=True)


def kl_divergence(p: Histogram, q: Histogram, eps: float = 1e-6) -> float:
    """Channel-summed KL(p || q) on epsilon-smoothed, renormalized histograms."""
    if p.bins.shape != q.bins.shape:
        raise ValueError(f"histogram shapes differ: {p.bins.shape} vs {q.bins.shape}")
    ps = _smoothed(p.bins, eps)
    qs = _smoothed(q.bins, eps)
    return float(np.sum(ps * np.log(ps / qs)))


def appearance_distance_g1(det: Detection, track: Track, cfg: Config) -> float:
    """Mean KL of the detection histogram from the track's stored instances.

    Capped at cfg.kl_cap and rescaled to [0, 1] by that cap.
    """
    if det.appearance is None or not track.appearance_history:
        raise MissingAppearance(
            f"track {track.id} / detection at frame {det.frame} lack histograms"
        )
    total = 0.0
    for inst in track.appearance_history:
        total += kl_divergence(det.appearance, inst, cfg.kl_eps)
    mean = total / len(track.appearance_history)
    return min(mean, cfg.kl_cap) / cfg.kl_cap


def menger_curvature(p, q, r) -> float:
    """Inverse circumradius of three points; 0 for (near-)degenerate triples."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    a = np.linalg.norm(q - p)
    b = np.linalg.norm(r - q)
    c = np.linalg.norm(r - p)
    denom = a * b * c
    if denom < 1e-15:
        return 0.0
    cross = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    return 2.0 * abs(cross) / denom


def motion_coherence_g2(det: Detection, track: Track, cfg: Config) -> float:
    """Mean Menger curvature of the local trajectory extended by the detection.

    Only trajectory points within cfg.g2_radius of the detection take part;
    the detection is appended as the newest point. With fewer than two history
    points in the neighborhood there is no curvature evidence and the score
    is 0. Rescaled to [0, 1] by cfg.g2_cap.
    """
    dp = np.asarray(det.pos, dtype=float)
    pts = [
        np.asarray(pos, dtype=float)
        for _, pos in track.trajectory
        if np.hypot(pos[0] - dp[0], pos[1] - dp[1]) <= cfg.g2_radius
    ]
    pts.append(dp)
    if len(pts) < 3:
        return 0.0
    curvatures = [
        menger_curvature(pts[i], pts[i + 1], pts[i + 2]) for i in range(len(pts) - 2)
    ]
    mean = float(np.mean(curvatures))
    return min(mean, cfg.g2_cap) / cfg.g2_cap


def feature_vector(track: Track, det: Detection, cfg: Config, track_pos=None) -> np.ndarray:
    """Full length-9 feature vector for a (possibly occluded) track and a detection.

    ``track_pos`` overrides the track position (Kalman prediction for occluded
    tracks). A missing histogram on either side yields the configured neutral
    appearance distance instead of an error.
    """
    tx, ty = track_pos if track_pos is not None else track.last_pos()
    dx = abs(tx - det.pos[0])
    dy = abs(ty - det.pos[1])
    try:
        g1 = appearance_distance_g1(det, track, cfg)
    except MissingAppearance:
        g1 = cfg.g1_neutral
    g2 = motion_coherence_g2(det, track, cfg)
    return np.array([1.0, dx, dy, 1.0 - dx, 1.0 - dy, dx, dy, g1, g2])


def mask_vector(row_label, col_label, partition: ZonePartition, mode: str = "selective") -> np.ndarray:
    """Mask selecting the feature slots active for one cell of the matrix."""
    rkind, ri = row_label
    ckind, ci = col_label
    try:
        if rkind == ROW_TRACK and ckind == COL_DET:
            zt = partition.zone_of_track(ri)
            zd = partition.zone_of_det(ci)
            if zt is zd:
                return _pair_mask(zt.kind is ZoneKind.SIMPLE, mode)
            if zt.kind is ZoneKind.COMPLEX and zd.kind is ZoneKind.COMPLEX:
                return _pair_mask(False, mode)
            return MASK_FORBIDDEN
        if rkind == ROW_OCC and ckind == COL_DET:
            if partition.zone_of_det(ci).kind is ZoneKind.COMPLEX:
                return _pair_mask(False, mode)
            return MASK_FORBIDDEN
    except KeyError as exc:
        raise LayoutError(f"partition does not cover element {exc}") from exc
    if rkind == ROW_TRACK and ckind == COL_EXIT:
        return MASK_XI if ri == ci else MASK_FORBIDDEN
    if rkind == ROW_OCC and ckind == COL_SLOT:
        return MASK_XI if ri == ci else MASK_FORBIDDEN
    if rkind == ROW_BIRTH and ckind == COL_DET:
        return MASK_XI if ri == ci else MASK_FORBIDDEN
    if rkind == ROW_BIRTH and ckind in (COL_SLOT, COL_EXIT):
        return MASK_XI
    return MASK_FORBIDDEN


def _zone_arrays(partition: ZonePartition, n_tracks: int, n_dets: int):
    """Zone index and simple-kind flags per track / detection position."""
    tz = np.full(n_tracks, -1, dtype=int)
    dz = np.full(n_dets, -1, dtype=int)
    simple = np.zeros(len(partition.zones), dtype=bool)
    for zi, zone in enumerate(partition.zones):
        if zone.kind is None:
            raise LayoutError("partition must be classified before building costs")
        simple[zi] = zone.kind is ZoneKind.SIMPLE
        for t in zone.track_indices:
            tz[t] = zi
        for d in zone.det_indices:
            dz[d] = zi
    if np.any(tz < 0) or np.any(dz < 0):
        raise LayoutError("partition does not cover all tracks/detections")
    return tz, dz, simple


def build_instance(
    active: list,
    occluded: list,
    dets: list,
    partition: ZonePartition,
    w,
    cfg: Config,
) -> AssignmentInstance:
    """Assemble the augmented cost matrix with its feature and mask tensors.

    Rows are active tracks, occluded tracks, then one birth row per
    detection; columns are detections, keep-occluded slots, then exit
    columns. Occluded rows use Kalman-predicted positions and are eligible
    only for detections in complex zones. Complex feature slots are computed
    lazily: cells whose mask disables them keep zeros there.
    """
    wv = as_weight_array(w)
    a, o, m = len(active), len(occluded), len(dets)
    n = a + o + m
    partition.check_coverage(a, m)

    row_labels = tuple(
        [(ROW_TRACK, i) for i in range(a)]
        + [(ROW_OCC, p) for p in range(o)]
        + [(ROW_BIRTH, j) for j in range(m)]
    )
    col_labels = tuple(
        [(COL_DET, j) for j in range(m)]
        + [(COL_SLOT, p) for p in range(o)]
        + [(COL_EXIT, i) for i in range(a)]
    )

    features = np.zeros((n, n, W_DIM))
    features[:, :, I_BIAS] = 1.0
    masks = np.tile(MASK_FORBIDDEN, (n, n, 1))

    track_objs = list(active) + list(occluded)
    track_pos = np.zeros((a + o, 2))
    for i, t in enumerate(active):
        track_pos[i] = t.last_pos()
    for p, t in enumerate(occluded):
        track_pos[a + p] = kalman.predict(t.kalman, cfg.kalman_q).pos

    if m and (a + o):
        det_pos = np.array([d.pos for d in dets], dtype=float)
        dxs = np.abs(track_pos[:, 0][:, None] - det_pos[None, :, 0])
        dys = np.abs(track_pos[:, 1][:, None] - det_pos[None, :, 1])
        block = features[: a + o, :m]
        block[:, :, I_DX] = dxs
        block[:, :, I_DY] = dys
        block[:, :, I_SX] = 1.0 - dxs
        block[:, :, I_SY] = 1.0 - dys
        block[:, :, I_CX] = dxs
        block[:, :, I_CY] = dys

    # Masks for the track/detection block, vectorized over the zone cases.
    if m:
        tz, dz, zsimple = _zone_arrays(partition, a, m)
        if a:
            same = tz[:, None] == dz[None, :]
            t_complex = ~zsimple[tz]
            d_complex = ~zsimple[dz]
            simple_ctx = same & zsimple[tz][:, None]
            complex_ctx = (same & t_complex[:, None]) | (
                ~same & t_complex[:, None] & d_complex[None, :]
            )
            masks[:a, :m][simple_ctx] = _pair_mask(True, cfg.feature_mode)
            masks[:a, :m][complex_ctx] = _pair_mask(False, cfg.feature_mode)
        if o:
            d_complex_cols = ~zsimple[dz]
            masks[a : a + o, :m][:, d_complex_cols] = _pair_mask(False, cfg.feature_mode)

    # Dummy structure: exit/slot/birth diagonals and the full-xi filler block.
    for i in range(a):
        masks[i, m + o + i] = MASK_XI
    for p in range(o):
        masks[a + p, m + p] = MASK_XI
    for j in range(m):
        masks[a + o + j, j] = MASK_XI
    if m:
        masks[a + o :, m:] = MASK_XI

    # Complex feature slots only where some mask needs them.
    missing = 0
    need = np.nonzero(masks[: a + o, :m, I_G1] != 0)
    for r, j in zip(*need):
        track = track_objs[r]
        det = dets[j]
        if det.appearance is None or not track.appearance_history:
            features[r, j, I_G1] = cfg.g1_neutral
            missing += 1
        else:
            features[r, j, I_G1] = appearance_distance_g1(det, track, cfg)
        features[r, j, I_G2] = motion_coherence_g2(det, track, cfg)

    finite = np.isfinite(masks[:, :, I_BIAS])
    sane = masks.copy()
    sane[~finite] = 0.0
    cost = np.einsum("ijk,k->ij", sane * features, wv)
    cost[~finite] = np.inf

    inst = AssignmentInstance(
        cost=cost,
        features=features,
        masks=masks,
        row_labels=row_labels,
        col_labels=col_labels,
        n_active=a,
        n_occluded=o,
        n_detections=m,
        missing_appearance=missing,
    )
    inst.check_layout()
    return inst


def feature_map(instance: AssignmentInstance, y) -> np.ndarray:
    """Feature map of a solution: minus the sum of masked features over selected cells."""
    y = np.asarray(y, dtype=int)
    n = instance.n
    rows = np.arange(n)
    bias_mask = instance.masks[rows, y, I_BIAS]
    if not np.all(np.isfinite(bias_mask)):
        raise LayoutError("solution selects a forbidden cell")
    picked = instance.masks[rows, y] * instance.features[rows, y]
    return -picked.sum(axis=0)


def solution_cost(instance: AssignmentInstance, y) -> float:
    y = np.asarray(y, dtype=int)
    return float(instance.cost[np.arange(instance.n), y].sum())


def split_components(instance: AssignmentInstance, partition: ZonePartition) -> list:
    """Row/column index groups that the augmented matrix decomposes into.

    Each simple zone is independent; all complex zones plus every occluded
    track form one joint block. Birth rows and exit columns follow their
    detection/track. Cross-group finite cells are only uniform-cost fillers,
    so solving groups independently is cost-equivalent to the global solve.
    """
    a, o, m = instance.n_active, instance.n_occluded, instance.n_detections
    comps = []
    complex_tracks: list = []
    complex_dets: list = []
    for zone in partition.zones:
        if zone.kind is ZoneKind.SIMPLE:
            tr = sorted(zone.track_indices)
            de = sorted(zone.det_indices)
            rows = [t for t in tr] + [a + o + j for j in de]
            cols = [j for j in de] + [m + o + t for t in tr]
            comps.append((np.array(rows, dtype=int), np.array(cols, dtype=int)))
        else:
            complex_tracks.extend(zone.track_indices)
            complex_dets.extend(zone.det_indices)
    complex_tracks.sort()
    complex_dets.sort()
    rows = (
        [t for t in complex_tracks]
        + [a + p for p in range(o)]
        + [a + o + j for j in complex_dets]
    )
    cols = (
        [j for j in complex_dets]
        + [m + p for p in range(o)]
        + [m + o + t for t in complex_tracks]
    )
    if rows:
        comps.append((np.array(rows, dtype=int), np.array(cols, dtype=int)))
    covered = sum(len(r) for r, _ in comps)
    if covered != instance.n:
        raise LayoutError(f"components cover {covered} rows of {instance.n}")
    return comps


def solve_instance(instance: AssignmentInstance, partition: ZonePartition = None, mode: str = "partitioned"):
    """Solve the augmented matrix, globally or per independent component."""
    if mode == "global" or partition is None:
        res = assign.solve(instance.cost)
        return res.y, res.total_cost
    y = np.full(instance.n, -1, dtype=int)
    total = 0.0
    for rows, cols in split_components(instance, partition):
        res = assign.solve(instance.cost[np.ix_(rows, cols)])
        y[rows] = cols[res.y]
        total += res.total_cost
    if np.any(y < 0):
        raise LayoutError("partitioned solve left unassigned rows")
    return y, total
