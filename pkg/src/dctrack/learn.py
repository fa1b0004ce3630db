"""Latent structural SVM training with Block-Coordinate Frank-Wolfe.

One training sample is a frame: tracks (with occlusion status), detections,
and the ground-truth assignment over the augmented matrix layout. The zone
partition is a latent variable: before each update it is completed by the
divide step under the current weights, then a single Hungarian call on the
Hamming-loss-augmented costs yields the most violating assignment, and the
block update applies the closed-form line search.

Objective: min_w  lambda/2 ||w||^2 + (1/K) sum_k max_y [Delta_k(y) - <w, psi_k(y)>]
with psi_k(y) = Phi(gt) - Phi(y) and Phi(y) = -sum_i (mask * feature)(i, y_i).
The tracked dual value l - lambda/2 ||w||^2 never decreases under the exact
line search, which the tests assert.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import assign, cluster, featcost, kalman
from .config import Config
from .errors import LayoutError, ParseError
from .io import GroundTruth, NoiseSpec
from .model import (
    Detection,
    Histogram,
    Track,
    TrackStatus,
    WeightVector,
    Zone,
    ZoneKind,
    ZonePartition,
    as_weight_array,
    W_DIM,
)

_WEIGHT_KEYS = (
    "w_bias",
    "w_dist_x",
    "w_dist_y",
    "w_sim_x",
    "w_sim_y",
    "w_cdist_x",
    "w_cdist_y",
    "w_appearance",
    "w_motion",
)

MODEL_MAGIC = "dctrack-model"
MODEL_VERSION = 1


@dataclass
class TrainingSample:
    """One frame's supervised association problem."""

    active: list
    occluded: list
    dets: list
    y_gt: np.ndarray

    @property
    def sizes(self):
        return len(self.active), len(self.occluded), len(self.dets)

    @property
    def n(self) -> int:
        a, o, m = self.sizes
        return a + o + m


def hamming(y, y_gt) -> int:
    return int(np.sum(np.asarray(y) != np.asarray(y_gt)))


def latent_complete(sample: TrainingSample, w, cfg: Config) -> ZonePartition:
    """Zone partition best explaining the ground truth under current weights.

    Runs the divide step, then dissolves any simple zone that would place a
    ground-truth pair across a zone boundary (such a partition has an
    infinite feature map for the ground truth and can never be the argmax).
    Dissolved elements become complex singletons, so every conflicted pair
    lands in the complex-features case.
    """
    a, o, m = sample.sizes
    partition = cluster.divide_frame(
        sample.active, sample.dets, w, trials=cfg.cc_trials, seed=cfg.cc_seed
    )
    if not partition.zones:
        return partition
    y = sample.y_gt
    doomed = set()
    for i in range(a):
        col = int(y[i])
        if col >= m:
            continue
        zt = partition.zone_of_track(i)
        zd = partition.zone_of_det(col)
        if zt is zd:
            continue
        if zt.kind is ZoneKind.COMPLEX and zd.kind is ZoneKind.COMPLEX:
            continue
        if zt.kind is ZoneKind.SIMPLE:
            doomed.add(zt)
        if zd.kind is ZoneKind.SIMPLE:
            doomed.add(zd)
    for p in range(o):
        col = int(y[a + p])
        if col < m:
            zd = partition.zone_of_det(col)
            if zd.kind is ZoneKind.SIMPLE:
                doomed.add(zd)
    if not doomed:
        return partition
    zones = []
    for zone in partition.zones:
        if zone in doomed:
            zones.extend(Zone(frozenset([t]), frozenset()) for t in sorted(zone.track_indices))
            zones.extend(Zone(frozenset(), frozenset([d])) for d in sorted(zone.det_indices))
        else:
            zones.append(zone)
    return cluster.classify_zones(ZonePartition(tuple(zones)))


@dataclass
class OracleResult:
    y_bar: np.ndarray
    value: float
    delta: int
    instance: featcost.AssignmentInstance


def max_oracle(sample: TrainingSample, partition: ZonePartition, w, cfg: Config,
               instance=None) -> OracleResult:
    """Most violating assignment under Hamming loss, via one Hungarian call.

    Maximizing Delta(y) - <w, psi(y)> over assignments equals minimizing the
    matrix C'(i,j) = C(i,j) - 1{j != y_gt(i)}; the returned value is the
    structured hinge evaluated at the argmax (0 when the ground truth wins).
    """
    if instance is None:
        instance = featcost.build_instance(
            sample.active, sample.occluded, sample.dets, partition, w, cfg
        )
    y_gt = sample.y_gt
    cost_gt = featcost.solution_cost(instance, y_gt)
    if not np.isfinite(cost_gt):
        raise LayoutError("ground truth infeasible under the completed partition")
    shifted = instance.cost - 1.0
    rows = np.arange(instance.n)
    shifted[rows, y_gt] += 1.0
    res = assign.solve(shifted)
    delta = hamming(res.y, y_gt)
    value = delta + cost_gt - featcost.solution_cost(instance, res.y)
    return OracleResult(y_bar=res.y, value=float(value), delta=delta, instance=instance)


@dataclass
class TrainerState:
    """BCFW state: total weights plus one block per training sample."""

    lam: float
    w: np.ndarray
    l: float
    w_blocks: np.ndarray  # (K, 9)
    l_blocks: np.ndarray  # (K,)
    n_pass: int = 0
    dual_history: list = field(default_factory=list)
    primal_history: list = field(default_factory=list)
    hinge_history: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.w_blocks.shape[0]

    def dual_value(self) -> float:
        return self.l - 0.5 * self.lam * float(self.w @ self.w)


def init_trainer(n_samples: int, lam: float) -> TrainerState:
    if n_samples < 1:
        raise ValueError("need at least one training sample")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return TrainerState(
        lam=lam,
        w=np.zeros(W_DIM),
        l=0.0,
        w_blocks=np.zeros((n_samples, W_DIM)),
        l_blocks=np.zeros(n_samples),
    )


def bcfw_step(state: TrainerState, k: int, sample: TrainingSample, cfg: Config) -> dict:
    """One block update: latent completion, oracle, closed-form line search."""
    partition = latent_complete(sample, state.w, cfg)
    instance = featcost.build_instance(
        sample.active, sample.occluded, sample.dets, partition, state.w, cfg
    )
    oracle = max_oracle(sample, partition, state.w, cfg, instance=instance)
    phi_gt = featcost.feature_map(instance, sample.y_gt)
    phi_bar = featcost.feature_map(instance, oracle.y_bar)
    psi = phi_gt - phi_bar

    lam, K = state.lam, state.K
    w_s = psi / (lam * K)
    if cfg.loss_norm == "n":
        l_s = oracle.delta / max(instance.n, 1)
    else:
        l_s = oracle.delta / K
    w_k = state.w_blocks[k]
    l_k = state.l_blocks[k]
    diff = w_k - w_s
    denom = lam * float(diff @ diff)
    if denom <= 1e-300:
        gamma = 0.0  # degenerate direction: no update
    else:
        gamma = (lam * float(diff @ state.w) - l_k + l_s) / denom
        gamma = min(1.0, max(0.0, gamma))
    new_wk = (1.0 - gamma) * w_k + gamma * w_s
    new_lk = (1.0 - gamma) * l_k + gamma * l_s
    state.w = state.w + new_wk - w_k
    state.l = state.l + new_lk - l_k
    state.w_blocks[k] = new_wk
    state.l_blocks[k] = new_lk
    state.dual_history.append(state.dual_value())
    return {"gamma": gamma, "hinge": oracle.value, "delta": oracle.delta}


def structured_hinge(sample: TrainingSample, w, cfg: Config) -> float:
    partition = latent_complete(sample, w, cfg)
    return max_oracle(sample, partition, w, cfg).value


def primal_objective(samples, w, lam: float, cfg: Config) -> float:
    w = np.asarray(w, dtype=float)
    hinges = [structured_hinge(s, w, cfg) for s in samples]
    return 0.5 * lam * float(w @ w) + float(np.mean(hinges))


def duality_gap(state: TrainerState, samples, cfg: Config) -> float:
    """Batch Frank-Wolfe gap at the current iterate (>= 0 up to roundoff)."""
    lam, K = state.lam, state.K
    ws_sum = np.zeros(W_DIM)
    ls_sum = 0.0
    for sample in samples:
        partition = latent_complete(sample, state.w, cfg)
        instance = featcost.build_instance(
            sample.active, sample.occluded, sample.dets, partition, state.w, cfg
        )
        oracle = max_oracle(sample, partition, state.w, cfg, instance=instance)
        psi = featcost.feature_map(instance, sample.y_gt) - featcost.feature_map(
            instance, oracle.y_bar
        )
        ws_sum += psi / (lam * K)
        if cfg.loss_norm == "n":
            ls_sum += oracle.delta / max(instance.n, 1)
        else:
            ls_sum += oracle.delta / K
    return lam * float((state.w - ws_sum) @ state.w) - state.l + ls_sum


def run_training(samples, lam: float, passes: int, seed: int = 0,
                 cfg: Config = None) -> TrainerState:
    """BCFW over the samples in order, `passes` sweeps; logs per-pass stats."""
    cfg = replace(cfg or Config(), cc_seed=seed)
    samples = [s for s in samples if s.n > 0]
    state = init_trainer(len(samples), lam)
    for _ in range(passes):
        hinges = []
        for k, sample in enumerate(samples):
            info = bcfw_step(state, k, sample, cfg)
            hinges.append(info["hinge"])
        state.n_pass += 1
        state.hinge_history.append(hinges)
        state.primal_history.append(primal_objective(samples, state.w, lam, cfg))
    return state


def train(samples, lam: float, passes: int, seed: int = 0, cfg: Config = None) -> WeightVector:
    return WeightVector(run_training(samples, lam, passes, seed=seed, cfg=cfg).w)


# ---------------------------------------------------------------------------
# Training-set synthesis from ground truth


def derive_detections(gt: GroundTruth, noise: NoiseSpec, rng,
                      forced_miss=frozenset()):
    """Noisy detections from ground truth: per-box misses (plus scripted
    ones), Poisson(false_rate) uniform clutter per frame, Gaussian jitter.

    Returns (dets_by_frame, src_by_frame); src ids align with the detection
    lists and are None for false detections.
    """
    sizes = [b.bbox[2:] for boxes in gt.frames.values() for b in boxes]
    med_w = float(np.median([s[0] for s in sizes])) if sizes else 0.05 * gt.width
    med_h = float(np.median([s[1] for s in sizes])) if sizes else 0.1 * gt.height
    n_bins = None
    if gt.appearance:
        n_bins = next(iter(gt.appearance.values())).bins.shape[1]
    dets_by_frame: dict = {}
    src_by_frame: dict = {}
    for frame in sorted(gt.frames):
        dets: list = []
        srcs: list = []
        for box in gt.frames[frame]:
            dropped = rng.random() < noise.miss_rate
            if dropped or (frame, box.id) in forced_miss:
                continue
            jx, jy = rng.normal(0.0, noise.jitter, 2) if noise.jitter > 0 else (0.0, 0.0)
            x = min(max(box.pos[0] + jx, 0.0), 1.0)
            y = min(max(box.pos[1] + jy, 0.0), 1.0)
            bbox = (
                box.bbox[0] + jx * gt.width,
                box.bbox[1] + jy * gt.height,
                box.bbox[2],
                box.bbox[3],
            )
            dets.append(
                Detection(
                    frame=frame,
                    pos=(x, y),
                    bbox=bbox,
                    confidence=box.conf,
                    appearance=gt.appearance.get((frame, box.id)),
                )
            )
            srcs.append(box.id)
        for _ in range(int(rng.poisson(noise.false_rate))):
            x, y = rng.uniform(0.02, 0.98, 2)
            hist = Histogram(rng.dirichlet(np.ones(n_bins), size=3)) if n_bins else None
            dets.append(
                Detection(
                    frame=frame,
                    pos=(float(x), float(y)),
                    bbox=(x * gt.width - med_w / 2, y * gt.height - med_h / 2, med_w, med_h),
                    confidence=1.0,
                    appearance=hist,
                )
            )
            srcs.append(None)
        dets_by_frame[frame] = dets
        src_by_frame[frame] = srcs
    return dets_by_frame, src_by_frame


def _warmup_kalman(observed, first_window_frame: int, end_frame: int, cfg: Config):
    """Filter state at end_frame from the observed (frame, pos) history."""
    window = [(f, p) for f, p in observed if f >= first_window_frame]
    f0, p0 = window[0]
    state = kalman.init_state(p0, cfg.init_pos_var, cfg.init_vel_var)
    obs = dict(window)
    for frame in range(f0 + 1, end_frame + 1):
        state = kalman.predict(state, cfg.kalman_q)
        if frame in obs:
            state = kalman.correct(state, obs[frame], cfg.kalman_r)
    return state


def samples_from_sequence(gt: GroundTruth, noise: NoiseSpec, rng, cfg: Config):
    """Per-frame supervised samples emulating an ideal tracker's state."""
    dets_by_frame, src_by_frame = derive_detections(gt, noise, rng)
    frames = sorted(gt.frames)
    det_of: dict = {}  # (frame, id) -> (col index, Detection)
    for frame in frames:
        for col, (det, src) in enumerate(zip(dets_by_frame[frame], src_by_frame[frame])):
            if src is not None:
                det_of[(frame, src)] = (col, det)
    observed: dict = {}  # id -> [(frame, pos)] in frame order
    for frame in frames:
        for src, det in zip(src_by_frame[frame], dets_by_frame[frame]):
            if src is not None:
                observed.setdefault(src, []).append((frame, det.pos))

    samples = []
    first_frame = frames[0]
    for k in range(first_frame + 1, frames[-1] + 1):
        active: list = []
        act_ids: list = []
        occl: list = []
        occ_ids: list = []
        for tid in sorted(observed):
            past = [(f, p) for f, p in observed[tid] if f < k]
            if not past:
                continue
            last_obs = past[-1][0]
            occ_count = (k - 1) - last_obs
            if occ_count > cfg.occlusion_horizon:
                continue
            hists = [
                gt.appearance[(f, tid)]
                for f, _ in past
                if (f, tid) in gt.appearance
            ]
            if cfg.appearance_history > 0:
                hists = hists[-cfg.appearance_history:]
            window_start = max(past[0][0], (k - 1) - cfg.kalman_warmup)
            track = Track(
                id=tid,
                status=TrackStatus.ACTIVE if occ_count == 0 else TrackStatus.OCCLUDED,
                trajectory=list(past),
                appearance_history=hists,
                kalman=_warmup_kalman(past, window_start, k - 1, cfg),
                frames_occluded=occ_count,
            )
            if occ_count == 0:
                active.append(track)
                act_ids.append(tid)
            else:
                occl.append(track)
                occ_ids.append(tid)

        dets = dets_by_frame.get(k, [])
        srcs = src_by_frame.get(k, [])
        a, o, m = len(active), len(occl), len(dets)
        n = a + o + m
        if n == 0:
            continue
        col_of_src = {src: j for j, src in enumerate(srcs) if src is not None}
        y = np.full(n, -1, dtype=int)
        used = np.zeros(n, dtype=bool)

        def take(row, col):
            if used[col]:
                raise LayoutError(f"column {col} doubly assigned building ground truth")
            y[row] = col
            used[col] = True

        for i, tid in enumerate(act_ids):
            take(i, col_of_src[tid] if tid in col_of_src else m + o + i)
        for p, tid in enumerate(occ_ids):
            take(a + p, col_of_src[tid] if tid in col_of_src else m + p)
        tracked_ids = set(act_ids) | set(occ_ids)
        fillers = []
        for j, src in enumerate(srcs):
            if src is None or src not in tracked_ids:
                take(a + o + j, j)  # false detection or brand-new target
            else:
                fillers.append(a + o + j)
        free_cols = [c for c in range(n) if not used[c]]
        for row, col in zip(fillers, free_cols):
            take(row, col)
        if np.any(y < 0):
            raise LayoutError("ground-truth assignment incomplete")
        samples.append(TrainingSample(active=active, occluded=occl, dets=dets, y_gt=y))
    return samples


def make_training_set(gt_sequences, noise: NoiseSpec, seed: int = 0,
                      cfg: Config = None) -> list:
    """Supervised samples from ground-truth sequences plus detector noise."""
    cfg = cfg or Config()
    if isinstance(gt_sequences, GroundTruth):
        gt_sequences = [gt_sequences]
    rng = np.random.default_rng(seed)
    samples: list = []
    for gt in gt_sequences:
        samples.extend(samples_from_sequence(gt, noise, rng, cfg))
    return samples


# ---------------------------------------------------------------------------
# Model file


def save_model(path, w, cfg: Config = None) -> None:
    """Versioned plain-text weights with feature-set and scene bounds."""
    cfg = cfg or Config()
    wv = as_weight_array(w)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MODEL_MAGIC} v{MODEL_VERSION}\n")
        fh.write("feature_set default9\n")
        fh.write(f"scene_width {cfg.scene_width!r}\n")
        fh.write(f"scene_height {cfg.scene_height!r}\n")
        for key, val in zip(_WEIGHT_KEYS, wv):
            fh.write(f"{key} {val!r}\n")


def load_model(path):
    """Returns (WeightVector, metadata dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ParseError(path, 1, "empty model file")
    header = lines[0].split()
    if len(header) != 2 or header[0] != MODEL_MAGIC:
        raise ParseError(path, 1, f"not a {MODEL_MAGIC} file")
    if header[1] != f"v{MODEL_VERSION}":
        raise ParseError(path, 1, f"unsupported model version {header[1]}")
    entries = {}
    for line_no, line in enumerate(lines[1:], start=2):
        key, _, raw = line.partition(" ")
        if not raw:
            raise ParseError(path, line_no, "expected 'key value'")
        entries[key] = raw.strip()
    if entries.get("feature_set") != "default9":
        raise ParseError(path, 1, f"unknown feature set {entries.get('feature_set')!r}")
    try:
        values = np.array([float(entries[key]) for key in _WEIGHT_KEYS])
        meta = {
            "feature_set": entries["feature_set"],
            "scene_width": float(entries["scene_width"]),
            "scene_height": float(entries["scene_height"]),
        }
    except KeyError as exc:
        raise ParseError(path, 0, f"missing model entry {exc}")
    return WeightVector(values), meta
