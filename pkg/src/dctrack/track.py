"""Online per-frame tracking loop: divide, conquer, update lifecycles.

Each frame runs the divide step (affinity + correlation clustering +
zone classification), builds the augmented cost matrix, solves it, and
applies the matching: matched tracks extend (predict + correct), unmatched
tracks go or stay occluded (predict only), detections claimed by birth rows
start new tracks, and tracks occluded past the horizon terminate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cluster, featcost, kalman
from .config import Config
from .errors import FrameOrderError, LayoutError
from .model import (
    Detection,
    FrameSolution,
    KalmanState,
    Track,
    TrackStatus,
    ZonePartition,
)


def kalman_predict(state: KalmanState, q: float = 1e-4) -> KalmanState:
    """One constant-velocity prediction: x <- Ax, P <- APA' + qI."""
    return kalman.predict(state, q)


def kalman_correct(state: KalmanState, z, r: float = 1e-4) -> KalmanState:
    """Standard position-measurement update."""
    return kalman.correct(state, z, r)


@dataclass
class FrameStats:
    frame: int
    n_active: int
    n_occluded: int
    n_detections: int
    n_zones: int
    beta: float
    seconds: float


@dataclass
class TrackerState:
    """Single-writer per-sequence state; step() is strictly sequential."""

    cfg: Config
    frame: int = 0  # last processed frame
    tracks: list = field(default_factory=list)  # active + occluded, in birth order
    terminated: list = field(default_factory=list)
    next_id: int = 1
    # (frame, track id, bbox, confidence) for every reported box
    output_rows: list = field(default_factory=list)


def new_state(cfg: Config, first_frame: int = 1) -> TrackerState:
    return TrackerState(cfg=cfg, frame=first_frame - 1)


def _associate(state: TrackerState, track: Track, det: Detection, frame: int) -> None:
    cfg = state.cfg
    predicted = kalman.predict(track.kalman, cfg.kalman_q)
    track.kalman = kalman.correct(predicted, det.pos, cfg.kalman_r)
    track.trajectory.append((frame, det.pos))
    if det.appearance is not None:
        track.appearance_history.append(det.appearance)
        cap = cfg.appearance_history
        if cap > 0 and len(track.appearance_history) > cap:
            del track.appearance_history[: len(track.appearance_history) - cap]
    track.status = TrackStatus.ACTIVE
    track.frames_occluded = 0
    state.output_rows.append((frame, track.id, det.bbox, det.confidence))


def _miss(state: TrackerState, track: Track) -> None:
    cfg = state.cfg
    track.kalman = kalman.predict(track.kalman, cfg.kalman_q)
    track.frames_occluded += 1
    if track.frames_occluded > cfg.occlusion_horizon:
        track.status = TrackStatus.TERMINATED
    else:
        track.status = TrackStatus.OCCLUDED


def _spawn(state: TrackerState, det: Detection, frame: int) -> Track:
    cfg = state.cfg
    track = Track(
        id=state.next_id,
        status=TrackStatus.ACTIVE,
        trajectory=[(frame, det.pos)],
        appearance_history=[det.appearance] if det.appearance is not None else [],
        kalman=kalman.init_state(det.pos, cfg.init_pos_var, cfg.init_vel_var),
        frames_occluded=0,
    )
    state.next_id += 1
    state.output_rows.append((frame, track.id, det.bbox, det.confidence))
    return track


def step(state: TrackerState, dets: list, w) -> tuple:
    """Advance the tracker by one frame. Returns (state, FrameSolution)."""
    frame = state.frame + 1
    for d in dets:
        if d.frame != frame:
            raise FrameOrderError(f"detection for frame {d.frame}, expected {frame}")
    cfg = state.cfg
    active = [t for t in state.tracks if t.status is TrackStatus.ACTIVE]
    occluded = [t for t in state.tracks if t.status is TrackStatus.OCCLUDED]

    if active or dets:
        partition = cluster.divide_frame(
            active, dets, w, trials=cfg.cc_trials, seed=cfg.cc_seed
        )
    else:
        partition = ZonePartition.empty()

    instance = featcost.build_instance(active, occluded, dets, partition, w, cfg)
    if instance.n == 0:
        state.frame = frame
        return state, FrameSolution(np.zeros(0, dtype=int), partition, 0.0)

    y, cost = featcost.solve_instance(instance, partition, mode=cfg.solver)

    a, o, m = len(active), len(occluded), len(dets)
    for i, track in enumerate(active):
        col = int(y[i])
        if col < m:
            _associate(state, track, dets[col], frame)
        elif col == m + o + i:
            _miss(state, track)
        else:
            raise LayoutError(f"active row {i} matched invalid column {col}")
    for p, track in enumerate(occluded):
        col = int(y[a + p])
        if col < m:
            _associate(state, track, dets[col], frame)
        elif col == m + p:
            _miss(state, track)
        else:
            raise LayoutError(f"occluded row {p} matched invalid column {col}")
    newborn = []
    for j in range(m):
        col = int(y[a + o + j])
        if col == j:
            newborn.append(_spawn(state, dets[j], frame))
        elif col < m:
            raise LayoutError(f"birth row {j} matched foreign detection {col}")

    dead = [t for t in state.tracks if t.status is TrackStatus.TERMINATED]
    state.tracks = [t for t in state.tracks if t.status is not TrackStatus.TERMINATED]
    state.tracks.extend(newborn)
    state.terminated.extend(dead)
    state.frame = frame
    return state, FrameSolution(y, partition, cost)


def run_sequence(dets_by_frame: dict, w, cfg: Config, first_frame=None, last_frame=None):
    """Track a whole sequence. Returns (state, solutions, per-frame stats)."""
    if not dets_by_frame and first_frame is None:
        return new_state(cfg), [], []
    frames = sorted(dets_by_frame)
    first = first_frame if first_frame is not None else frames[0]
    last = last_frame if last_frame is not None else frames[-1]
    state = new_state(cfg, first_frame=first)
    solutions = []
    stats = []
    for frame in range(first, last + 1):
        dets = dets_by_frame.get(frame, [])
        n_act = sum(1 for t in state.tracks if t.status is TrackStatus.ACTIVE)
        n_occ = sum(1 for t in state.tracks if t.status is TrackStatus.OCCLUDED)
        t0 = time.perf_counter()
        state, sol = step(state, dets, w)
        dt = time.perf_counter() - t0
        solutions.append(sol)
        stats.append(
            FrameStats(
                frame=frame,
                n_active=n_act,
                n_occluded=n_occ,
                n_detections=len(dets),
                n_zones=len(sol.partition.zones),
                beta=sol.partition.complex_fraction(),
                seconds=dt,
            )
        )
    return state, solutions, stats
