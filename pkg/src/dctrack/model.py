"""Domain types: detections, tracks, zones, weights, assignment instances.

Positions are scene-normalized to [0, 1] per axis so that the similarity
features 1 - |dx| stay meaningful; pixel coordinates live only at the I/O
boundary. Infinity is always represented by ``np.inf`` in the bias slot of a
mask, never by a large finite float.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Weight / feature vector layout (length 9):
#   0      bias (track birth/termination cost)
#   1, 2   |dx|, |dy|          distances used in simple zones
#   3, 4   1-|dx|, 1-|dy|      similarities used only by the divide step
#   5, 6   |dx|, |dy|          distances used in complex zones
#   7      appearance distance (mean per-channel KL against stored instances)
#   8      motion coherence (mean Menger curvature of the local trajectory)
W_DIM = 9
I_BIAS = 0
I_DX, I_DY = 1, 2
I_SX, I_SY = 3, 4
I_CX, I_CY = 5, 6
I_G1, I_G2 = 7, 8

THETA_SLICE = slice(1, 5)


class TrackStatus(enum.Enum):
    ACTIVE = "active"
    OCCLUDED = "occluded"
    TERMINATED = "terminated"


class ZoneKind(enum.Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


@dataclass(frozen=True)
class Histogram:
    """Per-channel normalized color histogram, shape (channels, bins)."""

    bins: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bins, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"histogram must be 2-D (channels, bins), got {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("histogram bins must be non-negative")
        sums = arr.sum(axis=1)
        if np.any(sums <= 0):
            raise ValueError("each histogram channel must have positive mass")
        arr = arr / sums[:, None]
        object.__setattr__(self, "bins", arr)

    @classmethod
    def from_flat(cls, values, channels: int = 3) -> "Histogram":
        vec = np.asarray(values, dtype=float)
        if vec.size % channels != 0:
            raise ValueError(f"cannot split {vec.size} bins into {channels} channels")
        return cls(vec.reshape(channels, -1))

    @property
    def flat(self) -> np.ndarray:
        return self.bins.reshape(-1)

    def close_to(self, other: "Histogram", tol: float = 1e-9) -> bool:
        return self.bins.shape == other.bins.shape and bool(
            np.allclose(self.bins, other.bins, atol=tol)
        )


@dataclass(frozen=True)
class Detection:
    """One frame's observation: normalized center plus the raw pixel box."""

    frame: int
    pos: tuple[float, float]
    bbox: tuple[float, float, float, float]  # left, top, width, height (pixels)
    confidence: float = 1.0
    appearance: Optional[Histogram] = None

    def __post_init__(self):
        x, y = self.pos
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ValueError(f"normalized position out of [0,1]: {self.pos}")
        if self.frame < 0:
            raise ValueError("frame index must be >= 0")
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValueError(f"bbox must have positive size: {self.bbox}")


@dataclass(frozen=True)
class KalmanState:
    """Constant-velocity filter state: x = (x, y, vx, vy), P its covariance."""

    x: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(4)
        P = np.asarray(self.P, dtype=float).reshape(4, 4)
        if not np.allclose(P, P.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", P)

    @property
    def pos(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[1])


@dataclass
class Track:
    """A tracked identity. Mutated only by the tracker's per-frame step."""

    id: int
    status: TrackStatus = TrackStatus.ACTIVE
    trajectory: list[tuple[int, tuple[float, float]]] = field(default_factory=list)
    appearance_history: list[Histogram] = field(default_factory=list)
    kalman: Optional[KalmanState] = None
    frames_occluded: int = 0

    def last_pos(self) -> tuple[float, float]:
        if not self.trajectory:
            raise ValueError(f"track {self.id} has an empty trajectory")
        return self.trajectory[-1][1]

    def last_frame(self) -> int:
        if not self.trajectory:
            raise ValueError(f"track {self.id} has an empty trajectory")
        return self.trajectory[-1][0]

    def validate(self) -> None:
        frames = [f for f, _ in self.trajectory]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"track {self.id}: trajectory frames must strictly increase")
        if self.status is TrackStatus.ACTIVE and self.frames_occluded != 0:
            raise ValueError(f"track {self.id}: active track with nonzero occlusion count")


@dataclass(frozen=True)
class Zone:
    """A spatially coherent subset of active tracks and detections.

    Indices are positions in the frame's active-track and detection lists.
    ``kind`` is None until the partition has been classified.
    """

    track_indices: frozenset
    det_indices: frozenset
    kind: Optional[ZoneKind] = None

    def classified(self) -> "Zone":
        kind = (
            ZoneKind.SIMPLE
            if len(self.track_indices) == len(self.det_indices)
            else ZoneKind.COMPLEX
        )
        return Zone(self.track_indices, self.det_indices, kind)

    def __len__(self) -> int:
        return len(self.track_indices) + len(self.det_indices)


@dataclass(frozen=True)
class ZonePartition:
    """Disjoint zones covering all active tracks and detections of a frame."""

    zones: tuple

    def __post_init__(self):
        object.__setattr__(self, "zones", tuple(self.zones))
        by_track = {}
        by_det = {}
        for z in self.zones:
            for i in z.track_indices:
                if i in by_track:
                    raise ValueError(f"track index {i} appears in two zones")
                by_track[i] = z
            for j in z.det_indices:
                if j in by_det:
                    raise ValueError(f"detection index {j} appears in two zones")
                by_det[j] = z
        object.__setattr__(self, "_by_track", by_track)
        object.__setattr__(self, "_by_det", by_det)

    @classmethod
    def empty(cls) -> "ZonePartition":
        return cls(())

    def zone_of_track(self, i: int) -> Zone:
        return self._by_track[i]

    def zone_of_det(self, j: int) -> Zone:
        return self._by_det[j]

    @property
    def n_tracks(self) -> int:
        return len(self._by_track)

    @property
    def n_dets(self) -> int:
        return len(self._by_det)

    def check_coverage(self, n_tracks: int, n_dets: int) -> None:
        if set(self._by_track) != set(range(n_tracks)):
            raise ValueError("zones do not cover exactly the active tracks")
        if set(self._by_det) != set(range(n_dets)):
            raise ValueError("zones do not cover exactly the detections")

    def complex_fraction(self) -> float:
        if not self.zones:
            return 0.0
        n_complex = sum(1 for z in self.zones if z.kind is ZoneKind.COMPLEX)
        return n_complex / len(self.zones)


_WEIGHT_NAMES = (
    "bias",
    "dist_x",
    "dist_y",
    "sim_x",
    "sim_y",
    "cdist_x",
    "cdist_y",
    "appearance",
    "motion",
)


@dataclass(frozen=True)
class WeightVector:
    """Length-9 learned weight vector; see the module docstring for the layout."""

    values: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.values, dtype=float).reshape(-1)
        if vec.size != W_DIM:
            raise ValueError(f"weight vector must have length {W_DIM}, got {vec.size}")
        object.__setattr__(self, "values", vec.copy())

    @classmethod
    def zeros(cls) -> "WeightVector":
        return cls(np.zeros(W_DIM))

    @property
    def bias(self) -> float:
        return float(self.values[I_BIAS])

    @property
    def theta(self) -> np.ndarray:
        """The divide-step sub-vector (dist_x, dist_y, sim_x, sim_y)."""
        return self.values[THETA_SLICE].copy()

    def named(self) -> dict:
        return dict(zip(_WEIGHT_NAMES, (float(v) for v in self.values)))

    @classmethod
    def from_named(cls, mapping) -> "WeightVector":
        try:
            return cls(np.array([mapping[name] for name in _WEIGHT_NAMES], dtype=float))
        except KeyError as exc:
            raise ValueError(f"missing weight entry {exc}") from exc


def as_weight_array(w) -> np.ndarray:
    """Accept a WeightVector or a raw length-9 array."""
    if isinstance(w, WeightVector):
        return w.values
    arr = np.asarray(w, dtype=float).reshape(-1)
    if arr.size != W_DIM:
        raise ValueError(f"weight vector must have length {W_DIM}, got {arr.size}")
    return arr


# Row/column labels of the augmented assignment matrix. Rows are active
# tracks, then occluded tracks, then one birth row per detection; columns are
# detections, then one keep-occluded slot per occluded track, then one exit
# column per active track.
ROW_TRACK = "track"
ROW_OCC = "occ"
ROW_BIRTH = "birth"
COL_DET = "det"
COL_SLOT = "slot"
COL_EXIT = "exit"


@dataclass
class AssignmentInstance:
    """Augmented square cost matrix with per-cell features and masks.

    ``cost[i, j] == <w, masks[i, j] * features[i, j]>`` for every finite cell;
    cells whose mask bias slot is inf carry ``np.inf`` cost. Complex feature
    slots may be left zero where the mask disables them.
    """

    cost: np.ndarray
    features: np.ndarray
    masks: np.ndarray
    row_labels: tuple
    col_labels: tuple
    n_active: int
    n_occluded: int
    n_detections: int
    missing_appearance: int = 0

    @property
    def n(self) -> int:
        return self.cost.shape[0]

    def check_layout(self) -> None:
        n = self.n_active + self.n_occluded + self.n_detections
        if self.cost.shape != (n, n):
            raise ValueError(f"cost must be {n}x{n}, got {self.cost.shape}")
        if self.features.shape != (n, n, W_DIM) or self.masks.shape != (n, n, W_DIM):
            raise ValueError("feature/mask tensors must be (n, n, 9)")


@dataclass(frozen=True)
class FrameSolution:
    """Result of one frame's association step."""

    y: np.ndarray  # y[i] = column chosen for row i of the augmented matrix
    partition: ZonePartition
    cost: float

    def __post_init__(self):
        y = np.asarray(self.y, dtype=int)
        object.__setattr__(self, "y", y)
        n = y.size
        if sorted(y.tolist()) != list(range(n)):
            raise ValueError("assignment is not a permutation")
