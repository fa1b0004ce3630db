"""Data ingestion and generation: MOT-format files, appearance sidecars,
scene configuration, and seeded synthetic sequences.

MOT lines are ``frame,id,left,top,width,height,conf,x,y,z`` with id = -1 for
raw detections. Appearance histograms arrive through sidecar CSVs (one row
per box: two key columns followed by channels*bins values) rather than from
pixels, keyed by (frame, detection index within frame) for detection files
and by (frame, target id) for ground truth.
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .config import Config, read_config, write_config  # noqa: F401  (io owns configuration)
from .errors import DimensionMismatch, EmptyFile, ParseError
from .model import Detection, Histogram

SEQINFO_NAME = "seqinfo.ini"


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# MOT files


def _parse_rows(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split(",")
            if len(parts) < 7:
                raise ParseError(path, line_no, f"expected >= 7 fields, got {len(parts)}")
            try:
                frame = int(float(parts[0]))
                tid = int(float(parts[1]))
                box = tuple(float(v) for v in parts[2:6])
                conf = float(parts[6])
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad numeric field: {exc}")
            if frame < 0:
                raise ParseError(path, line_no, f"negative frame {frame}")
            if box[2] <= 0 or box[3] <= 0:
                raise ParseError(path, line_no, f"non-positive box size {box[2:]}")
            rows.append((line_no, frame, tid, box, conf))
    if not rows:
        raise EmptyFile(f"{path}: no rows")
    return rows


def read_seqinfo(directory):
    """(width, height) from a seqinfo.ini next to the data, or None."""
    path = os.path.join(directory, SEQINFO_NAME)
    if not os.path.exists(path):
        return None
    parser = configparser.ConfigParser()
    parser.read(path)
    try:
        sec = parser["Sequence"]
        return float(sec["imWidth"]), float(sec["imHeight"])
    except KeyError:
        return None


def write_seqinfo(directory, width: float, height: float, length: int) -> None:
    parser = configparser.ConfigParser()
    parser["Sequence"] = {
        "imWidth": _fmt(width),
        "imHeight": _fmt(height),
        "seqLength": str(length),
    }
    with open(os.path.join(directory, SEQINFO_NAME), "w", encoding="utf-8") as fh:
        parser.write(fh)


def resolve_bounds(path, rows, bounds=None):
    """Scene bounds: explicit argument, else seqinfo.ini, else data extent."""
    if bounds is not None:
        return float(bounds[0]), float(bounds[1])
    info = read_seqinfo(os.path.dirname(os.path.abspath(path)))
    if info is not None:
        return info
    width = max(box[0] + box[2] for _, _, _, box, _ in rows)
    height = max(box[1] + box[3] for _, _, _, box, _ in rows)
    return max(width, 1.0), max(height, 1.0)


def box_center(box, width: float, height: float):
    x = (box[0] + box[2] / 2.0) / width
    y = (box[1] + box[3] / 2.0) / height
    return min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0)


def read_detections(path, bounds=None, sidecar=None):
    """Detections grouped by frame, frame-sorted, positions normalized.

    Within a frame the file order is preserved; that order is the detection
    index the sidecar keys refer to.
    """
    rows = _parse_rows(path)
    width, height = resolve_bounds(path, rows, bounds)
    appearance = read_appearance_sidecar(sidecar) if sidecar else {}
    by_frame: dict = {}
    for _, frame, _tid, box, conf in rows:
        by_frame.setdefault(frame, []).append((box, conf))
    dets: dict = {}
    for frame in sorted(by_frame):
        lst = []
        for idx, (box, conf) in enumerate(by_frame[frame]):
            lst.append(
                Detection(
                    frame=frame,
                    pos=box_center(box, width, height),
                    bbox=box,
                    confidence=conf,
                    appearance=appearance.get((frame, idx)),
                )
            )
        dets[frame] = lst
    return dets, (width, height)


@dataclass(frozen=True)
class GTBox:
    id: int
    bbox: tuple
    pos: tuple
    conf: float = 1.0


@dataclass
class GroundTruth:
    """Identity-annotated boxes per frame, with optional appearance."""

    frames: dict  # frame -> [GTBox], id-sorted
    appearance: dict = field(default_factory=dict)  # (frame, id) -> Histogram
    width: float = 1.0
    height: float = 1.0

    def frame_range(self):
        keys = sorted(self.frames)
        return keys[0], keys[-1]

    def ids(self):
        out = set()
        for boxes in self.frames.values():
            out.update(b.id for b in boxes)
        return sorted(out)

    def spans(self):
        spans: dict = {}
        for frame in sorted(self.frames):
            for b in self.frames[frame]:
                first, last = spans.get(b.id, (frame, frame))
                spans[b.id] = (min(first, frame), max(last, frame))
        return spans

    def box(self, frame: int, tid: int):
        for b in self.frames.get(frame, []):
            if b.id == tid:
                return b
        return None

    def total_boxes(self) -> int:
        return sum(len(v) for v in self.frames.values())


def read_gt(path, bounds=None, sidecar=None) -> GroundTruth:
    """Ground truth (or tracker output): id-keyed boxes per frame."""
    rows = _parse_rows(path)
    width, height = resolve_bounds(path, rows, bounds)
    frames: dict = {}
    for line_no, frame, tid, box, conf in rows:
        if tid < 0:
            raise ParseError(path, line_no, "ground-truth rows need a non-negative id")
        frames.setdefault(frame, []).append(
            GTBox(id=tid, bbox=box, pos=box_center(box, width, height), conf=conf)
        )
    for frame in frames:
        frames[frame].sort(key=lambda b: b.id)
    appearance = read_appearance_sidecar(sidecar) if sidecar else {}
    return GroundTruth(
        frames=dict(sorted(frames.items())),
        appearance=appearance,
        width=width,
        height=height,
    )


def write_mot(path, rows) -> None:
    """Rows are (frame, id, bbox(l,t,w,h), conf)."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame, tid, box, conf in rows:
            vals = ",".join(_fmt(v) for v in box)
            fh.write(f"{frame},{tid},{vals},{_fmt(conf)},-1,-1,-1\n")


def write_detections(path, dets_by_frame) -> None:
    rows = []
    for frame in sorted(dets_by_frame):
        for det in dets_by_frame[frame]:
            rows.append((frame, -1, det.bbox, det.confidence))
    write_mot(path, rows)


def write_gt(path, gt: GroundTruth) -> None:
    rows = []
    for frame in sorted(gt.frames):
        for b in gt.frames[frame]:
            rows.append((frame, b.id, b.bbox, b.conf))
    write_mot(path, rows)


# ---------------------------------------------------------------------------
# Appearance sidecars


def read_appearance_sidecar(path, channels: int = 3):
    """(frame, key) -> Histogram. Key is the det index or the GT id."""
    out: dict = {}
    expected = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split(",")
            if len(parts) < 2 + channels:
                raise ParseError(path, line_no, f"expected key + bins, got {len(parts)} fields")
            try:
                frame = int(float(parts[0]))
                key = int(float(parts[1]))
                bins = np.array([float(v) for v in parts[2:]])
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad numeric field: {exc}")
            if expected is None:
                if bins.size % channels != 0:
                    raise DimensionMismatch(
                        f"{path}:{line_no}: {bins.size} bins not divisible by {channels} channels"
                    )
                expected = bins.size
            elif bins.size != expected:
                raise DimensionMismatch(
                    f"{path}:{line_no}: expected {expected} bins, got {bins.size}"
                )
            if np.any(bins < 0):
                raise ParseError(path, line_no, "negative histogram bin")
            try:
                out[(frame, key)] = Histogram.from_flat(bins, channels)
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc))
    if not out:
        raise EmptyFile(f"{path}: no rows")
    return out


def write_appearance_sidecar(path, mapping) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (frame, key) in sorted(mapping):
            hist = mapping[(frame, key)]
            bins = ",".join(_fmt(v) for v in hist.flat)
            fh.write(f"{frame},{key},{bins}\n")


# ---------------------------------------------------------------------------
# Synthetic sequences


@dataclass
class NoiseSpec:
    """Detector-noise model: per-box miss probability, expected false
    detections per frame, and Gaussian position jitter (normalized units)."""

    miss_rate: float = 0.0
    false_rate: float = 0.0
    jitter: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.miss_rate < 1.0):
            raise ValueError("miss_rate must be in [0, 1)")
        if self.false_rate < 0.0:
            raise ValueError("false_rate must be >= 0")
        if self.jitter < 0.0:
            raise ValueError("jitter must be >= 0")


@dataclass
class SynthSpec:
    n_targets: int = 10
    n_frames: int = 200
    seed: int = 0
    speed: tuple = (0.002, 0.006)
    bbox_frac: tuple = (0.04, 0.08)
    image_width: float = 1000.0
    image_height: float = 1000.0
    motion: str = "bounce"  # bounce | linear
    crossings: int = 0  # number of scripted crossing pairs
    crossing_occlusion: int = 0  # frames the crossed-over target goes undetected
    appearance: bool = True
    appearance_bins: int = 8
    appearance_noise: float = 0.02
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        noise = NoiseSpec(**raw.pop("noise", {}))
        spec = cls(noise=noise, **{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
        return spec


MARGIN = 0.06


def _bounce(pos: float, vel: float):
    if pos < MARGIN:
        return 2 * MARGIN - pos, abs(vel)
    if pos > 1 - MARGIN:
        return 2 * (1 - MARGIN) - pos, -abs(vel)
    return pos, vel


def _random_hist(rng, bins: int, alpha: float = 0.3) -> Histogram:
    return Histogram(rng.dirichlet(np.full(bins, alpha), size=3))


def _noisy_hist(rng, base: Histogram, scale: float) -> Histogram:
    noisy = base.bins + np.abs(rng.normal(0.0, scale, base.bins.shape))
    return Histogram(noisy)


@dataclass
class SynthResult:
    gt: GroundTruth
    dets_by_frame: dict  # frame -> [Detection]
    det_appearance: dict  # (frame, det index) -> Histogram
    forced_miss: set  # (frame, id) drops scripted by crossings


def synth_sequence(spec: SynthSpec) -> SynthResult:
    """Constant-velocity walkers with scripted crossings and distinct colors.

    Crossing pairs follow straight paths meeting at a scripted frame; the
    crossed-over target's detections are dropped around that frame, emulating
    the detector losing the occluded pedestrian. Free targets bounce inside
    the margins and live for the whole sequence.
    """
    rng = np.random.default_rng(spec.seed)
    n_cross_targets = 2 * spec.crossings
    if n_cross_targets > spec.n_targets:
        raise ValueError("more crossing pairs than targets")
    palettes = {
        tid: _random_hist(rng, spec.appearance_bins) for tid in range(1, spec.n_targets + 1)
    }

    # positions[tid] = {frame: (x, y)}
    positions: dict = {tid: {} for tid in range(1, spec.n_targets + 1)}
    forced_miss: set = set()

    for pair in range(spec.crossings):
        a_id, b_id = 2 * pair + 1, 2 * pair + 2
        f_cross = int(rng.integers(int(0.25 * spec.n_frames), int(0.75 * spec.n_frames)))
        point = rng.uniform(0.3, 0.7, size=2)
        ang_a = rng.uniform(0, 2 * np.pi)
        ang_b = ang_a + rng.uniform(np.pi / 3, 2 * np.pi / 3)
        for tid, ang in ((a_id, ang_a), (b_id, ang_b)):
            speed = rng.uniform(*spec.speed)
            vel = speed * np.array([np.cos(ang), np.sin(ang)])
            for frame in range(1, spec.n_frames + 1):
                p = point + vel * (frame - f_cross)
                if MARGIN <= p[0] <= 1 - MARGIN and MARGIN <= p[1] <= 1 - MARGIN:
                    positions[tid][frame] = (float(p[0]), float(p[1]))
        if spec.crossing_occlusion > 0:
            start = f_cross - spec.crossing_occlusion // 2
            for frame in range(start, start + spec.crossing_occlusion):
                forced_miss.add((frame, b_id))

    for tid in range(n_cross_targets + 1, spec.n_targets + 1):
        pos = rng.uniform(MARGIN + 0.02, 1 - MARGIN - 0.02, size=2)
        speed = rng.uniform(*spec.speed)
        ang = rng.uniform(0, 2 * np.pi)
        vel = speed * np.array([np.cos(ang), np.sin(ang)])
        for frame in range(1, spec.n_frames + 1):
            positions[tid][frame] = (float(pos[0]), float(pos[1]))
            pos = pos + vel
            if spec.motion == "bounce":
                x, vx = _bounce(pos[0], vel[0])
                y, vy = _bounce(pos[1], vel[1])
                pos = np.array([x, y])
                vel = np.array([vx, vy])

    sizes = {
        tid: (
            rng.uniform(*spec.bbox_frac) * spec.image_width,
            rng.uniform(*spec.bbox_frac) * spec.image_height,
        )
        for tid in range(1, spec.n_targets + 1)
    }

    frames: dict = {}
    appearance: dict = {}
    for frame in range(1, spec.n_frames + 1):
        boxes = []
        for tid in range(1, spec.n_targets + 1):
            if frame not in positions[tid]:
                continue
            x, y = positions[tid][frame]
            bw, bh = sizes[tid]
            box = (x * spec.image_width - bw / 2, y * spec.image_height - bh / 2, bw, bh)
            boxes.append(GTBox(id=tid, bbox=box, pos=(x, y), conf=1.0))
            if spec.appearance:
                appearance[(frame, tid)] = _noisy_hist(rng, palettes[tid], spec.appearance_noise)
        if boxes:
            frames[frame] = boxes
    gt = GroundTruth(
        frames=frames,
        appearance=appearance,
        width=spec.image_width,
        height=spec.image_height,
    )

    from . import learn  # local import: io provides data types learn builds on

    dets_by_frame, _src = learn.derive_detections(
        gt, spec.noise, np.random.default_rng(spec.seed + 1), forced_miss=forced_miss
    )
    det_appearance = {}
    for frame, dets in dets_by_frame.items():
        for idx, det in enumerate(dets):
            if det.appearance is not None:
                det_appearance[(frame, idx)] = det.appearance
    return SynthResult(
        gt=gt,
        dets_by_frame=dets_by_frame,
        det_appearance=det_appearance,
        forced_miss=forced_miss,
    )


def write_sequence_dir(directory, result: SynthResult) -> None:
    """gt.txt / det.txt plus appearance sidecars and seqinfo.ini."""
    os.makedirs(directory, exist_ok=True)
    gt = result.gt
    write_gt(os.path.join(directory, "gt.txt"), gt)
    write_detections(os.path.join(directory, "det.txt"), result.dets_by_frame)
    if gt.appearance:
        write_appearance_sidecar(os.path.join(directory, "gt_appearance.csv"), gt.appearance)
    if result.det_appearance:
        write_appearance_sidecar(
            os.path.join(directory, "det_appearance.csv"), result.det_appearance
        )
    last = max(gt.frames) if gt.frames else 0
    write_seqinfo(directory, gt.width, gt.height, last)


def sequence_paths(path):
    """Resolve a data path: a directory uses the gt/det naming convention."""
    if os.path.isdir(path):
        def pick(name):
            p = os.path.join(path, name)
            return p if os.path.exists(p) else None

        return {
            "gt": pick("gt.txt"),
            "det": pick("det.txt"),
            "gt_sidecar": pick("gt_appearance.csv"),
            "det_sidecar": pick("det_appearance.csv"),
        }
    stem = os.path.splitext(path)[0]
    sidecar = stem + "_appearance.csv"
    return {
        "gt": path,
        "det": path,
        "gt_sidecar": sidecar if os.path.exists(sidecar) else None,
        "det_sidecar": sidecar if os.path.exists(sidecar) else None,
    }


def worker_count() -> int:
    """Thread cap from DCTRACK_THREADS (>= 1); defaults to the CPU count."""
    raw = os.environ.get("DCTRACK_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)
