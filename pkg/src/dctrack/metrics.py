"""CLEAR MOT scoring, trajectory-based measures, and track-length curves.

Per-frame correspondences keep the previous frame's pairing whenever it is
still valid at the IoU threshold and complete the rest with a Hungarian pass
maximizing overlap. An identity switch is counted when a ground-truth
identity's correspondence changes relative to its last known pairing (gaps
included), fragmentations when coverage of an identity is interrupted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyGT
from .io import GroundTruth

_BIG = 1e9


def iou(a, b) -> float:
    """Intersection over union of two (left, top, width, height) boxes."""
    ax1, ay1, aw, ah = a
    bx1, by1, bw, bh = b
    ix1 = max(ax1, bx1)
    iy1 = max(ay1, by1)
    ix2 = min(ax1 + aw, bx1 + bw)
    iy2 = min(ay1 + ah, by1 + bh)
    iw = max(0.0, ix2 - ix1)
    ih = max(0.0, iy2 - iy1)
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


@dataclass
class MotSummary:
    mota: float
    motp: float
    fp: int
    fn: int
    ids: int
    frg: int
    mt: int
    ml: int
    gt_count: int
    n_gt_boxes: int
    n_matches: int


def _frame_matches(gt: GroundTruth, hyp: GroundTruth, thresh: float):
    """Yields (frame, matches as {gid: (hid, iou)}, unmatched gt, unmatched hyp)."""
    frames = sorted(set(gt.frames) | set(hyp.frames))
    prev: dict = {}  # previous frame's gid -> hid
    for frame in frames:
        gt_boxes = {b.id: b.bbox for b in gt.frames.get(frame, [])}
        hyp_boxes = {b.id: b.bbox for b in hyp.frames.get(frame, [])}
        matches: dict = {}
        taken = set()
        # carry over still-valid correspondences
        for gid, hid in prev.items():
            if gid in gt_boxes and hid in hyp_boxes:
                ov = iou(gt_boxes[gid], hyp_boxes[hid])
                if ov >= thresh:
                    matches[gid] = (hid, ov)
                    taken.add(hid)
        rest_g = [g for g in sorted(gt_boxes) if g not in matches]
        rest_h = [h for h in sorted(hyp_boxes) if h not in taken]
        if rest_g and rest_h:
            cost = np.full((len(rest_g), len(rest_h)), _BIG)
            for i, gid in enumerate(rest_g):
                for j, hid in enumerate(rest_h):
                    ov = iou(gt_boxes[gid], hyp_boxes[hid])
                    if ov >= thresh:
                        cost[i, j] = 1.0 - ov
            ri, ci = linear_sum_assignment(cost)
            for i, j in zip(ri, ci):
                if cost[i, j] < _BIG:
                    gid, hid = rest_g[i], rest_h[j]
                    matches[gid] = (hid, 1.0 - cost[i, j])
        unmatched_gt = [g for g in gt_boxes if g not in matches]
        unmatched_hyp = [h for h in hyp_boxes if h not in {m[0] for m in matches.values()}]
        prev = {gid: hid for gid, (hid, _) in matches.items()}
        yield frame, matches, unmatched_gt, unmatched_hyp


def clear_mot(gt: GroundTruth, hyp: GroundTruth, match_thresh: float = 0.5) -> MotSummary:
    """Standard CLEAR MOT plus MT/ML (80%/20% coverage) and fragmentations."""
    if gt.total_boxes() == 0:
        raise EmptyGT("ground truth has no boxes")
    if not (0.0 < match_thresh <= 1.0):
        raise ValueError("match threshold must be in (0, 1]")
    fp = fn = ids = 0
    iou_sum = 0.0
    n_matches = 0
    last_hyp: dict = {}  # persists across gaps, for identity switches
    presence: dict = {}
    covered: dict = {}
    frg: dict = {}
    was_matched: dict = {}
    for frame, matches, unmatched_gt, unmatched_hyp in _frame_matches(gt, hyp, match_thresh):
        for b in gt.frames.get(frame, []):
            presence[b.id] = presence.get(b.id, 0) + 1
        fn += len(unmatched_gt)
        fp += len(unmatched_hyp)
        for gid, (hid, ov) in matches.items():
            if gid in last_hyp and last_hyp[gid] != hid:
                ids += 1
            last_hyp[gid] = hid
            covered[gid] = covered.get(gid, 0) + 1
            iou_sum += ov
            n_matches += 1
        for b in gt.frames.get(frame, []):
            gid = b.id
            matched_now = gid in matches
            if matched_now and gid in was_matched and not was_matched[gid]:
                frg[gid] = frg.get(gid, 0) + 1
            was_matched[gid] = matched_now
    total_gt = gt.total_boxes()
    mota = 1.0 - (fn + fp + ids) / total_gt
    motp = iou_sum / n_matches if n_matches else 0.0
    mt = ml = 0
    for gid, present in presence.items():
        ratio = covered.get(gid, 0) / present
        if ratio >= 0.8:
            mt += 1
        elif ratio < 0.2:
            ml += 1
    return MotSummary(
        mota=mota,
        motp=motp,
        fp=fp,
        fn=fn,
        ids=ids,
        frg=sum(frg.values()),
        mt=mt,
        ml=ml,
        gt_count=len(presence),
        n_gt_boxes=total_gt,
        n_matches=n_matches,
    )


def tl_curve(gt: GroundTruth, hyp: GroundTruth, match_thresh: float = 0.5):
    """Correctly tracked trajectory lengths, descending, plus normalized AUC.

    Per ground-truth identity: the longest run of contiguous frames matched
    to one and the same hypothesis id. AUC normalizes by the total
    ground-truth trajectory length, so perfect tracking scores 1.
    """
    if gt.total_boxes() == 0:
        raise EmptyGT("ground truth has no boxes")
    match_of: dict = {}  # (frame, gid) -> hid
    for frame, matches, _, _ in _frame_matches(gt, hyp, match_thresh):
        for gid, (hid, _) in matches.items():
            match_of[(frame, gid)] = hid
    best_run: dict = {}
    gt_len: dict = {}
    run_len: dict = {}
    run_hyp: dict = {}
    last_seen: dict = {}
    for frame in sorted(gt.frames):
        for b in gt.frames[frame]:
            gid = b.id
            gt_len[gid] = gt_len.get(gid, 0) + 1
            hid = match_of.get((frame, gid))
            contiguous = last_seen.get(gid) == frame - 1
            if hid is not None and contiguous and run_hyp.get(gid) == hid:
                run_len[gid] += 1
            elif hid is not None:
                run_len[gid] = 1
                run_hyp[gid] = hid
            else:
                run_len[gid] = 0
                run_hyp[gid] = None
            best_run[gid] = max(best_run.get(gid, 0), run_len[gid])
            last_seen[gid] = frame
    lengths = np.array(sorted(best_run.values(), reverse=True), dtype=float)
    auc = float(lengths.sum() / sum(gt_len.values()))
    return lengths, auc


_COLUMNS = ("MOTA", "MOTP", "MT", "ML", "FP", "FN", "IDS", "FRG")


def _row_values(summary: MotSummary):
    return (
        f"{100 * summary.mota:.1f}",
        f"{100 * summary.motp:.1f}",
        str(summary.mt),
        str(summary.ml),
        str(summary.fp),
        str(summary.fn),
        str(summary.ids),
        str(summary.frg),
    )


def render_table(rows) -> str:
    """Plain-text results table; rows are (name, MotSummary) pairs."""
    header = ("sequence",) + _COLUMNS
    body = [(name,) + _row_values(s) for name, s in rows]
    widths = [max(len(r[c]) for r in [header] + body) for c in range(len(header))]
    lines = []
    for r in [header] + body:
        lines.append("  ".join(val.ljust(w) for val, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def write_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sequence," + ",".join(_COLUMNS) + "\n")
        for name, s in rows:
            fh.write(f"{name}," + ",".join(_row_values(s)) + "\n")
