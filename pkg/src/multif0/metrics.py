"""Frame-wise multiple-F0 scoring: precision, recall, F-score, accuracy.

Per frame, estimates are matched one-to-one to reference values within a
pitch tolerance in cents via maximum bipartite matching; TP/FP/FN counts
accumulate over frames before the rates are formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .annotations import MultiF0Annotation

DEFAULT_TOLERANCE_CENTS = 50.0


@dataclass
class EvalScores:
    """Scores for one (reference, estimate) pair at one tolerance."""

    precision: float
    recall: float
    f_score: float
    accuracy: float
    tolerance_cents: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tolerance_cents: float) -> "EvalScores":
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision = 1.0 if fn == 0 else 0.0
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall = 1.0 if fp == 0 else 0.0
        f_score = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        accuracy = tp / (tp + fp + fn) if tp + fp + fn > 0 else 1.0
        return cls(precision, recall, f_score, accuracy, tolerance_cents, tp, fp, fn)


def cent_distance(f_ref, f_est):
    """Signed pitch distance 1200 * log2(f_est / f_ref), in cents."""
    return 1200.0 * np.log2(np.asarray(f_est, dtype=float) / np.asarray(f_ref, dtype=float))


def _max_matching(adjacency: List[List[int]], n_right: int) -> int:
    """Maximum bipartite matching size (augmenting paths)."""
    match_right = [-1] * n_right

    def try_assign(u: int, seen: List[bool]) -> bool:
        for v in adjacency[u]:
            if not seen[v]:
                seen[v] = True
                if match_right[v] == -1 or try_assign(match_right[v], seen):
                    match_right[v] = u
                    return True
        return False

    size = 0
    for u in range(len(adjacency)):
        if try_assign(u, [False] * n_right):
            size += 1
    return size


def match_frame(ref: np.ndarray, est: np.ndarray, tolerance_cents: float) -> int:
    """Number of one-to-one (reference, estimate) pairs within tolerance."""
    if len(ref) == 0 or len(est) == 0:
        return 0
    dist = np.abs(cent_distance(ref[:, None], est[None, :]))
    within = dist <= tolerance_cents
    adjacency = [list(np.nonzero(row)[0]) for row in within]
    return _max_matching(adjacency, len(est))


def align_to_grid(ann: MultiF0Annotation, grid_times: np.ndarray) -> MultiF0Annotation:
    """Resample an annotation to a uniform grid by nearest neighbor.

    Each grid frame takes the nearest source frame within half a grid step;
    grid frames with no source frame inside the window are empty.
    """
    grid_times = np.asarray(grid_times, dtype=np.float64)
    if len(grid_times) > 1:
        steps = np.diff(grid_times)
        if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-9):
            raise ValueError("grid_times must be uniform")
        half_step = 0.5 * float(steps[0])
    else:
        half_step = np.inf
    src = ann.frame_times
    idx = np.searchsorted(src, grid_times)
    idx_prev = np.clip(idx - 1, 0, len(src) - 1)
    idx_next = np.clip(idx, 0, len(src) - 1)
    d_prev = np.abs(grid_times - src[idx_prev])
    d_next = np.abs(src[idx_next] - grid_times)
    nearest = np.where(d_prev <= d_next, idx_prev, idx_next)
    dist = np.minimum(d_prev, d_next)
    sets = [
        ann.f0_sets[j] if d <= half_step else np.array([])
        for j, d in zip(nearest, dist)
    ]
    return MultiF0Annotation(grid_times, sets)


def frame_scores(
    ref: MultiF0Annotation,
    est: MultiF0Annotation,
    tolerance_cents: float = DEFAULT_TOLERANCE_CENTS,
) -> EvalScores:
    """Score an estimate against a reference sharing its time grid."""
    if ref.n_frames != est.n_frames or not np.allclose(
        ref.frame_times, est.frame_times, rtol=1e-6, atol=1e-6
    ):
        raise ValueError("reference and estimate are on different time grids; "
                         "use align_to_grid first")
    tp = fp = fn = 0
    for r, e in zip(ref.f0_sets, est.f0_sets):
        m = match_frame(r, e, tolerance_cents)
        tp += m
        fp += len(e) - m
        fn += len(r) - m
    return EvalScores.from_counts(tp, fp, fn, tolerance_cents)


def aggregate(per_file: Sequence[EvalScores]) -> Dict[str, Tuple[float, float]]:
    """Unweighted mean and standard deviation of each metric across files."""
    if not per_file:
        raise ValueError("no scores to aggregate")
    out = {}
    for name in ("precision", "recall", "f_score", "accuracy"):
        vals = np.array([getattr(s, name) for s in per_file], dtype=float)
        out[name] = (float(vals.mean()), float(vals.std()))
    return out
