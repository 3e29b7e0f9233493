"""Salience-map decoding: per-frame peak picking plus a global threshold."""

from __future__ import annotations

import logging
from typing import List, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .annotations import MultiF0Annotation
from .grid import HcqtParams, bin_to_freq, frame_times

logger = logging.getLogger(__name__)

THRESHOLD_GRID = np.round(np.arange(0.01, 1.00, 0.01), 2)
TUNING_TOLERANCE_CENTS = 50.0


def pick_peaks(column: np.ndarray) -> np.ndarray:
    """Indices of local maxima along one salience column.

    A maximal run of equal values is a peak when both flanking values are
    strictly lower (edges count as lower); the run's lower-median index
    represents it. A plateau spanning the whole column yields no peak.
    """
    col = np.asarray(column)
    n = len(col)
    peaks = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and col[j + 1] == col[i]:
            j += 1
        left_lower = i == 0 or col[i - 1] < col[i]
        right_lower = j == n - 1 or col[j + 1] < col[i]
        if left_lower and right_lower and not (i == 0 and j == n - 1):
            peaks.append((i + j) // 2)
        i = j + 1
    return np.asarray(peaks, dtype=int)


def threshold_decode(
    salience: np.ndarray,
    params: HcqtParams = None,
    threshold: float = 0.5,
    times: np.ndarray = None,
) -> MultiF0Annotation:
    """Decode a salience map to frame-wise F0 sets.

    Per frame, peaks with value >= ``threshold`` survive and are reported at
    their bin-center frequency (no sub-bin refinement). ``times`` defaults to
    the hop grid of ``params``.
    """
    params = params or HcqtParams()
    sal = np.asarray(salience)
    if sal.ndim != 2 or sal.shape[0] != params.n_bins:
        raise ValueError("salience must be [n_bins x T], got %r" % (sal.shape,))
    n_t = sal.shape[1]
    if times is None:
        times = frame_times(n_t, params)
    freqs = params.bin_frequencies
    sets = []
    for t in range(n_t):
        bins = pick_peaks(sal[:, t])
        if len(bins):
            bins = bins[sal[bins, t] >= threshold]
        sets.append(freqs[bins] if len(bins) else np.array([]))
    return MultiF0Annotation(np.asarray(times, dtype=np.float64), sets)


def optimize_threshold(
    salience_maps: Sequence[np.ndarray],
    references: Sequence[MultiF0Annotation],
    params: HcqtParams = None,
    grid: np.ndarray = THRESHOLD_GRID,
    tolerance_cents: float = TUNING_TOLERANCE_CENTS,
) -> float:
    """Grid-search the decoding threshold maximizing mean accuracy over files.

    Accuracy is TP / (TP + FP + FN) per file at ``tolerance_cents``; the mean
    over files is unweighted and ties break toward the larger threshold.
    """
    from .metrics import align_to_grid, frame_scores

    params = params or HcqtParams()
    if len(salience_maps) == 0 or len(salience_maps) != len(references):
        raise ValueError("need one reference per salience map, at least one pair")

    # peak positions and values are threshold-independent; extract them once
    per_file = []
    for sal, ref in zip(salience_maps, references):
        sal = np.asarray(sal)
        times = frame_times(sal.shape[1], params)
        frames = []
        for t in range(sal.shape[1]):
            bins = pick_peaks(sal[:, t])
            frames.append((bins, sal[bins, t] if len(bins) else np.array([])))
        per_file.append((frames, times, align_to_grid(ref, times)))

    freqs = params.bin_frequencies
    best_thresh, best_acc = None, -1.0
    for thresh in grid:
        accs = []
        for frames, times, ref in per_file:
            sets = [
                freqs[bins[vals >= thresh]] if len(bins) else np.array([])
                for bins, vals in frames
            ]
            est = MultiF0Annotation(times, sets)
            scores = frame_scores(ref, est, tolerance_cents=tolerance_cents)
            accs.append(scores.accuracy)
        acc = float(np.mean(accs))
        if acc >= best_acc:  # >= so ties move toward larger thresholds
            best_acc, best_thresh = acc, float(thresh)
    logger.info("optimal threshold %.2f (mean accuracy %.4f)", best_thresh, best_acc)
    return best_thresh


class F0PeakDecoder(BaseEstimator, TransformerMixin):
    """Transformer from salience maps to multiple-F0 annotations."""

    def __init__(self, threshold: float = 0.5, params: HcqtParams = None):
        self.threshold = threshold
        self.params = params

    def fit(self, X=None, y=None):
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must lie in (0, 1)")
        return self

    def transform(self, X) -> Union[MultiF0Annotation, List[MultiF0Annotation]]:
        self.fit()
        params = self.params or HcqtParams()
        if isinstance(X, (list, tuple)):
            return [threshold_decode(x, params, self.threshold) for x in X]
        return threshold_decode(X, params, self.threshold)
