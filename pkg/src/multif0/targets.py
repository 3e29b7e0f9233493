"""Rasterize multiple-F0 annotations into blurred salience training targets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .annotations import MultiF0Annotation
from .grid import FrequencyRangeError, HcqtParams, freq_to_bin

logger = logging.getLogger(__name__)

# Gaussian cross-section with sigma = 1 bin, truncated to +/-2 bins so the
# activation reaches zero within half a semitone at 20 cents per bin; the
# annotated bin keeps value exactly 1.
KERNEL_RADIUS_BINS = 2
_KERNEL = np.exp(-0.5 * np.arange(-KERNEL_RADIUS_BINS, KERNEL_RADIUS_BINS + 1) ** 2)


@dataclass
class SalienceTarget:
    """Training target: per-bin activation in [0, 1] on the analysis grid."""

    grid: np.ndarray
    params: HcqtParams = field(default_factory=HcqtParams)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float32)
        if self.grid.ndim != 2 or self.grid.shape[0] != self.params.n_bins:
            raise ValueError(
                "target grid must be [n_bins x T], got %r" % (self.grid.shape,)
            )

    @property
    def n_frames(self) -> int:
        return self.grid.shape[1]


def annotation_to_target(ann: MultiF0Annotation, params: HcqtParams = None) -> SalienceTarget:
    """Place each annotated F0 at its nearest bin with value 1 and blur in frequency.

    Overlapping activations combine by per-bin maximum; F0 values outside the
    grid are skipped (counted and logged).
    """
    params = params or HcqtParams()
    n_bins = params.n_bins
    out = np.zeros((n_bins, ann.n_frames), dtype=np.float32)
    skipped = 0
    for t, f0s in enumerate(ann.f0_sets):
        for f in f0s:
            try:
                b = freq_to_bin(float(f), params)
            except FrequencyRangeError:
                skipped += 1
                continue
            lo = max(0, b - KERNEL_RADIUS_BINS)
            hi = min(n_bins, b + KERNEL_RADIUS_BINS + 1)
            k = _KERNEL[lo - (b - KERNEL_RADIUS_BINS):hi - (b - KERNEL_RADIUS_BINS)]
            np.maximum(out[lo:hi, t], k, out=out[lo:hi, t])
    if skipped:
        logger.warning("skipped %d annotated F0 values outside the analysis grid", skipped)
    return SalienceTarget(out, params)


def target_to_annotation(
    target: SalienceTarget,
    threshold: float = 0.5,
) -> MultiF0Annotation:
    """Decode a rasterized target back to an annotation (roundtrip oracle).

    Delegates to the production peak-picking decoder so rasterize -> decode
    can be asserted in one call.
    """
    from .decoder import threshold_decode

    return threshold_decode(target.grid, target.params, threshold=threshold)
