"""Multiple-F0 estimation for a cappella vocal ensembles.

Harmonic constant-Q magnitude and phase-differential features feed
convolutional salience networks whose output maps are peak-picked and
thresholded into frame-wise F0 sets, scored with frame-level precision,
recall and F-score at configurable pitch tolerances.
"""

from .annotations import F0Track, MultiF0Annotation, load_multif0, merge_tracks, parse_f0_track, save_multif0
from .decoder import F0PeakDecoder, optimize_threshold, pick_peaks, threshold_decode
from .features import (
    HcqtFeatureExtractor,
    HcqtFeatures,
    compute_hcqt,
    instantaneous_frequency,
    load_features,
    phase_differentials,
    save_features,
)
from .grid import FrequencyRangeError, HcqtParams, bin_to_freq, frame_times, freq_to_bin
from .metrics import EvalScores, aggregate, align_to_grid, frame_scores
from .model import SalienceEstimator, TrainConfig, bce_loss
from .networks import ARCHITECTURES, SalienceNetwork, build_model
from .targets import SalienceTarget, annotation_to_target, target_to_annotation

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES",
    "EvalScores",
    "F0PeakDecoder",
    "F0Track",
    "FrequencyRangeError",
    "HcqtFeatureExtractor",
    "HcqtFeatures",
    "HcqtParams",
    "MultiF0Annotation",
    "SalienceEstimator",
    "SalienceNetwork",
    "SalienceTarget",
    "TrainConfig",
    "aggregate",
    "align_to_grid",
    "annotation_to_target",
    "bce_loss",
    "bin_to_freq",
    "build_model",
    "compute_hcqt",
    "frame_scores",
    "frame_times",
    "freq_to_bin",
    "instantaneous_frequency",
    "load_features",
    "load_multif0",
    "merge_tracks",
    "optimize_threshold",
    "parse_f0_track",
    "phase_differentials",
    "pick_peaks",
    "save_features",
    "save_multif0",
    "target_to_annotation",
    "threshold_decode",
]
