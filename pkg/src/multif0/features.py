"""Harmonic constant-Q magnitude and phase-differential input features."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import audio as audio_io
from .cqt import compute_cqt
from .grid import (
    DEFAULT_BINS_PER_OCTAVE,
    DEFAULT_F_MIN,
    DEFAULT_HARMONICS,
    DEFAULT_HOP_LENGTH,
    DEFAULT_N_OCTAVES,
    DEFAULT_SAMPLE_RATE,
    HcqtParams,
    frame_times,
)

logger = logging.getLogger(__name__)

MAGNITUDE_FLOOR_DB = -80.0
FEATURE_FORMAT_VERSION = 1


@dataclass
class HcqtFeatures:
    """Stacked per-harmonic CQT features for one recording.

    ``magnitude`` is log-compressed amplitude rescaled to [0, 1] relative to
    the recording's maximum; ``phase_diff`` holds per-bin unwrapped phase
    increments in radians per frame (None when phase was not extracted).
    Both tensors are indexed ``[harmonic, frequency, time]``.
    """

    magnitude: np.ndarray
    phase_diff: Optional[np.ndarray]
    frame_times: np.ndarray
    params: HcqtParams = field(default_factory=HcqtParams)

    def __post_init__(self):
        h, f, t = self.magnitude.shape
        if h != self.params.n_harmonics or f != self.params.n_bins:
            raise ValueError(
                "magnitude shape %r does not match params [%d x %d x T]"
                % (self.magnitude.shape, self.params.n_harmonics, self.params.n_bins)
            )
        if self.phase_diff is not None and self.phase_diff.shape != self.magnitude.shape:
            raise ValueError("magnitude and phase_diff shapes differ")
        if len(self.frame_times) != t:
            raise ValueError("frame_times length does not match time axis")

    @property
    def n_frames(self) -> int:
        return self.magnitude.shape[2]


def phase_differentials(complex_tf: np.ndarray) -> np.ndarray:
    """First-order time difference of the unwrapped per-bin phase.

    The first column duplicates the difference between frames 1 and 0 so the
    output keeps the input's frame count.
    """
    phi = np.unwrap(np.angle(complex_tf), axis=1)
    if phi.shape[1] < 2:
        return np.zeros_like(phi, dtype=np.float32)
    d = np.diff(phi, axis=1)
    return np.concatenate([d[:, :1], d], axis=1).astype(np.float32)


def scale_magnitude(amplitude: np.ndarray, floor_db: float = MAGNITUDE_FLOOR_DB) -> np.ndarray:
    """Compress amplitudes to dB relative to the recording max and rescale to [0, 1].

    Values at the recording maximum map to 1, values ``floor_db`` below it
    (or lower) map to 0. All-zero input stays all-zero.
    """
    amplitude = np.asarray(amplitude)
    peak = amplitude.max()
    if peak <= 0:
        return np.zeros_like(amplitude, dtype=np.float32)
    db = 20.0 * np.log10(np.maximum(amplitude, 1e-30) / peak)
    out = 1.0 - np.minimum(db, 0.0) / floor_db
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def compute_hcqt(
    audio: np.ndarray,
    params: HcqtParams = None,
    include_phase: bool = True,
) -> HcqtFeatures:
    """Compute stacked per-harmonic CQT magnitude and phase differentials."""
    params = params or HcqtParams()
    mags = []
    phases = [] if include_phase else None
    for h in params.harmonics:
        c = compute_cqt(audio, params, h)
        mags.append(np.abs(c))
        if include_phase:
            phases.append(phase_differentials(c))
    magnitude = scale_magnitude(np.stack(mags))
    phase = np.stack(phases) if include_phase else None
    t = magnitude.shape[2]
    return HcqtFeatures(magnitude, phase, frame_times(t, params), params)


def instantaneous_frequency(phase_diff: np.ndarray, params: HcqtParams) -> np.ndarray:
    """Per-bin instantaneous-frequency estimate in Hz from phase differentials.

    The phase increment expected for a stationary sinusoid at each bin center
    is removed modulo 2*pi, leaving the deviation from the bin; the estimate
    is exact for tones within half the frame rate of their bin center. Input
    is a single harmonic's ``[n_bins, n_frames]`` differential matrix.
    """
    dt = params.frame_period
    f_bins = params.bin_frequencies[:, None]
    expected = 2.0 * np.pi * f_bins * dt
    deviation = phase_diff - expected
    deviation = np.mod(deviation + np.pi, 2.0 * np.pi) - np.pi
    return f_bins + deviation / (2.0 * np.pi * dt)


class HcqtFeatureExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer from audio to harmonic CQT features.

    Accepts a mono sample array at the configured sample rate, a WAV path
    (loaded, downmixed and resampled as needed), or a list of either.
    ``fit`` is a no-op included for pipeline compatibility.
    """

    def __init__(
        self,
        sample_rate: int = DEFAULT_SAMPLE_RATE,
        hop_length: int = DEFAULT_HOP_LENGTH,
        f_min: float = DEFAULT_F_MIN,
        bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE,
        n_octaves: int = DEFAULT_N_OCTAVES,
        harmonics: tuple = DEFAULT_HARMONICS,
        include_phase: bool = True,
    ):
        self.sample_rate = sample_rate
        self.hop_length = hop_length
        self.f_min = f_min
        self.bins_per_octave = bins_per_octave
        self.n_octaves = n_octaves
        self.harmonics = harmonics
        self.include_phase = include_phase

    @property
    def params(self) -> HcqtParams:
        return HcqtParams(
            sample_rate=self.sample_rate,
            hop_length=self.hop_length,
            f_min=self.f_min,
            bins_per_octave=self.bins_per_octave,
            n_octaves=self.n_octaves,
            harmonics=tuple(self.harmonics),
        )

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> Union[HcqtFeatures, List[HcqtFeatures]]:
        if isinstance(X, (list, tuple)):
            return [self._transform_one(x) for x in X]
        return self._transform_one(X)

    def _transform_one(self, x) -> HcqtFeatures:
        if isinstance(x, (str, Path)):
            samples, _ = audio_io.load_wav(x, target_sr=self.sample_rate)
        else:
            samples = np.asarray(x, dtype=np.float32)
        return compute_hcqt(samples, self.params, include_phase=self.include_phase)


def save_features(path: Union[str, Path], features: HcqtFeatures) -> None:
    """Write a feature cache file (.npz container, versioned, params-hashed)."""
    path = Path(path)
    arrays = {
        "format_version": np.int64(FEATURE_FORMAT_VERSION),
        "magnitude": features.magnitude.astype(np.float32),
        "frame_times": features.frame_times.astype(np.float64),
        "params_json": np.bytes_(json.dumps(features.params.to_dict()).encode()),
        "params_hash": np.bytes_(features.params.params_hash().encode()),
        "has_phase": np.bool_(features.phase_diff is not None),
    }
    if features.phase_diff is not None:
        arrays["phase_diff"] = features.phase_diff.astype(np.float32)
    np.savez(path, **arrays)


def load_features(
    path: Union[str, Path],
    expected_params: HcqtParams = None,
) -> HcqtFeatures:
    """Load a feature cache file, verifying version and parameter hash."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != FEATURE_FORMAT_VERSION:
            raise ValueError(
                "feature cache %s has format version %d, expected %d"
                % (path, version, FEATURE_FORMAT_VERSION)
            )
        params = HcqtParams.from_dict(json.loads(bytes(data["params_json"]).decode()))
        stored_hash = bytes(data["params_hash"]).decode()
        if stored_hash != params.params_hash():
            raise ValueError("feature cache %s is corrupt (hash mismatch)" % path)
        if expected_params is not None and stored_hash != expected_params.params_hash():
            raise ValueError(
                "stale feature cache %s: parameters differ from requested grid" % path
            )
        phase = data["phase_diff"] if bool(data["has_phase"]) else None
        return HcqtFeatures(data["magnitude"], phase, data["frame_times"], params)
