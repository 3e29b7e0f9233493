"""Log-frequency analysis grid shared by every stage of the pipeline.

The grid is defined by a minimum frequency, a bins-per-octave resolution and
an octave count; all feature tensors, salience maps and decoded frequencies
refer to the same bin <-> Hz mapping defined here.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

DEFAULT_SAMPLE_RATE = 22050
DEFAULT_HOP_LENGTH = 256
DEFAULT_F_MIN = 32.70
DEFAULT_BINS_PER_OCTAVE = 60
DEFAULT_N_OCTAVES = 6
DEFAULT_HARMONICS = (1, 2, 3, 4, 5)


class FrequencyRangeError(ValueError):
    """Raised when a frequency falls outside the analysis grid."""


@dataclass(frozen=True)
class HcqtParams:
    """Constants defining the harmonic constant-Q time-frequency grid.

    Attributes
    ----------
    sample_rate : int
        Analysis sample rate in Hz. Audio is resampled to this rate.
    hop_length : int
        Hop between frames, in samples at ``sample_rate``.
    f_min : float
        Center frequency of bin 0 for the first harmonic, in Hz.
    bins_per_octave : int
        Frequency bins per octave (60 -> 20 cents per bin).
    n_octaves : int
        Number of octaves covered above ``f_min``.
    harmonics : tuple of int
        Harmonic multipliers of ``f_min``, strictly increasing, first is 1.
    """

    sample_rate: int = DEFAULT_SAMPLE_RATE
    hop_length: int = DEFAULT_HOP_LENGTH
    f_min: float = DEFAULT_F_MIN
    bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE
    n_octaves: int = DEFAULT_N_OCTAVES
    harmonics: tuple = field(default=DEFAULT_HARMONICS)

    def __post_init__(self):
        object.__setattr__(self, "harmonics", tuple(int(h) for h in self.harmonics))
        if self.sample_rate <= 0 or self.hop_length <= 0:
            raise ValueError("sample_rate and hop_length must be positive")
        if self.f_min <= 0:
            raise ValueError("f_min must be positive")
        if self.bins_per_octave <= 0 or self.n_octaves <= 0:
            raise ValueError("bins_per_octave and n_octaves must be positive")
        if not self.harmonics:
            raise ValueError("harmonics must be non-empty")
        if self.harmonics[0] != 1:
            raise ValueError("first harmonic must be 1")
        if any(b <= a for a, b in zip(self.harmonics, self.harmonics[1:])):
            raise ValueError("harmonics must be strictly increasing")
        if any(h <= 0 for h in self.harmonics):
            raise ValueError("harmonics must be positive integers")
        top = self.harmonics[-1] * self.f_min * 2.0 ** self.n_octaves
        if top >= self.sample_rate / 2.0:
            raise ValueError(
                "highest analyzed frequency %.1f Hz exceeds Nyquist %.1f Hz"
                % (top, self.sample_rate / 2.0)
            )
        # the multirate analysis halves the hop once per octave
        if self.hop_length % 2 ** (self.n_octaves - 1) != 0:
            raise ValueError(
                "hop_length must be divisible by 2**(n_octaves-1) = %d"
                % 2 ** (self.n_octaves - 1)
            )

    @property
    def n_bins(self) -> int:
        return self.bins_per_octave * self.n_octaves

    @property
    def n_harmonics(self) -> int:
        return len(self.harmonics)

    @property
    def frame_period(self) -> float:
        """Seconds between consecutive frames."""
        return self.hop_length / self.sample_rate

    @property
    def bin_frequencies(self) -> np.ndarray:
        """Center frequency of every bin (first harmonic), in Hz."""
        return self.f_min * 2.0 ** (np.arange(self.n_bins) / self.bins_per_octave)

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "hop_length": self.hop_length,
            "f_min": self.f_min,
            "bins_per_octave": self.bins_per_octave,
            "n_octaves": self.n_octaves,
            "harmonics": list(self.harmonics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HcqtParams":
        return cls(
            sample_rate=int(d["sample_rate"]),
            hop_length=int(d["hop_length"]),
            f_min=float(d["f_min"]),
            bins_per_octave=int(d["bins_per_octave"]),
            n_octaves=int(d["n_octaves"]),
            harmonics=tuple(d["harmonics"]),
        )

    def params_hash(self) -> str:
        """Stable digest used to detect stale feature caches and checkpoints."""
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha1(payload.encode("utf-8")).hexdigest()


def frame_times(n_frames: int, params: HcqtParams) -> np.ndarray:
    """Time in seconds of each frame center: t * hop_length / sample_rate."""
    return np.arange(n_frames) * (params.hop_length / params.sample_rate)


def n_frames_for(n_samples: int, params: HcqtParams) -> int:
    """Frame count for an audio signal of ``n_samples`` samples."""
    if n_samples <= 0:
        raise ValueError("audio is empty")
    return n_samples // params.hop_length + 1


def bin_to_freq(bins: Union[int, np.ndarray], params: HcqtParams) -> Union[float, np.ndarray]:
    """Center frequency in Hz of grid bin(s): f_min * 2**(bin / bins_per_octave)."""
    b = np.asarray(bins)
    if np.any(b < 0) or np.any(b >= params.n_bins):
        raise IndexError("bin index out of range [0, %d)" % params.n_bins)
    out = params.f_min * 2.0 ** (b / params.bins_per_octave)
    return float(out) if np.isscalar(bins) else out


def freq_to_bin(freq: Union[float, np.ndarray], params: HcqtParams) -> Union[int, np.ndarray]:
    """Nearest grid bin for frequency value(s) in Hz.

    Raises
    ------
    FrequencyRangeError
        If a frequency rounds outside the grid, i.e. lies below
        ``f_min * 2**(-0.5/bins_per_octave)`` or at/above ``f_min * 2**n_octaves``.
        Callers that prefer skipping (e.g. target rasterization) catch this.
    """
    f = np.asarray(freq, dtype=float)
    lo = params.f_min * 2.0 ** (-0.5 / params.bins_per_octave)
    hi = params.f_min * 2.0 ** params.n_octaves
    if np.any(f < lo) or np.any(f >= hi):
        raise FrequencyRangeError(
            "frequency outside grid range [%.3f, %.3f) Hz" % (lo, hi)
        )
    b = np.round(params.bins_per_octave * np.log2(f / params.f_min)).astype(int)
    b = np.clip(b, 0, params.n_bins - 1)
    return int(b) if np.isscalar(freq) else b
