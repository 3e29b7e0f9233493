import numpy as np
import pytest

from multif0 import HcqtParams


@pytest.fixture(scope="session")
def params():
    return HcqtParams()


@pytest.fixture(scope="session")
def tone():
    """Factory for mono test tones at the analysis rate."""

    def make(freq_hz, duration=2.0, sr=22050, amplitude=0.5):
        t = np.arange(int(duration * sr)) / sr
        return (amplitude * np.sin(2 * np.pi * freq_hz * t)).astype(np.float32)

    return make


@pytest.fixture(scope="session")
def quartet_clip(params):
    """One short synthetic quartet: (mix audio, per-voice tracks, annotation)."""
    from multif0.annotations import merge_tracks
    from multif0.grid import frame_times, n_frames_for
    from multif0.synth import random_quartet, synth_quartet

    rng = np.random.default_rng(7)
    voices = random_quartet(rng, duration=6.0)
    mix, tracks = synth_quartet(voices, params, rng, duration=6.0)
    grid = frame_times(n_frames_for(len(mix), params), params)
    ann = merge_tracks(tracks, grid)
    return mix, tracks, ann
