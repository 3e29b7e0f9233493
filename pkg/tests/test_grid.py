import numpy as np
import pytest

from multif0 import FrequencyRangeError, HcqtParams, bin_to_freq, freq_to_bin
from multif0.grid import frame_times, n_frames_for


def test_defaults(params):
    assert params.n_bins == 360
    assert params.n_harmonics == 5
    assert params.harmonics == (1, 2, 3, 4, 5)


def test_bin_to_freq_golden(params):
    assert bin_to_freq(0, params) == pytest.approx(32.70, abs=1e-9)
    assert bin_to_freq(60, params) == pytest.approx(65.40, abs=1e-9)
    assert freq_to_bin(440.0, params) == 225


def test_roundtrip_exact(params):
    bins = np.arange(params.n_bins)
    freqs = bin_to_freq(bins, params)
    assert np.array_equal(freq_to_bin(freqs, params), bins)


def test_adjacent_bins_20_cents(params):
    freqs = params.bin_frequencies
    cents = 1200.0 * np.log2(freqs[1:] / freqs[:-1])
    assert np.all(np.abs(cents - 20.0) < 1e-9)


def test_out_of_range_frequency(params):
    with pytest.raises(FrequencyRangeError):
        freq_to_bin(10.0, params)
    with pytest.raises(FrequencyRangeError):
        freq_to_bin(32.7 * 2 ** 6, params)  # first bin above the top octave
    with pytest.raises(IndexError):
        bin_to_freq(params.n_bins, params)


def test_param_invariants():
    with pytest.raises(ValueError):
        HcqtParams(harmonics=(2, 3))  # must start at 1
    with pytest.raises(ValueError):
        HcqtParams(harmonics=(1, 3, 2))  # strictly increasing
    with pytest.raises(ValueError):
        HcqtParams(harmonics=(1, 2, 3, 4, 5, 6, 7, 8))  # 8*32.7*64 > 11025
    with pytest.raises(ValueError):
        HcqtParams(sample_rate=0)


def test_frame_grid(params):
    times = frame_times(5, params)
    assert np.allclose(times, np.arange(5) * 256 / 22050)
    assert n_frames_for(220500, params) == 862
    with pytest.raises(ValueError):
        n_frames_for(0, params)


def test_params_hash_changes():
    a = HcqtParams()
    b = HcqtParams(hop_length=128)
    assert a.params_hash() != b.params_hash()
    assert a.params_hash() == HcqtParams().params_hash()
    assert HcqtParams.from_dict(a.to_dict()) == a
