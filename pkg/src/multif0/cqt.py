"""Constant-Q transform on the shared log-frequency grid.

Multirate implementation: a single complex kernel bank is built for the top
octave and reused one octave down per halving of the signal, so normalized
kernel frequencies stay fixed and well below Nyquist at every stage. Frames
are centered at ``t * hop_length`` samples of the original signal, giving
``n_samples // hop_length + 1`` frames regardless of harmonic.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.signal import resample_poly

from .grid import HcqtParams, n_frames_for

# kaiser beta for the halving anti-alias filter; analyzed band sits at
# <= 0.095 * fs so the transition region near Nyquist never matters
_RESAMPLE_WINDOW = ("kaiser", 9.0)


@lru_cache(maxsize=32)
def _kernel_bank(sample_rate: int, f_min_top: float, bins_per_octave: int):
    """Complex kernels for one octave starting at ``f_min_top``, at ``sample_rate``.

    Returns (real part [B, L], -imag part [B, L]) of zero-padded, centered,
    Hann-windowed complex exponentials scaled so a unit-amplitude sinusoid at
    a bin center yields |coefficient| ~= 1.
    """
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    freqs = f_min_top * 2.0 ** (np.arange(bins_per_octave) / bins_per_octave)
    nu = freqs / sample_rate
    lengths = np.ceil(q / nu).astype(int)
    lengths += 1 - (lengths % 2)  # odd length, symmetric around the frame center
    max_len = int(lengths.max())
    real = np.zeros((bins_per_octave, max_len), dtype=np.float32)
    imag = np.zeros((bins_per_octave, max_len), dtype=np.float32)
    for i, (v, length) in enumerate(zip(nu, lengths)):
        n = np.arange(length) - (length - 1) / 2.0
        w = np.hanning(length)
        kern = w * np.exp(-2j * np.pi * v * n) * (2.0 / w.sum())
        start = (max_len - length) // 2
        real[i, start:start + length] = kern.real
        imag[i, start:start + length] = kern.imag
    return real, imag


def _octave_coefficients(x: np.ndarray, hop: int, n_frames: int, bank) -> np.ndarray:
    """Correlate ``x`` with a kernel bank at frame centers ``t * hop``."""
    real, imag = bank
    max_len = real.shape[1]
    half = max_len // 2
    pad_end = half + hop * n_frames
    xp = np.pad(x, (half, pad_end))
    idx = np.arange(n_frames)[:, None] * hop + np.arange(max_len)[None, :]
    frames = xp[idx]
    return (frames @ real.T) + 1j * (frames @ imag.T)  # [T, B]


def compute_cqt(audio: np.ndarray, params: HcqtParams, h: int = 1) -> np.ndarray:
    """Complex constant-Q transform with minimum frequency ``h * f_min``.

    Parameters
    ----------
    audio : np.ndarray
        Mono signal already at ``params.sample_rate``.
    params : HcqtParams
        Grid definition.
    h : int
        Harmonic multiplier; must be a member of ``params.harmonics``.

    Returns
    -------
    np.ndarray
        Complex matrix of shape ``[n_bins, n_frames]`` with
        ``n_frames = len(audio) // hop_length + 1``.
    """
    audio = np.asarray(audio, dtype=np.float32)
    if audio.ndim != 1:
        raise ValueError("audio must be one-dimensional")
    if h not in params.harmonics:
        raise ValueError("harmonic %r not in params.harmonics %r" % (h, params.harmonics))
    top = h * params.f_min * 2.0 ** params.n_octaves
    if top >= params.sample_rate / 2.0:
        raise ValueError(
            "top bin of harmonic %d at %.1f Hz exceeds Nyquist" % (h, top)
        )
    n_frames = n_frames_for(len(audio), params)  # raises on empty audio

    b = params.bins_per_octave
    f_min_top = h * params.f_min * 2.0 ** (params.n_octaves - 1)
    bank = _kernel_bank(params.sample_rate, f_min_top, b)

    out = np.empty((params.n_bins, n_frames), dtype=np.complex64)
    x = audio
    for octave in range(params.n_octaves - 1, -1, -1):
        hop = params.hop_length >> (params.n_octaves - 1 - octave)
        coef = _octave_coefficients(x, hop, n_frames, bank)
        out[octave * b:(octave + 1) * b, :] = coef.T
        if octave > 0:
            x = resample_poly(x, 1, 2, window=_RESAMPLE_WINDOW).astype(np.float32)
    return out
