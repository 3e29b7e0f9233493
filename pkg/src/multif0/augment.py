"""Audio augmentation: duration-preserving pitch shift and convolution reverb."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy.signal import fftconvolve, istft, resample_poly, stft

from . import audio as audio_io

PV_N_FFT = 2048
PV_HOP = PV_N_FFT // 4
PEAK_TARGET = 10.0 ** (-1.0 / 20.0)  # -1 dBFS


def _phase_vocoder(spec: np.ndarray, rate: float, hop: int, n_fft: int) -> np.ndarray:
    """Stretch STFT frames by 1/rate with accumulated-phase resynthesis."""
    n_bins, n_frames = spec.shape
    steps = np.arange(0, n_frames, rate)
    omega = 2.0 * np.pi * np.arange(n_bins) * hop / n_fft
    out = np.zeros((n_bins, len(steps)), dtype=np.complex128)
    phase_acc = np.angle(spec[:, 0])
    padded = np.pad(spec, [(0, 0), (0, 2)])
    for t, step in enumerate(steps):
        i = int(step)
        frac = step - i
        s0, s1 = padded[:, i], padded[:, i + 1]
        mag = (1.0 - frac) * np.abs(s0) + frac * np.abs(s1)
        out[:, t] = mag * np.exp(1j * phase_acc)
        dphi = np.angle(s1) - np.angle(s0) - omega
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        phase_acc += omega + dphi
    return out


def time_stretch(audio: np.ndarray, rate: float) -> np.ndarray:
    """Change duration by 1/rate without changing pitch."""
    _, _, spec = stft(audio, nperseg=PV_N_FFT, noverlap=PV_N_FFT - PV_HOP, padded=True)
    stretched = _phase_vocoder(spec, rate, PV_HOP, PV_N_FFT)
    _, out = istft(stretched, nperseg=PV_N_FFT, noverlap=PV_N_FFT - PV_HOP)
    return out.astype(np.float32)


def pitch_shift(audio: np.ndarray, semitones: float, sample_rate: int = None) -> np.ndarray:
    """Shift pitch by a (possibly fractional) semitone count, keeping duration.

    Implemented as phase-vocoder time stretch followed by polyphase
    resampling; the output is padded or trimmed to the input length.
    """
    audio = np.asarray(audio, dtype=np.float32)
    if semitones == 0:
        return audio
    ratio = 2.0 ** (semitones / 12.0)
    stretched = time_stretch(audio, 1.0 / ratio)
    frac = Fraction(1.0 / ratio).limit_denominator(10000)
    shifted = resample_poly(stretched, frac.numerator, frac.denominator)
    if len(shifted) < len(audio):
        shifted = np.pad(shifted, (0, len(audio) - len(shifted)))
    return shifted[: len(audio)].astype(np.float32)


def normalize_peak(audio: np.ndarray, target: float = PEAK_TARGET):
    """Scale down to ``target`` peak when the signal clips; report the gain."""
    peak = float(np.abs(audio).max()) if audio.size else 0.0
    if peak > 1.0:
        gain = target / peak
        return (audio * gain).astype(np.float32), gain
    return audio.astype(np.float32, copy=False), 1.0


def apply_reverb(
    audio: np.ndarray,
    ir: np.ndarray,
    sample_rate: int,
    ir_sample_rate: int = None,
):
    """Convolve with an impulse response, truncated to the dry length.

    The impulse response is resampled when its rate differs. Output peaks
    above full scale are normalized like mixes; F0 annotations of the dry
    signal remain valid for the wet one.
    """
    ir = np.asarray(ir, dtype=np.float32)
    if ir.size == 0:
        raise ValueError("impulse response is empty")
    if ir_sample_rate is not None and ir_sample_rate != sample_rate:
        ir = audio_io.resample(ir, ir_sample_rate, sample_rate)
    wet = fftconvolve(np.asarray(audio, dtype=np.float32), ir, mode="full")
    wet = wet[: len(audio)]
    out, _ = normalize_peak(wet)
    return out
