"""WAV loading/saving, mono downmix and polyphase resampling."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

_PCM_SCALE = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
}


def resample(audio: np.ndarray, sr: int, target_sr: int) -> np.ndarray:
    """Resample with a polyphase filter; no-op when rates already match."""
    if sr == target_sr:
        return audio
    g = math.gcd(int(sr), int(target_sr))
    out = resample_poly(audio, target_sr // g, sr // g)
    return out.astype(np.float32, copy=False)


def load_wav(
    path: Union[str, Path],
    target_sr: int = None,
    mono: bool = True,
) -> Tuple[np.ndarray, int]:
    """Load a WAV file as float32 in [-1, 1].

    Multichannel audio is downmixed by channel averaging. When ``target_sr``
    is given the signal is resampled to it and that rate is returned.
    """
    sr, data = wavfile.read(str(path))
    if data.size == 0:
        raise ValueError("empty audio file: %s" % path)
    if data.dtype in _PCM_SCALE:
        audio = data.astype(np.float32) / _PCM_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        audio = (data.astype(np.float32) - 128.0) / 128.0
    else:
        audio = data.astype(np.float32)
    if mono and audio.ndim > 1:
        audio = audio.mean(axis=1)
    if target_sr is not None and target_sr != sr:
        audio = resample(audio, sr, target_sr)
        sr = target_sr
    return audio.astype(np.float32, copy=False), int(sr)


def save_wav(path: Union[str, Path], audio: np.ndarray, sr: int) -> None:
    """Write float audio as 16-bit PCM, clipping to [-1, 1]."""
    clipped = np.clip(np.asarray(audio, dtype=np.float64), -1.0, 1.0)
    pcm = (clipped * 32767.0).astype(np.int16)
    wavfile.write(str(path), int(sr), pcm)
