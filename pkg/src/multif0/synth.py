"""Synthetic vocal-quartet rendering with exact ground-truth F0 tracks.

Each voice is a harmonic tone (six partials with 1/k^1.3 amplitude rolloff),
mild sinusoidal vibrato and a short attack/release envelope per note. Tracks
are emitted on the analysis hop grid and include the vibrato trajectory, so
they are the exact per-frame reference for the rendered audio.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .annotations import F0Track
from .grid import HcqtParams, frame_times

PART_NAMES = ("S", "A", "T", "B")

# comfortable quartet tessituras, Hz
PART_RANGES = {
    "S": (262.0, 700.0),
    "A": (196.0, 440.0),
    "T": (131.0, 330.0),
    "B": (87.0, 220.0),
}

N_PARTIALS = 6
PARTIAL_ROLLOFF = 1.3
VIBRATO_RATE_HZ = 5.0
VIBRATO_DEPTH_CENTS = 15.0
EDGE_RAMP_SEC = 0.03

# chord degrees (semitones above the root) cycled through SATB voicings
_PROGRESSION = ((0, 4, 7), (5, 9, 0), (7, 11, 2), (0, 4, 7), (9, 0, 4), (2, 5, 9))


@dataclass
class Note:
    """One sustained pitch: start/duration in seconds, frequency in Hz."""

    start: float
    duration: float
    f0: float

    @property
    def end(self) -> float:
        return self.start + self.duration


def _f0_trajectory(notes: Sequence[Note], n_samples: int, sample_rate: int,
                   vibrato_cents: float, vibrato_phase: float) -> np.ndarray:
    """Instantaneous F0 per sample; 0 where no note is active."""
    t = np.arange(n_samples) / sample_rate
    f0 = np.zeros(n_samples)
    last_end = -np.inf
    for note in sorted(notes, key=lambda n: n.start):
        if note.start < last_end - 1e-9:
            raise ValueError("overlapping notes within one voice at %.3f s" % note.start)
        last_end = note.end
        mask = (t >= note.start) & (t < note.end)
        f0[mask] = note.f0
    if vibrato_cents > 0:
        wobble = 2.0 ** (
            vibrato_cents / 1200.0
            * np.sin(2.0 * np.pi * VIBRATO_RATE_HZ * t + vibrato_phase)
        )
        f0 = f0 * wobble
    return f0


def render_voice(
    notes: Sequence[Note],
    duration: float,
    params: HcqtParams = None,
    rng=None,
    vibrato_cents: float = VIBRATO_DEPTH_CENTS,
) -> Tuple[np.ndarray, F0Track]:
    """Render one voice to audio and its F0 track on the hop grid."""
    params = params or HcqtParams()
    rng = rng or np.random.default_rng(0)
    sr = params.sample_rate
    n_samples = int(round(duration * sr))
    vib_phase = float(rng.uniform(0, 2 * np.pi))
    f0 = _f0_trajectory(notes, n_samples, sr, vibrato_cents, vib_phase)

    phase = 2.0 * np.pi * np.cumsum(f0) / sr
    voiced = f0 > 0
    audio = np.zeros(n_samples)
    for k in range(1, N_PARTIALS + 1):
        audio += (k ** -PARTIAL_ROLLOFF) * np.sin(k * phase)
    audio *= voiced

    # short attack/release around every voiced segment to avoid clicks
    ramp = max(1, int(EDGE_RAMP_SEC * sr))
    env = np.convolve(voiced.astype(float), np.ones(ramp) / ramp, mode="same")
    audio = (audio * env * 0.25).astype(np.float32)

    times = frame_times(n_samples // params.hop_length + 1, params)
    centers = np.minimum((times * sr).astype(int), n_samples - 1)
    track_f0 = np.where(voiced[centers], f0[centers], 0.0)
    return audio, F0Track(times, track_f0)


def synth_quartet(
    voices: Dict[str, Sequence[Note]],
    params: HcqtParams = None,
    rng=None,
    duration: float = None,
) -> Tuple[np.ndarray, List[F0Track]]:
    """Render an SATB note specification to a mixture and per-voice tracks."""
    params = params or HcqtParams()
    rng = rng or np.random.default_rng(0)
    if duration is None:
        duration = max(n.end for part in voices.values() for n in part)
    stems, tracks = render_quartet_stems(voices, params, rng, duration)
    mix = np.sum([stems[p] for p in stems], axis=0)
    peak = np.abs(mix).max()
    if peak > 1.0:
        mix = mix * (0.9 / peak)
    return mix.astype(np.float32), tracks


def render_quartet_stems(
    voices: Dict[str, Sequence[Note]],
    params: HcqtParams,
    rng,
    duration: float,
) -> Tuple[Dict[str, np.ndarray], List[F0Track]]:
    stems, tracks = {}, []
    for part, notes in voices.items():
        audio, track = render_voice(notes, duration, params, rng)
        stems[part] = audio
        tracks.append(track)
    return stems, tracks


def random_quartet(
    rng,
    duration: float = 8.0,
    rest_probability: float = 0.1,
) -> Dict[str, List[Note]]:
    """Random SATB chord progression within the part tessituras."""
    root_hz = float(rng.uniform(98.0, 131.0))  # roughly G2..C3
    voices = {p: [] for p in PART_NAMES}
    t = 0.2  # lead-in silence so models see empty-target regions
    end = duration - 0.1
    while t < end:
        chord = _PROGRESSION[rng.integers(0, len(_PROGRESSION))]
        dur = float(rng.uniform(0.6, 1.4))
        dur = min(dur, end - t)
        if dur < 0.3:
            break
        bass = root_hz * 2.0 ** (chord[0] / 12.0)
        degrees = {
            "B": bass,
            "T": bass * 2.0 ** (chord[1] / 12.0),
            "A": bass * 2.0 ** ((chord[2] + 12) / 12.0),
            "S": bass * 2.0 ** ((chord[0] + 24) / 12.0),
        }
        for part, f in degrees.items():
            lo, hi = PART_RANGES[part]
            while f < lo:
                f *= 2.0
            while f > hi:
                f /= 2.0
            if rng.random() > rest_probability:
                voices[part].append(Note(t, dur * 0.95, f))
        t += dur
    return voices


def synth_impulse_response(rng, sample_rate: int, duration: float = 0.6,
                           rt60: float = 0.45) -> np.ndarray:
    """Exponentially decaying noise tail approximating a hall response."""
    n = int(duration * sample_rate)
    t = np.arange(n) / sample_rate
    tail = rng.standard_normal(n) * np.exp(-6.91 * t / rt60)
    ir = np.zeros(n, dtype=np.float32)
    ir[0] = 1.0
    ir[1:] = 0.25 * tail[1:]
    return ir / np.abs(ir).max()


def quartet_to_json(voices: Dict[str, Sequence[Note]]) -> str:
    return json.dumps(
        {
            part: [{"start": n.start, "duration": n.duration, "f0": n.f0} for n in notes]
            for part, notes in voices.items()
        },
        indent=2,
    )


def quartet_from_json(text_or_path: Union[str, Path]) -> Dict[str, List[Note]]:
    if isinstance(text_or_path, Path) or (
        isinstance(text_or_path, str) and "\n" not in text_or_path
        and Path(text_or_path).exists()
    ):
        text = Path(text_or_path).read_text()
    else:
        text = text_or_path
    raw = json.loads(text)
    return {
        part: [Note(float(n["start"]), float(n["duration"]), float(n["f0"])) for n in notes]
        for part, notes in raw.items()
    }
