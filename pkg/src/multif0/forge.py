"""Corpus construction: quartet mixtures from stems, augmentation, splits.

Stem layout on disk: ``<dataset>/<song_id>/<part>_<singer>.wav`` with a
sibling ``.csv`` F0 track per stem. The manifest is a tab-separated file
with header ``audio_path annotation_path song_id shift reverb split gain``,
one line per rendered mixture.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import audio as audio_io
from .annotations import F0Track, merge_tracks, parse_f0_track, save_multif0, write_f0_track
from .augment import apply_reverb, normalize_peak, pitch_shift
from .grid import HcqtParams, frame_times, n_frames_for
from .synth import PART_NAMES, random_quartet, render_quartet_stems, synth_impulse_response

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "validation", "test")
DEFAULT_RATIOS = (0.75, 0.10, 0.15)
MANIFEST_FIELDS = ("audio_path", "annotation_path", "song_id", "shift", "reverb", "split", "gain")


@dataclass
class StemEntry:
    audio_path: Path
    f0_path: Path
    singer: str


@dataclass
class StemSet:
    """All stems of one song, grouped by part."""

    song_id: str
    parts: Dict[str, List[StemEntry]]
    take_id: Optional[str] = None


@dataclass
class MixtureRecipe:
    """One singer per part, plus augmentation tags."""

    song_id: str
    stems: Dict[str, StemEntry]
    pitch_shift: int = 0
    reverb: Optional[str] = None

    def __post_init__(self):
        if abs(self.pitch_shift) > 2:
            raise ValueError("pitch shift must lie in [-2, +2] semitones")


@dataclass
class ManifestEntry:
    audio_path: str
    annotation_path: str
    song_id: str
    shift: int
    reverb: str
    split: str
    gain: float = 1.0


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry] = field(default_factory=list)

    def subset(self, split: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def song_ids(self, split: str = None) -> set:
        pool = self.entries if split is None else self.subset(split)
        return {e.song_id for e in pool}


def scan_stems(root: Union[str, Path], part_names: Sequence[str] = PART_NAMES) -> List[StemSet]:
    """Discover per-song stems under ``root`` (see module docstring layout)."""
    root = Path(root)
    sets = []
    for song_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        parts: Dict[str, List[StemEntry]] = {}
        for wav in sorted(song_dir.glob("*.wav")):
            name = wav.stem
            if "_" not in name:
                continue
            part, singer = name.split("_", 1)
            if part not in part_names:
                raise ValueError(
                    "unknown part %r in %s (configured parts: %s)" % (part, wav, list(part_names))
                )
            csv = wav.with_suffix(".csv")
            if not csv.exists():
                raise FileNotFoundError("stem %s has no matching F0 track %s" % (wav, csv))
            parts.setdefault(part, []).append(StemEntry(wav, csv, singer))
        if parts:
            sets.append(StemSet(song_dir.name, parts))
    return sets


def enumerate_mixtures(stems: StemSet, part_names: Sequence[str] = PART_NAMES) -> List[MixtureRecipe]:
    """All one-singer-per-part combinations; count is the product of part sizes."""
    for part in part_names:
        if not stems.parts.get(part):
            raise ValueError("song %r has no stems for part %r" % (stems.song_id, part))
    pools = [stems.parts[p] for p in part_names]
    recipes = []
    for combo in itertools.product(*pools):
        recipes.append(MixtureRecipe(stems.song_id, dict(zip(part_names, combo))))
    return recipes


def mix_stems(
    audios: Sequence[np.ndarray],
    sample_rates: Union[int, Sequence[int], None] = None,
    gains: Sequence[float] = None,
) -> Tuple[np.ndarray, float]:
    """Sum stems (zero-padded to the longest) and normalize only when clipping.

    Returns the mix and the normalization gain that was applied (1.0 when the
    plain sum stayed below full scale).
    """
    if sample_rates is not None and not np.isscalar(sample_rates):
        if len(set(int(s) for s in sample_rates)) > 1:
            raise ValueError("stems have mismatched sample rates: %r" % (sample_rates,))
    if gains is None:
        gains = [1.0] * len(audios)
    length = max(len(a) for a in audios)
    mix = np.zeros(length, dtype=np.float64)
    for a, g in zip(audios, gains):
        mix[: len(a)] += g * np.asarray(a, dtype=np.float64)
    return normalize_peak(mix.astype(np.float32))


def pitch_shift_stem(
    audio: np.ndarray,
    track: F0Track,
    semitones: int,
    sample_rate: int,
) -> Tuple[np.ndarray, F0Track]:
    """Shift a stem and its annotation together; 0 semitones is a passthrough."""
    if abs(semitones) > 2:
        raise ValueError("pitch shift must lie in [-2, +2] semitones")
    if semitones == 0:
        return audio, track
    factor = 2.0 ** (semitones / 12.0)
    shifted = pitch_shift(audio, semitones, sample_rate)
    f0 = np.where(track.f0 > 0, track.f0 * factor, 0.0)
    return shifted, F0Track(track.times.copy(), f0)


def split_dataset(
    entries: Sequence[ManifestEntry],
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetManifest:
    """Assign splits at song granularity, approximating file-count ratios.

    All entries of a song land in the same split, so near-duplicate mixtures
    of one song never leak across splits. Deterministic for a fixed seed.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    songs: Dict[str, List[ManifestEntry]] = {}
    for e in entries:
        songs.setdefault(e.song_id, []).append(e)
    n_required = sum(1 for r in ratios if r > 0)
    if len(songs) < n_required:
        raise ValueError(
            "%d distinct songs cannot fill %d splits" % (len(songs), n_required)
        )
    rng = np.random.default_rng(seed)
    order = list(songs)
    rng.shuffle(order)
    total = len(entries)
    counts = [0, 0, 0]
    assigned: Dict[str, str] = {}
    for song in order:
        deficits = [
            ratios[i] * total - counts[i] if ratios[i] > 0 else -np.inf
            for i in range(3)
        ]
        pick = int(np.argmax(deficits))
        assigned[song] = SPLIT_NAMES[pick]
        counts[pick] += len(songs[song])
    out = [replace(e, split=assigned[e.song_id]) for e in entries]
    return DatasetManifest(out)


def save_manifest(path: Union[str, Path], manifest: DatasetManifest) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(MANIFEST_FIELDS) + "\n")
        for e in manifest.entries:
            fh.write(
                "\t".join(
                    [e.audio_path, e.annotation_path, e.song_id,
                     str(e.shift), e.reverb, e.split, "%.6f" % e.gain]
                )
                + "\n"
            )


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    entries = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != MANIFEST_FIELDS:
            raise ValueError("unexpected manifest header in %s: %r" % (path, header))
        for line in fh:
            if not line.strip():
                continue
            vals = line.rstrip("\n").split("\t")
            entries.append(
                ManifestEntry(vals[0], vals[1], vals[2], int(vals[3]), vals[4],
                              vals[5], float(vals[6]))
            )
    return DatasetManifest(entries)


def build_corpus(
    stems_root: Union[str, Path],
    out_dir: Union[str, Path],
    shifts: Sequence[int] = (-2, -1, 0, 1, 2),
    reverb_ir: Union[str, Path, np.ndarray, None] = None,
    seed: int = 0,
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS,
    params: HcqtParams = None,
    part_names: Sequence[str] = PART_NAMES,
) -> DatasetManifest:
    """Render every mixture/shift/reverb variant and write the split manifest.

    ``reverb_ir`` may be an impulse-response WAV path, a sample array at the
    analysis rate, or None to skip reverb copies. Output audio, annotations
    and ``manifest.tsv`` land under ``out_dir``.
    """
    params = params or HcqtParams()
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "annotations").mkdir(parents=True, exist_ok=True)

    ir = None
    if reverb_ir is not None:
        if isinstance(reverb_ir, (str, Path)):
            ir, _ = audio_io.load_wav(reverb_ir, target_sr=params.sample_rate)
        else:
            ir = np.asarray(reverb_ir, dtype=np.float32)

    entries = []
    for stems in scan_stems(stems_root, part_names):
        for mix_idx, recipe in enumerate(enumerate_mixtures(stems, part_names)):
            loaded = {
                part: (
                    audio_io.load_wav(entry.audio_path, target_sr=params.sample_rate)[0],
                    parse_f0_track(entry.f0_path),
                )
                for part, entry in recipe.stems.items()
            }
            for shift in shifts:
                shifted = {
                    part: pitch_shift_stem(a, t, shift, params.sample_rate)
                    for part, (a, t) in loaded.items()
                }
                mix, gain = mix_stems(
                    [a for a, _ in shifted.values()], params.sample_rate
                )
                grid = frame_times(n_frames_for(len(mix), params), params)
                ann = merge_tracks([t for _, t in shifted.values()], grid)
                variants = [("none", mix, gain)]
                if ir is not None:
                    wet = apply_reverb(mix, ir, params.sample_rate)
                    variants.append(("ir", wet, gain))
                for tag, audio, g in variants:
                    stem_name = "%s_mix%03d_s%+d_%s" % (stems.song_id, mix_idx, shift, tag)
                    wav_path = out_dir / "audio" / (stem_name + ".wav")
                    ann_path = out_dir / "annotations" / (stem_name + ".tsv")
                    audio_io.save_wav(wav_path, audio, params.sample_rate)
                    save_multif0(ann_path, ann)
                    entries.append(
                        ManifestEntry(str(wav_path), str(ann_path), stems.song_id,
                                      shift, tag, "train", g)
                    )
    manifest = split_dataset(entries, ratios=ratios, seed=seed)
    save_manifest(out_dir / "manifest.tsv", manifest)
    logger.info(
        "forged %d files (%d train / %d validation / %d test)",
        len(manifest.entries),
        len(manifest.subset("train")),
        len(manifest.subset("validation")),
        len(manifest.subset("test")),
    )
    return manifest


def write_quartet_stems(
    out_dir: Union[str, Path],
    song_id: str,
    voices,
    params: HcqtParams = None,
    rng=None,
    duration: float = None,
) -> Path:
    """Render a note specification to the on-disk stem layout."""
    params = params or HcqtParams()
    rng = rng or np.random.default_rng(0)
    if duration is None:
        duration = max(n.end for part in voices.values() for n in part)
    song_dir = Path(out_dir) / song_id
    song_dir.mkdir(parents=True, exist_ok=True)
    stems, tracks = render_quartet_stems(voices, params, rng, duration)
    for (part, audio), track in zip(stems.items(), tracks):
        audio_io.save_wav(song_dir / ("%s_1.wav" % part), audio, params.sample_rate)
        write_f0_track(song_dir / ("%s_1.csv" % part), track)
    return song_dir


def synth_stem_corpus(
    out_dir: Union[str, Path],
    n_songs: int,
    duration: float = 8.0,
    seed: int = 0,
    params: HcqtParams = None,
) -> Path:
    """Write ``n_songs`` random synthetic quartets in the stem layout, plus an IR."""
    params = params or HcqtParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_songs):
        voices = random_quartet(rng, duration=duration)
        write_quartet_stems(out_dir, "synth%03d" % i, voices, params, rng, duration)
    ir = synth_impulse_response(rng, params.sample_rate)
    audio_io.save_wav(out_dir / "impulse_response.wav", ir, params.sample_rate)
    return out_dir
