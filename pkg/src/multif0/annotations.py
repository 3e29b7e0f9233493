"""Per-voice F0 tracks and frame-wise multiple-F0 annotations, with file I/O.

File formats:

* F0 track: CSV with two columns ``time_sec,f0_hz`` (header optional);
  ``f0 <= 0`` marks an unvoiced point.
* Multiple-F0 annotation: one line per frame, ``time_sec`` followed by zero
  or more tab-separated Hz values, written with 6 decimal places.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

VOICED_RANGE_HZ = (20.0, 2000.0)


class AnnotationError(ValueError):
    """Raised for malformed annotation files."""


@dataclass
class F0Track:
    """A single voice's F0 contour; ``f0 == 0`` means unvoiced."""

    times: np.ndarray
    f0: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        if self.times.shape != self.f0.shape or self.times.ndim != 1:
            raise ValueError("times and f0 must be 1-D arrays of equal length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise AnnotationError("track times must be strictly increasing")
        if np.any(self.f0 < 0):
            raise ValueError("f0 values must be >= 0")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def voiced(self) -> np.ndarray:
        return self.f0 > 0


@dataclass
class MultiF0Annotation:
    """Frame-wise sets of concurrent F0 values on a uniform time grid."""

    frame_times: np.ndarray
    f0_sets: List[np.ndarray]

    def __post_init__(self):
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        if len(self.frame_times) != len(self.f0_sets):
            raise ValueError("frame_times and f0_sets lengths differ")
        self.f0_sets = [np.sort(np.asarray(s, dtype=np.float64)) for s in self.f0_sets]
        for s in self.f0_sets:
            if np.any(s <= 0):
                raise ValueError("annotated F0 values must be positive")

    @property
    def n_frames(self) -> int:
        return len(self.frame_times)

    def max_polyphony(self) -> int:
        return max((len(s) for s in self.f0_sets), default=0)


def parse_f0_track(path: Union[str, Path]) -> F0Track:
    """Parse a two-column CSV F0 track.

    Voiced values outside the plausible vocal range are treated as unvoiced
    (counted and logged). Malformed rows and non-monotonic times raise
    :class:`AnnotationError` naming the offending line.
    """
    times, f0 = [], []
    dropped = 0
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [p for p in line.replace("\t", ",").split(",") if p != ""]
            if len(parts) < 2:
                raise AnnotationError("%s:%d: expected 'time,f0', got %r" % (path, lineno, raw))
            try:
                t, f = float(parts[0]), float(parts[1])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise AnnotationError("%s:%d: unparseable row %r" % (path, lineno, raw))
            if f > 0 and not (VOICED_RANGE_HZ[0] <= f <= VOICED_RANGE_HZ[1]):
                f = 0.0
                dropped += 1
            times.append(t)
            f0.append(max(f, 0.0))
    if not times:
        raise AnnotationError("%s: no data rows" % path)
    if np.any(np.diff(times) <= 0):
        bad = int(np.argmax(np.diff(times) <= 0)) + 2
        raise AnnotationError("%s:%d: times not strictly increasing" % (path, bad))
    if dropped:
        logger.warning("%s: %d voiced values outside %s Hz treated as unvoiced",
                       path, dropped, VOICED_RANGE_HZ)
    return F0Track(np.array(times), np.array(f0))


def write_f0_track(path: Union[str, Path], track: F0Track) -> None:
    with open(path, "w") as fh:
        for t, f in zip(track.times, track.f0):
            fh.write("%.6f,%.6f\n" % (t, f))


def merge_tracks(tracks: Sequence[F0Track], frame_times: np.ndarray) -> MultiF0Annotation:
    """Merge per-voice tracks into per-frame F0 sets on a common grid.

    Each track is resampled to the grid by nearest neighbor within half a
    grid step; grid frames with no track point inside that window take no
    value from that track. Voiced values are pooled across tracks (a
    multiset: unisons from different voices are kept).
    """
    if not tracks:
        raise ValueError("at least one track is required")
    frame_times = np.asarray(frame_times, dtype=np.float64)
    half_hop = 0.5 * float(np.median(np.diff(frame_times))) if len(frame_times) > 1 else np.inf
    per_frame = [[] for _ in range(len(frame_times))]
    for track in tracks:
        if len(track) == 0:
            continue
        idx = np.searchsorted(track.times, frame_times)
        idx_prev = np.clip(idx - 1, 0, len(track) - 1)
        idx_next = np.clip(idx, 0, len(track) - 1)
        d_prev = np.abs(frame_times - track.times[idx_prev])
        d_next = np.abs(track.times[idx_next] - frame_times)
        nearest = np.where(d_prev <= d_next, idx_prev, idx_next)
        dist = np.minimum(d_prev, d_next)
        for i, (j, d) in enumerate(zip(nearest, dist)):
            if d <= half_hop and track.f0[j] > 0:
                per_frame[i].append(track.f0[j])
    return MultiF0Annotation(frame_times, [np.array(v) for v in per_frame])


def save_multif0(path: Union[str, Path], ann: MultiF0Annotation) -> None:
    """Write an annotation as time + tab-separated Hz values per line."""
    with open(path, "w") as fh:
        for t, f0s in zip(ann.frame_times, ann.f0_sets):
            fields = ["%.6f" % t] + ["%.6f" % f for f in f0s]
            fh.write("\t".join(fields) + "\n")


def load_multif0(path: Union[str, Path]) -> MultiF0Annotation:
    times, sets = [], []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            try:
                times.append(float(parts[0]))
                sets.append(np.array([float(p) for p in parts[1:] if p != ""]))
            except ValueError:
                raise AnnotationError("%s:%d: unparseable row %r" % (path, lineno, raw))
    if not times:
        raise AnnotationError("%s: no data rows" % path)
    return MultiF0Annotation(np.array(times), sets)
