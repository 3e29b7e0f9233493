import numpy as np
import pytest

from multif0 import HcqtParams, MultiF0Annotation, annotation_to_target, target_to_annotation
from multif0.grid import bin_to_freq, frame_times

KERNEL_1 = 0.6065306597126334  # exp(-1/2)
KERNEL_2 = 0.1353352832366127  # exp(-2)


def _single_f0_annotation(f0, n_frames, params):
    return MultiF0Annotation(
        frame_times(n_frames, params),
        [np.array([f0]) for _ in range(n_frames)],
    )


def test_single_f0_column_values(params):
    ann = _single_f0_annotation(440.0, 3, params)
    target = annotation_to_target(ann, params)
    col = target.grid[:, 1]
    assert col[225] == 1.0
    assert col[224] == pytest.approx(KERNEL_1, abs=1e-6)
    assert col[226] == pytest.approx(KERNEL_1, abs=1e-6)
    assert col[223] == pytest.approx(KERNEL_2, abs=1e-6)
    assert col[227] == pytest.approx(KERNEL_2, abs=1e-6)
    assert np.count_nonzero(col) == 5


def test_empty_annotation_zero_target(params):
    ann = MultiF0Annotation(frame_times(4, params), [np.array([])] * 4)
    target = annotation_to_target(ann, params)
    assert target.grid.max() == 0.0
    decoded = target_to_annotation(target, threshold=0.5)
    assert all(len(s) == 0 for s in decoded.f0_sets)


def test_two_f0s_one_bin_apart_max_combine(params):
    f_a = bin_to_freq(100, params)
    f_b = bin_to_freq(101, params)
    ann = MultiF0Annotation(frame_times(1, params), [np.array([f_a, f_b])])
    col = annotation_to_target(ann, params).grid[:, 0]
    assert col[100] == 1.0 and col[101] == 1.0
    assert col[99] == pytest.approx(KERNEL_1, abs=1e-6)  # max, not sum


def test_out_of_range_f0_skipped(params):
    ann = MultiF0Annotation(frame_times(1, params), [np.array([25.0, 440.0])])
    col = annotation_to_target(ann, params).grid[:, 0]
    assert col[225] == 1.0
    assert np.count_nonzero(col) == 5  # low F0 contributed nothing


def test_monotone_decay_within_kernel(params):
    ann = _single_f0_annotation(220.0, 1, params)
    col = annotation_to_target(ann, params).grid[:, 0]
    peak = int(np.argmax(col))
    assert col[peak] > col[peak + 1] > col[peak + 2] > 0
    assert col[peak] > col[peak - 1] > col[peak - 2] > 0


def test_column_sparsity(params):
    rng = np.random.default_rng(11)
    times = frame_times(10, params)
    sets = [np.sort(rng.uniform(100, 800, size=3)) for _ in range(10)]
    ann = MultiF0Annotation(times, sets)
    grid = annotation_to_target(ann, params).grid
    for t, s in enumerate(sets):
        assert np.count_nonzero(grid[:, t]) <= 5 * len(s)


def test_high_threshold_single_peak(params):
    ann = _single_f0_annotation(440.0, 5, params)
    target = annotation_to_target(ann, params)
    decoded = target_to_annotation(target, threshold=0.99)
    assert all(len(s) == 1 for s in decoded.f0_sets)


def test_roundtrip_well_separated(params):
    rng = np.random.default_rng(5)
    n_frames = 40
    times = frame_times(n_frames, params)
    sets = []
    for _ in range(n_frames):
        k = rng.integers(0, 5)
        f0s = []
        while len(f0s) < k:
            cand = float(rng.uniform(80.0, 1000.0))
            if all(abs(1200 * np.log2(cand / f)) >= 100.0 for f in f0s):
                f0s.append(cand)
        sets.append(np.array(sorted(f0s)))
    ann = MultiF0Annotation(times, sets)
    decoded = target_to_annotation(annotation_to_target(ann, params), threshold=0.5)
    for ref, est in zip(ann.f0_sets, decoded.f0_sets):
        assert len(ref) == len(est)  # zero spurious, zero missed
        for r, e in zip(np.sort(ref), np.sort(est)):
            assert abs(1200 * np.log2(e / r)) <= 20.0
