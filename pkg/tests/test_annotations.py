import numpy as np
import pytest

from multif0.annotations import (
    AnnotationError,
    F0Track,
    MultiF0Annotation,
    load_multif0,
    merge_tracks,
    parse_f0_track,
    save_multif0,
    write_f0_track,
)


def _write(tmp_path, text, name="track.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_two_points(tmp_path):
    track = parse_f0_track(_write(tmp_path, "0.000,220.0\n0.012,221.0\n"))
    assert len(track) == 2
    assert np.allclose(track.f0, [220.0, 221.0])


def test_parse_unvoiced_and_header(tmp_path):
    track = parse_f0_track(_write(tmp_path, "time,f0\n0.000,0.0\n0.010,220.0\n"))
    assert len(track) == 2
    assert track.f0[0] == 0.0
    assert list(track.voiced) == [False, True]


def test_parse_non_monotonic(tmp_path):
    with pytest.raises(AnnotationError, match="increasing"):
        parse_f0_track(_write(tmp_path, "0.0,220.0\n0.0,221.0\n"))


def test_parse_malformed_names_line(tmp_path):
    with pytest.raises(AnnotationError, match=":3"):
        parse_f0_track(_write(tmp_path, "0.0,220.0\n0.01,221.0\nnot-a-number,x\n"))


def test_parse_filters_out_of_range_voiced(tmp_path):
    track = parse_f0_track(_write(tmp_path, "0.0,220.0\n0.01,5000.0\n0.02,3.0\n"))
    assert list(track.voiced) == [True, False, False]


def test_track_write_read_roundtrip(tmp_path):
    track = F0Track(np.array([0.0, 0.01, 0.02]), np.array([220.0, 0.0, 440.0]))
    path = tmp_path / "t.csv"
    write_f0_track(path, track)
    back = parse_f0_track(path)
    assert np.allclose(back.times, track.times)
    assert np.allclose(back.f0, track.f0)


def test_merge_four_constant_tracks():
    times = np.arange(0, 1.02, 0.01)  # covers the whole grid span
    grid = np.arange(0, 1.0, 0.0116)
    tracks = [F0Track(times, np.full_like(times, f)) for f in (220.0, 277.0, 330.0, 440.0)]
    ann = merge_tracks(tracks, grid)
    assert all(len(s) == 4 for s in ann.f0_sets)
    assert np.allclose(ann.f0_sets[0], [220.0, 277.0, 330.0, 440.0])


def test_merge_all_unvoiced():
    times = np.arange(0, 1.0, 0.01)
    ann = merge_tracks([F0Track(times, np.zeros_like(times))], times)
    assert all(len(s) == 0 for s in ann.f0_sets)


def test_merge_disjoint_spans():
    t1 = np.arange(0.0, 0.5, 0.01)
    t2 = np.arange(0.5, 1.0, 0.01)
    grid = np.arange(0.0, 1.0, 0.01)
    a = F0Track(t1, np.full_like(t1, 220.0))
    b = F0Track(t2, np.full_like(t2, 330.0))
    ann = merge_tracks([a, b], grid)
    sizes = {len(s) for s in ann.f0_sets}
    assert sizes <= {0, 1}
    # brute-force check frame by frame
    for t, s in zip(ann.frame_times, ann.f0_sets):
        in_a = np.any(np.abs(t1 - t) <= 0.005)
        in_b = np.any(np.abs(t2 - t) <= 0.005)
        assert len(s) == int(in_a) + int(in_b)


def test_merge_beyond_half_hop_is_unvoiced():
    track = F0Track(np.array([0.0]), np.array([220.0]))
    grid = np.array([0.0, 0.01, 0.02])
    ann = merge_tracks([track], grid)
    assert len(ann.f0_sets[0]) == 1
    assert len(ann.f0_sets[1]) == 0 and len(ann.f0_sets[2]) == 0


def test_merge_order_invariant():
    rng = np.random.default_rng(3)
    times = np.arange(0, 2.0, 0.01)
    grid = np.arange(0, 2.0, 0.0116)
    tracks = []
    for f in (196.0, 262.0, 330.0, 392.0):
        f0 = np.where(rng.random(times.shape) < 0.8, f, 0.0)
        tracks.append(F0Track(times, f0))
    a = merge_tracks(tracks, grid)
    b = merge_tracks(tracks[::-1], grid)
    for sa, sb in zip(a.f0_sets, b.f0_sets):
        assert np.array_equal(sa, sb)


def test_merge_keeps_unisons():
    times = np.arange(0, 0.1, 0.01)
    tracks = [F0Track(times, np.full_like(times, 220.0)) for _ in range(2)]
    ann = merge_tracks(tracks, times)
    assert all(len(s) == 2 for s in ann.f0_sets)


def test_multif0_io_bit_stable(tmp_path):
    times = np.arange(0, 0.05, 0.0116)
    sets = [np.array([220.0, 440.0]), np.array([]), np.array([261.63]),
            np.array([195.99777, 329.62755]), np.array([])]
    ann = MultiF0Annotation(times, sets)
    p1 = tmp_path / "a.tsv"
    p2 = tmp_path / "b.tsv"
    save_multif0(p1, ann)
    save_multif0(p2, load_multif0(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_multif0_validation():
    with pytest.raises(ValueError):
        MultiF0Annotation(np.array([0.0]), [np.array([0.0])])  # non-positive f0
    with pytest.raises(ValueError):
        MultiF0Annotation(np.array([0.0, 1.0]), [np.array([])])  # length mismatch
