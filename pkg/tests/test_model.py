import numpy as np
import pytest
import torch
from sklearn.exceptions import NotFittedError

from multif0 import HcqtFeatures, MultiF0Annotation, SalienceEstimator, TrainConfig, bce_loss, compute_hcqt
from multif0.annotations import merge_tracks
from multif0.grid import frame_times, n_frames_for
from multif0.model import sample_patch_offsets, sample_patches
from multif0.targets import annotation_to_target

LN2 = 0.6931471805599453
CLIPPED_MAX = 16.11809565095832  # -ln(1e-7)


def test_bce_closed_forms():
    zeros = np.zeros((4, 4))
    assert bce_loss(zeros, zeros) == pytest.approx(0.0, abs=1e-6)
    one = np.ones((1, 1))
    assert bce_loss(one, np.full((1, 1), 0.5)) == pytest.approx(LN2, abs=1e-9)
    assert bce_loss(one, np.full((1, 1), 1e-7)) == pytest.approx(CLIPPED_MAX, abs=1e-6)
    # clipping keeps the loss finite even at exactly 0/1 predictions
    assert np.isfinite(bce_loss(one, np.zeros((1, 1))))
    with pytest.raises(ValueError):
        bce_loss(np.zeros((2, 2)), np.zeros((2, 3)))


def test_bce_loss_floor_at_target():
    rng = np.random.default_rng(0)
    y = (rng.random((6, 6)) < 0.3).astype(float)
    base = bce_loss(y, np.clip(y, 1e-7, 1 - 1e-7))
    for _ in range(20):
        other = rng.random((6, 6))
        assert base <= bce_loss(y, other) + 1e-12


def test_bce_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    y = (rng.random((8, 4)) < 0.4).astype(np.float64)
    p0 = rng.uniform(0.05, 0.95, size=(8, 4))
    pred = torch.tensor(p0, requires_grad=True, dtype=torch.float64)
    loss = bce_loss(torch.tensor(y), pred)
    loss.backward()
    analytic = pred.grad.numpy()
    eps = 1e-6
    for i in range(8):
        for j in range(4):
            hi, lo = p0.copy(), p0.copy()
            hi[i, j] += eps
            lo[i, j] -= eps
            numeric = (bce_loss(y, hi) - bce_loss(y, lo)) / (2 * eps)
            rel = abs(analytic[i, j] - numeric) / max(abs(numeric), 1e-12)
            assert rel < 1e-4


def test_train_config_invariants():
    with pytest.raises(ValueError):
        TrainConfig(early_stop_patience=100, max_epochs=100)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    cfg = TrainConfig()
    assert (cfg.learning_rate, cfg.max_epochs, cfg.batch_size) == (0.001, 100, 16)
    assert (cfg.patch_width, cfg.early_stop_patience) == (50, 25)


def test_patch_offsets_deterministic_and_uniform():
    rng = np.random.default_rng(5)
    offs = sample_patch_offsets(862, 50, 4000, rng)
    assert offs.min() >= 0 and offs.max() <= 812
    # rough uniformity over [0, 812]
    hist, _ = np.histogram(offs, bins=10, range=(0, 813))
    assert hist.min() > 0.5 * hist.mean()
    again = sample_patch_offsets(862, 50, 4000, np.random.default_rng(5))
    assert np.array_equal(offs, again)
    assert list(sample_patch_offsets(50, 50, 8, rng)) == [0] * 8
    with pytest.raises(ValueError):
        sample_patch_offsets(49, 50, 1, rng)


@pytest.fixture(scope="module")
def clip_data(params):
    from multif0.synth import random_quartet, synth_quartet

    rng = np.random.default_rng(7)
    voices = random_quartet(rng, duration=6.0)
    mix, tracks = synth_quartet(voices, params, rng, duration=6.0)
    feats = compute_hcqt(mix, params)
    grid = frame_times(n_frames_for(len(mix), params), params)
    ann = merge_tracks(tracks, grid)
    return feats, ann


def test_sample_patches_pairs_cut_together(clip_data, params):
    feats, ann = clip_data
    target = annotation_to_target(ann, params)
    cfg = TrainConfig(patches_per_file=3)
    patches = list(sample_patches(feats, target, cfg, np.random.default_rng(0)))
    assert len(patches) == 3
    for mag, phase, targ in patches:
        assert mag.shape == (5, 360, 50)
        assert phase.shape == (5, 360, 50)
        assert targ.shape == (360, 50)


@pytest.fixture(scope="module")
def fitted(clip_data, params):
    feats, ann = clip_data
    est = SalienceEstimator(
        architecture="late_deep", max_epochs=12, early_stop_patience=6,
        patches_per_file=4, seed=0, params=params,
    )
    est.fit([feats], [ann], validation_data=([feats], [ann]))
    return est


def test_overfit_halves_validation_loss(fitted):
    history = fitted.history_["val_loss"]
    assert min(history) < 0.5 * history[0]
    assert fitted.best_epoch_ == int(np.argmin(history))


def test_predict_salience_shape_and_range(fitted, clip_data):
    feats, _ = clip_data
    sal = fitted.predict_salience(feats)
    assert sal.shape == (360, feats.n_frames)
    assert np.all(sal > 0) and np.all(sal < 1)


def test_predict_annotation(fitted, clip_data):
    feats, ann = clip_data
    out = fitted.predict(feats)
    assert isinstance(out, MultiF0Annotation)
    assert out.n_frames == feats.n_frames


def test_chunked_forward_matches_whole(fitted, clip_data):
    feats, _ = clip_data
    whole = fitted.predict_salience(feats, chunk_frames=10_000)
    chunked = fitted.predict_salience(feats, chunk_frames=128)
    assert np.allclose(whole, chunked, atol=1e-5)


def test_checkpoint_roundtrip(tmp_path, fitted, clip_data):
    feats, _ = clip_data
    path = tmp_path / "model.pt"
    fitted.threshold_ = 0.37
    fitted.save(path)
    loaded = SalienceEstimator.load(path)
    assert loaded.architecture == fitted.architecture
    assert loaded.threshold_ == pytest.approx(0.37)
    assert loaded.fingerprint_ == fitted.fingerprint_
    assert loaded.hcqt_params_ == fitted.hcqt_params_
    a = fitted.predict_salience(feats)
    b = loaded.predict_salience(feats)
    assert np.allclose(a, b, atol=1e-6)


def test_checkpoint_rejects_other_versions(tmp_path, fitted):
    path = tmp_path / "model.pt"
    fitted.save(path)
    payload = torch.load(path, weights_only=False)
    payload["format_version"] = 99
    torch.save(payload, path)
    with pytest.raises(ValueError, match="format version"):
        SalienceEstimator.load(path)


def test_early_stop_after_patience(clip_data, params):
    feats, ann = clip_data
    est = SalienceEstimator(
        architecture="late_deep_no_phase", learning_rate=0.0, max_epochs=10,
        early_stop_patience=3, patches_per_file=2, seed=1, params=params,
    )
    est.fit([feats], [ann])
    # zero learning rate: epoch 0 is the only improvement, then patience runs out
    assert len(est.history_["val_loss"]) == 1 + 3
    assert est.best_epoch_ == 0


def test_reproducible_histories(clip_data, params):
    feats, ann = clip_data
    histories = []
    for _ in range(2):
        est = SalienceEstimator(
            architecture="late_deep_no_phase", max_epochs=2, early_stop_patience=1,
            patches_per_file=2, seed=11, params=params,
        )
        est.fit([feats], [ann])
        histories.append(est.history_)
    for key in ("train_loss", "val_loss"):
        a, b = histories[0][key], histories[1][key]
        assert np.allclose(a, b, atol=1e-3)


def test_nonfinite_loss_aborts(params):
    t = 60
    bad_mag = np.full((5, 360, t), np.nan, dtype=np.float32)
    feats = HcqtFeatures(bad_mag, np.zeros_like(bad_mag), frame_times(t, params), params)
    ann = MultiF0Annotation(frame_times(t, params), [np.array([220.0])] * t)
    est = SalienceEstimator(max_epochs=2, early_stop_patience=1, params=params, seed=0)
    with pytest.raises(RuntimeError, match="non-finite"):
        est.fit([feats], [ann])


def test_not_fitted_error(params):
    with pytest.raises(NotFittedError):
        SalienceEstimator(params=params).predict_salience(None)


def test_phase_features_required(clip_data, params):
    feats, ann = clip_data
    no_phase = HcqtFeatures(feats.magnitude, None, feats.frame_times, params)
    est = SalienceEstimator(architecture="late_deep", max_epochs=2,
                            early_stop_patience=1, params=params)
    with pytest.raises(ValueError, match="phase"):
        est.fit([no_phase], [ann])


def test_sklearn_param_plumbing(params):
    est = SalienceEstimator(architecture="early_deep", seed=3, params=params)
    got = est.get_params()
    assert got["architecture"] == "early_deep"
    assert got["seed"] == 3
    clone = SalienceEstimator(**got)
    assert clone.get_params()["architecture"] == "early_deep"
