"""Training and inference for the salience networks.

The estimator follows scikit-learn conventions: constructor arguments are
hyperparameters, ``fit`` returns ``self`` and learned state lives in
trailing-underscore attributes. Training minimizes clipped binary
cross-entropy with Adam over randomly sampled full-frequency-extent patches,
keeps per-epoch train/validation losses, and restores the weights of the
best validation epoch after early stopping.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .annotations import MultiF0Annotation, load_multif0
from .decoder import threshold_decode
from .features import HcqtFeatures, compute_hcqt, load_features
from .grid import HcqtParams, frame_times
from .networks import SalienceNetwork, build_model
from .targets import SalienceTarget, annotation_to_target

logger = logging.getLogger(__name__)

BCE_EPS = 1e-7
CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    """Optimization recipe for the salience networks."""

    learning_rate: float = 0.001
    max_epochs: int = 100
    batch_size: int = 16
    patch_width: int = 50
    early_stop_patience: int = 25
    patches_per_file: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.early_stop_patience >= self.max_epochs:
            raise ValueError("early_stop_patience must be < max_epochs")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if min(self.max_epochs, self.batch_size, self.patch_width,
               self.patches_per_file) <= 0:
            raise ValueError("training parameters must be positive")


def bce_loss(target, prediction):
    """Mean binary cross-entropy with predictions clipped to [eps, 1 - eps].

    Accepts numpy arrays (returns a float) or torch tensors (returns a
    differentiable scalar tensor).
    """
    if isinstance(target, np.ndarray) or isinstance(prediction, np.ndarray):
        t = torch.as_tensor(np.asarray(target, dtype=np.float64))
        p = torch.as_tensor(np.asarray(prediction, dtype=np.float64))
        if t.shape != p.shape:
            raise ValueError("target and prediction shapes differ")
        return float(bce_loss(t, p).item())
    if target.shape != prediction.shape:
        raise ValueError("target and prediction shapes differ")
    p = prediction.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return (-target * torch.log(p) - (1.0 - target) * torch.log1p(-p)).mean()


def sample_patch_offsets(n_frames: int, patch_width: int, count: int, rng) -> np.ndarray:
    """Uniform random start frames for ``count`` patches of ``patch_width``."""
    if n_frames < patch_width:
        raise ValueError("track of %d frames is shorter than one patch" % n_frames)
    return rng.integers(0, n_frames - patch_width + 1, size=count)


def sample_patches(
    features: HcqtFeatures,
    target: SalienceTarget,
    config: TrainConfig,
    rng,
):
    """Yield (magnitude, phase, target) patches cut at identical offsets."""
    t = min(features.n_frames, target.n_frames)
    offsets = sample_patch_offsets(t, config.patch_width, config.patches_per_file, rng)
    for o in offsets:
        sl = slice(o, o + config.patch_width)
        phase = features.phase_diff[:, :, sl] if features.phase_diff is not None else None
        yield features.magnitude[:, :, sl], phase, target.grid[:, sl]


class _PairStore:
    """Resolves (features, target) pairs from in-memory objects or file paths,
    keeping a bounded LRU cache of loaded pairs."""

    def __init__(self, features, annotations, params, cache_size=256):
        if len(features) != len(annotations):
            raise ValueError("need one annotation per feature input")
        if not features:
            raise ValueError("empty input set")
        self.features = list(features)
        self.annotations = list(annotations)
        self.params = params
        self._cache = OrderedDict()
        self._cache_size = cache_size

    def __len__(self):
        return len(self.features)

    def identity(self) -> List[str]:
        out = []
        for f in self.features:
            if isinstance(f, (str, Path)):
                out.append(str(f))
            else:
                out.append("mem:%dx%dx%d" % f.magnitude.shape)
        return out

    def get(self, i: int) -> Tuple[HcqtFeatures, SalienceTarget]:
        if i in self._cache:
            self._cache.move_to_end(i)
            return self._cache[i]
        feats = self.features[i]
        if isinstance(feats, (str, Path)):
            feats = load_features(feats, expected_params=self.params)
        ann = self.annotations[i]
        if isinstance(ann, (str, Path)):
            ann = load_multif0(ann)
        target = annotation_to_target(ann, self.params)
        dt = abs(feats.n_frames - target.n_frames)
        if dt > 1:
            logger.warning("frame count mismatch of %d between features and target (#%d)", dt, i)
        pair = (feats, target)
        self._cache[i] = pair
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return pair


class SalienceEstimator(BaseEstimator):
    """Trainable map from HCQT features to pitch salience, with F0 decoding.

    Parameters mirror :class:`TrainConfig` plus the architecture name and the
    analysis grid. ``fit(X, y)`` accepts lists of :class:`HcqtFeatures` or
    feature-cache paths and matching :class:`MultiF0Annotation` objects or
    annotation paths.
    """

    def __init__(
        self,
        architecture: str = "late_deep",
        learning_rate: float = 0.001,
        max_epochs: int = 100,
        batch_size: int = 16,
        patch_width: int = 50,
        early_stop_patience: int = 25,
        patches_per_file: int = 4,
        seed: int = 0,
        threshold: float = 0.5,
        params: Optional[HcqtParams] = None,
        cache_size: int = 256,
    ):
        self.architecture = architecture
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.patch_width = patch_width
        self.early_stop_patience = early_stop_patience
        self.patches_per_file = patches_per_file
        self.seed = seed
        self.threshold = threshold
        self.params = params
        self.cache_size = cache_size

    # ------------------------------------------------------------------ fit

    def fit(self, X, y, validation_data=None):
        config = TrainConfig(
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            patch_width=self.patch_width,
            early_stop_patience=self.early_stop_patience,
            patches_per_file=self.patches_per_file,
            seed=self.seed,
        )
        params = self.params or HcqtParams()
        torch.manual_seed(config.seed)
        rng = np.random.default_rng(config.seed)

        train_store = _PairStore(X, y, params, self.cache_size)
        if validation_data is None:
            logger.info("no validation data given; validating on the training set")
            val_store = train_store
        else:
            val_store = _PairStore(*validation_data, params, self.cache_size)

        network = build_model(self.architecture, params)
        self._fit_phase_scaler(network, train_store)
        optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate)

        # fixed validation patch offsets so epochs are comparable
        val_offsets = self._validation_offsets(val_store, config)

        history = {"train_loss": [], "val_loss": []}
        best_val, best_state, best_epoch = np.inf, None, -1
        epochs_since_best = 0
        for epoch in range(config.max_epochs):
            train_loss = self._run_epoch(network, optimizer, train_store, config, rng, epoch)
            val_loss = self._validation_loss(network, val_store, config, val_offsets)
            history["train_loss"].append(train_loss)
            history["val_loss"].append(val_loss)
            logger.info("epoch %d: train %.5f, val %.5f", epoch, train_loss, val_loss)
            if val_loss < best_val:
                best_val, best_epoch = val_loss, epoch
                best_state = copy.deepcopy(network.state_dict())
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= config.early_stop_patience:
                    logger.info("early stop at epoch %d (best epoch %d)", epoch, best_epoch)
                    break
        if best_state is not None:
            network.load_state_dict(best_state)
        network.eval()

        self.network_ = network
        self.history_ = history
        self.best_epoch_ = best_epoch
        self.threshold_ = self.threshold
        self.hcqt_params_ = params
        self.fingerprint_ = self._fingerprint(config, params, train_store, val_store)
        return self

    def _fit_phase_scaler(self, network: SalienceNetwork, store: _PairStore):
        """Per-harmonic zero-mean/unit-variance statistics of the phase input,
        estimated over the training set and reapplied verbatim at inference."""
        if not network.uses_phase:
            self.phase_mean_ = None
            self.phase_std_ = None
            return
        count = 0
        total = None
        total_sq = None
        for i in range(len(store)):
            feats, _ = store.get(i)
            if feats.phase_diff is None:
                raise ValueError(
                    "architecture %r requires phase features, but input #%d has none"
                    % (self.architecture, i)
                )
            p = feats.phase_diff.astype(np.float64)
            s = p.sum(axis=(1, 2))
            s2 = (p ** 2).sum(axis=(1, 2))
            total = s if total is None else total + s
            total_sq = s2 if total_sq is None else total_sq + s2
            count += p.shape[1] * p.shape[2]
        mean = total / count
        var = np.maximum(total_sq / count - mean ** 2, 1e-12)
        self.phase_mean_ = mean.astype(np.float32)
        self.phase_std_ = np.sqrt(var).astype(np.float32)

    def _scale_phase(self, phase: np.ndarray) -> np.ndarray:
        return (phase - self.phase_mean_[:, None, None]) / self.phase_std_[:, None, None]

    def _validation_offsets(self, store: _PairStore, config: TrainConfig):
        offsets = {}
        for i in range(len(store)):
            feats, target = store.get(i)
            t = min(feats.n_frames, target.n_frames)
            if t < config.patch_width:
                continue
            rng = np.random.default_rng((config.seed, 1, i))
            offsets[i] = sample_patch_offsets(t, config.patch_width, config.patches_per_file, rng)
        if not offsets:
            raise ValueError("no validation track is at least one patch long")
        return offsets

    def _batches(self, store, config, order, offsets_for):
        """Group patches from visited files into training batches."""
        mags, phases, targs, names = [], [], [], []
        for i in order:
            feats, target = store.get(i)
            t = min(feats.n_frames, target.n_frames)
            if t < config.patch_width:
                logger.warning("skipping track #%d: %d frames < patch width %d",
                               i, t, config.patch_width)
                continue
            for o in offsets_for(i, t):
                sl = slice(o, o + config.patch_width)
                mags.append(feats.magnitude[:, :, sl])
                if self.phase_mean_ is not None:
                    phases.append(self._scale_phase(feats.phase_diff[:, :, sl]))
                targs.append(target.grid[:, sl])
                names.append(i)
                if len(mags) == config.batch_size:
                    yield self._to_tensors(mags, phases, targs), names
                    mags, phases, targs, names = [], [], [], []
        if mags:
            yield self._to_tensors(mags, phases, targs), names

    @staticmethod
    def _to_tensors(mags, phases, targs):
        mag = torch.from_numpy(np.stack(mags).astype(np.float32))
        phase = torch.from_numpy(np.stack(phases).astype(np.float32)) if phases else None
        targ = torch.from_numpy(np.stack(targs).astype(np.float32))
        return mag, phase, targ

    def _run_epoch(self, network, optimizer, store, config, rng, epoch):
        network.train()
        order = rng.permutation(len(store))
        losses = []

        def offsets_for(i, t):
            return sample_patch_offsets(t, config.patch_width, config.patches_per_file, rng)

        for batch_idx, ((mag, phase, targ), names) in enumerate(
            self._batches(store, config, order, offsets_for)
        ):
            optimizer.zero_grad()
            pred = network(mag, phase)
            loss = bce_loss(targ, pred)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    "non-finite training loss at epoch %d batch %d (tracks %s)"
                    % (epoch, batch_idx, sorted(set(names)))
                )
            loss.backward()
            optimizer.step()
            losses.append(float(loss.item()))
        if not losses:
            raise ValueError("no training track is at least one patch long")
        return float(np.mean(losses))

    def _validation_loss(self, network, store, config, val_offsets):
        network.eval()
        losses = []
        with torch.no_grad():
            order = sorted(val_offsets.keys())

            def offsets_for(i, t):
                return val_offsets[i]

            for (mag, phase, targ), _ in self._batches(store, config, order, offsets_for):
                losses.append(float(bce_loss(targ, network(mag, phase)).item()))
        return float(np.mean(losses))

    def _fingerprint(self, config, params, train_store, val_store):
        payload = json.dumps(
            {
                "architecture": self.architecture,
                "config": asdict(config),
                "params": params.to_dict(),
                "train": train_store.identity(),
                "val": val_store.identity(),
            },
            sort_keys=True,
        )
        return hashlib.sha1(payload.encode("utf-8")).hexdigest()

    # ------------------------------------------------------------ inference

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("estimator is not fitted; call fit or load a checkpoint")

    def predict_salience(self, features: HcqtFeatures, chunk_frames: int = 512) -> np.ndarray:
        """Salience map [n_bins x T] in (0, 1) for one track.

        Long tracks are processed in overlapping chunks; the time receptive
        field of every architecture is far below the overlap.
        """
        self._check_fitted()
        net = self.network_
        net.eval()
        mag = features.magnitude
        phase = None
        if net.uses_phase:
            if features.phase_diff is None:
                raise ValueError("model requires phase features")
            phase = self._scale_phase(features.phase_diff)
        t = mag.shape[2]
        overlap = 32
        out = np.zeros((mag.shape[1], t), dtype=np.float32)
        with torch.no_grad():
            start = 0
            while start < t:
                stop = min(t, start + chunk_frames)
                lo = max(0, start - overlap)
                hi = min(t, stop + overlap)
                m = torch.from_numpy(mag[None, :, :, lo:hi].astype(np.float32))
                p = (
                    torch.from_numpy(phase[None, :, :, lo:hi].astype(np.float32))
                    if phase is not None
                    else None
                )
                pred = net(m, p)[0].numpy()
                out[:, start:stop] = pred[:, start - lo:(start - lo) + (stop - start)]
                start = stop
        return out

    def predict(self, X, threshold: float = None) -> Union[MultiF0Annotation, List[MultiF0Annotation]]:
        """Decode F0 sets from audio samples, a path, or HcqtFeatures."""
        self._check_fitted()
        if isinstance(X, (list, tuple)):
            return [self.predict(x, threshold=threshold) for x in X]
        feats = self._as_features(X)
        salience = self.predict_salience(feats)
        thresh = self.threshold_ if threshold is None else threshold
        return threshold_decode(salience, self.hcqt_params_, threshold=thresh,
                                times=feats.frame_times)

    def _as_features(self, x) -> HcqtFeatures:
        if isinstance(x, HcqtFeatures):
            return x
        if isinstance(x, (str, Path)):
            path = Path(x)
            if path.suffix == ".npz":
                return load_features(path, expected_params=self.hcqt_params_)
            from . import audio as audio_io

            samples, _ = audio_io.load_wav(path, target_sr=self.hcqt_params_.sample_rate)
            return compute_hcqt(samples, self.hcqt_params_,
                                include_phase=self.network_.uses_phase)
        return compute_hcqt(np.asarray(x), self.hcqt_params_,
                            include_phase=self.network_.uses_phase)

    # ---------------------------------------------------------- persistence

    def save(self, path: Union[str, Path]) -> None:
        """Write a versioned checkpoint with weights, grid, scaler and threshold."""
        self._check_fitted()
        payload = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "architecture": self.architecture,
            "hcqt_params": self.hcqt_params_.to_dict(),
            "state_dict": self.network_.state_dict(),
            "phase_mean": None if self.phase_mean_ is None else self.phase_mean_.tolist(),
            "phase_std": None if self.phase_std_ is None else self.phase_std_.tolist(),
            "threshold": float(self.threshold_),
            "training_fingerprint": self.fingerprint_,
            "history": self.history_,
            "best_epoch": self.best_epoch_,
            "estimator_params": {
                k: (v.to_dict() if isinstance(v, HcqtParams) else v)
                for k, v in self.get_params().items()
            },
        }
        torch.save(payload, str(path))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SalienceEstimator":
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
        version = payload.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError("checkpoint %s has format version %r, expected %d"
                             % (path, version, CHECKPOINT_FORMAT_VERSION))
        est_params = dict(payload["estimator_params"])
        if est_params.get("params") is not None:
            est_params["params"] = HcqtParams.from_dict(est_params["params"])
        est = cls(**est_params)
        params = HcqtParams.from_dict(payload["hcqt_params"])
        network = build_model(payload["architecture"], params)
        network.load_state_dict(payload["state_dict"])
        network.eval()
        est.architecture = payload["architecture"]
        est.network_ = network
        est.hcqt_params_ = params
        est.phase_mean_ = (
            None if payload["phase_mean"] is None
            else np.asarray(payload["phase_mean"], dtype=np.float32)
        )
        est.phase_std_ = (
            None if payload["phase_std"] is None
            else np.asarray(payload["phase_std"], dtype=np.float32)
        )
        est.threshold_ = payload["threshold"]
        est.history_ = payload["history"]
        est.best_epoch_ = payload["best_epoch"]
        est.fingerprint_ = payload["training_fingerprint"]
        return est
