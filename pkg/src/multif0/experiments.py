"""Experiment orchestration: train, tune, decode and score from a manifest.

An experiment is described by a small key-value config (YAML or JSON):

.. code-block:: yaml

    experiment: fusion_strategy        # or comparative / generalization / custom
    manifest: corpus/manifest.tsv
    out_dir: runs/exp1
    architectures: [late_deep]         # forced to all four for fusion_strategy
    tolerances: [50.0, 100.0, 20.0]
    seed: 0
    max_epochs: 100
    early_stop_patience: 25
    exclude_song_prefix: bsq           # comparative only
    external_eval_dir: path/to/dir     # generalization only
    cache_dir: runs/features           # defaults to <out_dir>/features

Relative paths resolve against ``MULTIF0_DATA_ROOT`` when that variable is
set; ``MULTIF0_CACHE_DIR`` overrides ``cache_dir``.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from . import audio as audio_io
from .annotations import MultiF0Annotation, load_multif0, save_multif0
from .decoder import optimize_threshold, threshold_decode
from .features import compute_hcqt, load_features, save_features
from .forge import DatasetManifest, ManifestEntry, load_manifest
from .grid import HcqtParams
from .metrics import EvalScores, aggregate, align_to_grid, frame_scores
from .model import SalienceEstimator
from .networks import ARCHITECTURES

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("fusion_strategy", "comparative", "generalization", "custom")


@dataclass
class ExperimentConfig:
    manifest: str
    out_dir: str
    experiment: str = "custom"
    architectures: List[str] = field(default_factory=lambda: ["late_deep"])
    tolerances: List[float] = field(default_factory=lambda: [50.0])
    seed: int = 0
    max_epochs: int = 100
    early_stop_patience: int = 25
    batch_size: int = 16
    patches_per_file: int = 4
    learning_rate: float = 0.001
    cache_dir: Optional[str] = None
    exclude_song_prefix: Optional[str] = None
    external_eval_dir: Optional[str] = None
    checkpoints: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_KINDS:
            raise ValueError("unknown experiment %r; expected one of %s"
                             % (self.experiment, EXPERIMENT_KINDS))
        if self.experiment == "fusion_strategy":
            self.architectures = list(ARCHITECTURES)
        if not self.architectures:
            raise ValueError("at least one architecture is required")
        for arch in self.architectures:
            if arch not in ARCHITECTURES:
                raise ValueError("unknown architecture %r" % arch)
        if self.experiment == "comparative" and not self.exclude_song_prefix:
            raise ValueError("comparative experiments need exclude_song_prefix")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError("experiment config must be a mapping")
    cfg = ExperimentConfig(**raw)
    data_root = os.environ.get("MULTIF0_DATA_ROOT")
    if data_root:
        for attr in ("manifest", "out_dir", "cache_dir", "external_eval_dir"):
            val = getattr(cfg, attr)
            if val and not Path(val).is_absolute():
                setattr(cfg, attr, str(Path(data_root) / val))
    cache_env = os.environ.get("MULTIF0_CACHE_DIR")
    if cache_env:
        cfg.cache_dir = cache_env
    return cfg


def ensure_features(
    audio_paths: Sequence[Union[str, Path]],
    cache_dir: Union[str, Path],
    params: HcqtParams = None,
    include_phase: bool = True,
) -> List[Path]:
    """Compute-and-cache HCQT features for audio files; reuse valid caches."""
    params = params or HcqtParams()
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tag = params.params_hash()[:8]
    out = []
    for audio_path in audio_paths:
        audio_path = Path(audio_path)
        cache = cache_dir / ("%s.%s.npz" % (audio_path.stem, tag))
        if not cache.exists():
            samples, _ = audio_io.load_wav(audio_path, target_sr=params.sample_rate)
            save_features(cache, compute_hcqt(samples, params, include_phase=include_phase))
            logger.debug("cached features for %s", audio_path.name)
        out.append(cache)
    return out


def _dataset_lists(entries, cache_dir, params):
    feats = ensure_features([e.audio_path for e in entries], cache_dir, params)
    anns = [e.annotation_path for e in entries]
    return feats, anns


def _score_file(est_model, feature_path, ref_path, params, threshold, tolerances):
    feats = load_features(feature_path, expected_params=params)
    salience = est_model.predict_salience(feats)
    decoded = threshold_decode(salience, params, threshold=threshold, times=feats.frame_times)
    ref = align_to_grid(load_multif0(ref_path), feats.frame_times)
    return {tol: frame_scores(ref, decoded, tolerance_cents=tol) for tol in tolerances}


def _scores_to_dict(s: EvalScores) -> dict:
    return dataclasses.asdict(s)


def _external_pairs(directory: Union[str, Path]) -> List[Tuple[Path, Path]]:
    """(wav, annotation) pairs from a directory: <name>.wav + <name>.tsv/.csv."""
    directory = Path(directory)
    pairs = []
    for wav in sorted(directory.glob("*.wav")):
        for suffix in (".tsv", ".csv", ".txt"):
            ref = wav.with_suffix(suffix)
            if ref.exists():
                pairs.append((wav, ref))
                break
    if not pairs:
        raise FileNotFoundError("no (wav, annotation) pairs found in %s" % directory)
    return pairs


def run_experiment(cfg: ExperimentConfig, params: HcqtParams = None) -> dict:
    """Run one experiment end to end and write its report bundle.

    Per architecture: train (or load a provided checkpoint), pick the decoding
    threshold on validation, decode and score every evaluation set at every
    tolerance. Writes ``report.json``, ``tables.txt`` and per-architecture
    checkpoints under ``cfg.out_dir``.
    """
    params = params or HcqtParams()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = Path(cfg.cache_dir) if cfg.cache_dir else out_dir / "features"
    manifest = load_manifest(cfg.manifest)

    train = manifest.subset("train")
    val = manifest.subset("validation")
    eval_sets: Dict[str, List[ManifestEntry]] = {}

    if cfg.experiment == "comparative":
        prefix = cfg.exclude_song_prefix
        held_out = [e for e in manifest.entries if e.song_id.startswith(prefix)]
        if not held_out:
            raise ValueError("exclusion filter %r matches zero files" % prefix)
        train = [e for e in train if not e.song_id.startswith(prefix)]
        val = [e for e in val if not e.song_id.startswith(prefix)]
        eval_sets["held_out_corpus"] = held_out
    elif cfg.experiment == "generalization":
        train = [e for e in train if e.reverb == "none"]
        val = [e for e in val if e.reverb == "none"]
        reverb_test = [e for e in manifest.subset("test") if e.reverb != "none"]
        if reverb_test:
            eval_sets["reverb_test"] = reverb_test
    else:
        eval_sets["test"] = manifest.subset("test")

    if not train:
        raise ValueError("no training files left after filtering")
    if not val:
        logger.warning("empty validation split; using training files for validation")
        val = train

    # post-hoc leak check: no evaluation file may appear in the training list
    train_files = {e.audio_path for e in train}
    for name, entries in eval_sets.items():
        overlap = train_files & {e.audio_path for e in entries}
        if overlap:
            raise RuntimeError("training/evaluation overlap in %s: %r" % (name, overlap))

    report = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "hcqt_params": params.to_dict(),
        "n_train": len(train),
        "n_validation": len(val),
        "eval_set_sizes": {k: len(v) for k, v in eval_sets.items()},
        "architectures": {},
    }

    x_train, y_train = _dataset_lists(train, cache_dir, params)
    x_val, y_val = _dataset_lists(val, cache_dir, params)

    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    for arch in cfg.architectures:
        logger.info("=== architecture %s ===", arch)
        if arch in cfg.checkpoints:
            model = SalienceEstimator.load(cfg.checkpoints[arch])
            if model.architecture != arch:
                raise ValueError(
                    "checkpoint %s holds %r, expected %r"
                    % (cfg.checkpoints[arch], model.architecture, arch)
                )
        else:
            model = SalienceEstimator(
                architecture=arch,
                learning_rate=cfg.learning_rate,
                max_epochs=cfg.max_epochs,
                batch_size=cfg.batch_size,
                early_stop_patience=cfg.early_stop_patience,
                patches_per_file=cfg.patches_per_file,
                seed=cfg.seed,
                params=params,
            )
            model.fit(x_train, y_train, validation_data=(x_val, y_val))

        model.threshold_ = tune_threshold(model, x_val, y_val, params)
        ckpt_path = ckpt_dir / ("%s.pt" % arch)
        model.save(ckpt_path)

        arch_report = {
            "checkpoint": str(ckpt_path),
            "fingerprint": model.fingerprint_,
            "threshold": model.threshold_,
            "best_epoch": model.best_epoch_,
            "history": model.history_,
            "eval": {},
        }
        for set_name, entries in eval_sets.items():
            feats, refs = _dataset_lists(entries, cache_dir, params)
            per_tol: Dict[float, List[EvalScores]] = {t: [] for t in cfg.tolerances}
            for fpath, rpath in zip(feats, refs):
                scores = _score_file(model, fpath, rpath, params, model.threshold_,
                                     cfg.tolerances)
                for tol, s in scores.items():
                    per_tol[tol].append(s)
            arch_report["eval"][set_name] = {
                str(tol): {
                    "aggregate": {k: {"mean": m, "std": s}
                                  for k, (m, s) in aggregate(scores_list).items()},
                    "per_file": [
                        {"audio": e.audio_path, **_scores_to_dict(s)}
                        for e, s in zip(entries, scores_list)
                    ],
                }
                for tol, scores_list in per_tol.items()
            }
        if cfg.experiment == "generalization" and cfg.external_eval_dir:
            arch_report["eval"]["external"] = _score_external(
                model, cfg.external_eval_dir, cache_dir, params, cfg.tolerances
            )
        report["architectures"][arch] = arch_report

    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    (out_dir / "tables.txt").write_text(format_tables(report))
    logger.info("report written to %s", out_dir / "report.json")
    return report


def _score_external(model, directory, cache_dir, params, tolerances):
    pairs = _external_pairs(directory)
    feats = ensure_features([w for w, _ in pairs], cache_dir, params)
    per_tol: Dict[float, List[EvalScores]] = {t: [] for t in tolerances}
    for fpath, (_, rpath) in zip(feats, pairs):
        scores = _score_file(model, fpath, rpath, params, model.threshold_, tolerances)
        for tol, s in scores.items():
            per_tol[tol].append(s)
    return {
        str(tol): {
            "aggregate": {k: {"mean": m, "std": s}
                          for k, (m, s) in aggregate(scores_list).items()},
            "per_file": [
                {"audio": str(pairs[i][0]), **_scores_to_dict(s)}
                for i, s in enumerate(scores_list)
            ],
        }
        for tol, scores_list in per_tol.items()
    }


def tune_threshold(
    model: SalienceEstimator,
    x_val: Sequence,
    y_val: Sequence,
    params: HcqtParams = None,
) -> float:
    """Grid-search the decoding threshold on validation accuracy."""
    params = params or model.hcqt_params_
    maps, refs = [], []
    for x, y in zip(x_val, y_val):
        feats = x if not isinstance(x, (str, Path)) else load_features(x, expected_params=params)
        maps.append(model.predict_salience(feats))
        refs.append(y if isinstance(y, MultiF0Annotation) else load_multif0(y))
    return optimize_threshold(maps, refs, params)


def format_tables(report: dict) -> str:
    """Human-readable aggregate tables, one row per architecture/set/tolerance."""
    lines = ["experiment: %s" % report["experiment"], ""]
    header = "%-20s %-16s %8s %10s %10s %10s %10s" % (
        "architecture", "eval_set", "cents", "precision", "recall", "f_score", "accuracy")
    lines.append(header)
    lines.append("-" * len(header))
    for arch, arch_report in report["architectures"].items():
        for set_name, tols in arch_report["eval"].items():
            for tol, block in tols.items():
                agg = block["aggregate"]
                lines.append(
                    "%-20s %-16s %8s %10s %10s %10s %10s"
                    % (
                        arch,
                        set_name,
                        tol,
                        "%.3f(%.2f)" % (agg["precision"]["mean"], agg["precision"]["std"]),
                        "%.3f(%.2f)" % (agg["recall"]["mean"], agg["recall"]["std"]),
                        "%.3f(%.2f)" % (agg["f_score"]["mean"], agg["f_score"]["std"]),
                        "%.3f(%.2f)" % (agg["accuracy"]["mean"], agg["accuracy"]["std"]),
                    )
                )
    return "\n".join(lines) + "\n"


def predict_file(
    audio_path: Union[str, Path],
    checkpoint_path: Union[str, Path],
    out_path: Union[str, Path],
    threshold: float = None,
    plot_path: Union[str, Path] = None,
) -> MultiF0Annotation:
    """Run the full predict path for one audio file and write the annotation."""
    model = SalienceEstimator.load(checkpoint_path)
    params = model.hcqt_params_
    samples, _ = audio_io.load_wav(audio_path, target_sr=params.sample_rate)
    feats = compute_hcqt(samples, params, include_phase=model.network_.uses_phase)
    salience = model.predict_salience(feats)
    used = model.threshold_ if threshold is None else threshold
    ann = threshold_decode(salience, params, threshold=used, times=feats.frame_times)
    save_multif0(out_path, ann)
    logger.info("decoded %s at threshold %.2f -> %s", audio_path, used, out_path)
    if plot_path is not None:
        plot_salience(salience, ann, params, plot_path)
    return ann


def plot_salience(salience, ann, params, out_path):
    """Static image of the salience map with decoded F0s overlaid."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(12, 6))
    extent = [ann.frame_times[0], ann.frame_times[-1], 0, params.n_bins]
    ax.imshow(salience, origin="lower", aspect="auto", extent=extent, cmap="magma")
    bins_per_oct = params.bins_per_octave
    for t, f0s in zip(ann.frame_times, ann.f0_sets):
        if len(f0s):
            bins = bins_per_oct * np.log2(f0s / params.f_min)
            ax.plot([t] * len(bins), bins, ".", color="cyan", markersize=2)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("frequency bin")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
