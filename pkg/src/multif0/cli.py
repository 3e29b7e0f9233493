"""Command-line entry points for the multiple-F0 pipeline."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click
import numpy as np

from . import audio as audio_io
from .annotations import load_multif0
from .experiments import (
    ensure_features,
    load_experiment_config,
    predict_file,
    run_experiment,
    tune_threshold,
)
from .features import compute_hcqt, save_features
from .forge import build_corpus, load_manifest, synth_stem_corpus, write_quartet_stems
from .grid import HcqtParams
from .metrics import aggregate, align_to_grid, frame_scores
from .model import SalienceEstimator
from .networks import ARCHITECTURES
from .synth import quartet_from_json

logger = logging.getLogger(__name__)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose):
    """Multiple-F0 estimation for vocal ensembles: features, training, decoding."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@main.command("extract-features")
@click.option("--audio", required=True, type=click.Path(exists=True),
              help="WAV file or directory of WAV files.")
@click.option("--out", required=True, type=click.Path(), help="Cache directory.")
@click.option("--no-phase", is_flag=True, help="Skip the phase-differential channel.")
def extract_features_cmd(audio, out, no_phase):
    """Compute HCQT feature caches for audio files."""
    params = HcqtParams()
    audio = Path(audio)
    paths = sorted(audio.glob("*.wav")) if audio.is_dir() else [audio]
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = params.params_hash()[:8]
    for path in paths:
        samples, _ = audio_io.load_wav(path, target_sr=params.sample_rate)
        feats = compute_hcqt(samples, params, include_phase=not no_phase)
        cache = out_dir / ("%s.%s.npz" % (path.stem, tag))
        save_features(cache, feats)
        click.echo("%s -> %s [%d frames]" % (path.name, cache.name, feats.n_frames))


def _parse_shifts(text):
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s != ""]


@main.command("forge")
@click.option("--stems", required=True, type=click.Path(exists=True),
              help="Root directory of per-song stem folders.")
@click.option("--out", required=True, type=click.Path())
@click.option("--shifts", default="-2..2", show_default=True,
              help="Semitone shifts, e.g. '-2..2' or '-2,0,2'.")
@click.option("--reverb", default="none", show_default=True,
              help="Impulse-response WAV, 'none', or 'synthetic'.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--ratios", default="0.75,0.10,0.15", show_default=True,
              help="train,validation,test split fractions.")
def forge_cmd(stems, out, shifts, reverb, seed, ratios):
    """Render mixture/augmentation variants and write the split manifest."""
    params = HcqtParams()
    ir = None
    if reverb == "synthetic":
        from .synth import synth_impulse_response

        ir = synth_impulse_response(np.random.default_rng(seed), params.sample_rate)
    elif reverb != "none":
        ir = reverb
    manifest = build_corpus(
        stems, out,
        shifts=_parse_shifts(shifts),
        reverb_ir=ir,
        seed=seed,
        ratios=tuple(float(r) for r in ratios.split(",")),
        params=params,
    )
    click.echo("%d files -> %s" % (len(manifest.entries), Path(out) / "manifest.tsv"))


@main.command("synth")
@click.option("--spec", type=click.Path(exists=True),
              help="JSON note specification for one quartet.")
@click.option("--random-songs", type=int, default=0,
              help="Generate this many random quartets instead of using --spec.")
@click.option("--duration", type=float, default=8.0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
def synth_cmd(spec, random_songs, duration, out, seed):
    """Render synthetic quartet stems with exact F0 tracks."""
    params = HcqtParams()
    if random_songs > 0:
        synth_stem_corpus(out, random_songs, duration=duration, seed=seed, params=params)
        click.echo("wrote %d synthetic songs under %s" % (random_songs, out))
    elif spec:
        voices = quartet_from_json(Path(spec))
        song_dir = write_quartet_stems(out, Path(spec).stem, voices, params,
                                       np.random.default_rng(seed))
        click.echo("wrote stems under %s" % song_dir)
    else:
        raise click.UsageError("provide --spec or --random-songs")


@main.command("train")
@click.option("--arch", default="late_deep", show_default=True,
              type=click.Choice(ARCHITECTURES))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Checkpoint path.")
@click.option("--no-phase", is_flag=True,
              help="Shortcut for the phase-free ablation architecture.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--cache", type=click.Path(), default=None,
              help="Feature cache directory (default: <manifest dir>/features).")
@click.option("--epochs", default=100, show_default=True, type=int)
@click.option("--patience", default=25, show_default=True, type=int)
@click.option("--patches-per-file", default=4, show_default=True, type=int)
def train_cmd(arch, manifest, out, no_phase, seed, cache, epochs, patience, patches_per_file):
    """Train a salience network on a forged manifest."""
    if no_phase:
        arch = "late_deep_no_phase"
    params = HcqtParams()
    man = load_manifest(manifest)
    cache_dir = Path(cache) if cache else Path(manifest).parent / "features"
    train_entries = man.subset("train") or man.entries
    val_entries = man.subset("validation") or train_entries
    x_train = ensure_features([e.audio_path for e in train_entries], cache_dir, params)
    x_val = ensure_features([e.audio_path for e in val_entries], cache_dir, params)
    model = SalienceEstimator(
        architecture=arch, max_epochs=epochs, early_stop_patience=patience,
        patches_per_file=patches_per_file, seed=seed, params=params,
    )
    model.fit(
        x_train, [e.annotation_path for e in train_entries],
        validation_data=(x_val, [e.annotation_path for e in val_entries]),
    )
    model.save(out)
    click.echo("checkpoint written to %s (best epoch %d)" % (out, model.best_epoch_))


@main.command("tune-threshold")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--cache", type=click.Path(), default=None)
def tune_threshold_cmd(ckpt, manifest, cache):
    """Optimize the decoding threshold on the manifest's validation split."""
    model = SalienceEstimator.load(ckpt)
    params = model.hcqt_params_
    man = load_manifest(manifest)
    entries = man.subset("validation") or man.entries
    cache_dir = Path(cache) if cache else Path(manifest).parent / "features"
    x_val = ensure_features([e.audio_path for e in entries], cache_dir, params)
    model.threshold_ = tune_threshold(model, x_val, [e.annotation_path for e in entries], params)
    model.save(ckpt)
    click.echo("threshold %.2f written back to %s" % (model.threshold_, ckpt))


@main.command("predict")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--audio", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--threshold", type=float, default=None,
              help="Override the checkpoint's stored threshold.")
@click.option("--plot", type=click.Path(), default=None,
              help="Also write a salience/F0 overlay image here.")
def predict_cmd(ckpt, audio, out, threshold, plot):
    """Decode frame-wise F0 sets for one audio file."""
    ann = predict_file(audio, ckpt, out, threshold=threshold, plot_path=plot)
    voiced = sum(1 for s in ann.f0_sets if len(s))
    click.echo("%s: %d/%d voiced frames -> %s" % (audio, voiced, ann.n_frames, out))


def _annotation_pairs(ref, est):
    ref, est = Path(ref), Path(est)
    if ref.is_dir() != est.is_dir():
        raise click.UsageError("--ref and --est must both be files or both directories")
    if not ref.is_dir():
        return [(ref, est)]
    pairs = []
    for ref_file in sorted(p for p in ref.iterdir() if p.suffix in (".tsv", ".csv", ".txt")):
        cand = est / ref_file.name
        if cand.exists():
            pairs.append((ref_file, cand))
    if not pairs:
        raise click.UsageError("no matching annotation files between %s and %s" % (ref, est))
    return pairs


@main.command("score")
@click.option("--ref", required=True, type=click.Path(exists=True))
@click.option("--est", required=True, type=click.Path(exists=True))
@click.option("--tolerance", "tolerances", multiple=True, type=float, default=(50.0,),
              show_default=True, help="Pitch tolerance(s) in cents; repeatable.")
@click.option("--report", type=click.Path(), default=None, help="Write JSON report here.")
def score_cmd(ref, est, tolerances, report):
    """Score estimated annotations against references, frame-wise."""
    pairs = _annotation_pairs(ref, est)
    result = {"tolerances": {}}
    for tol in tolerances:
        per_file = []
        rows = []
        for ref_path, est_path in pairs:
            r = load_multif0(ref_path)
            e = align_to_grid(load_multif0(est_path), r.frame_times)
            s = frame_scores(r, e, tolerance_cents=tol)
            per_file.append(s)
            rows.append({"ref": str(ref_path), "est": str(est_path),
                         **{k: getattr(s, k) for k in
                            ("precision", "recall", "f_score", "accuracy", "tp", "fp", "fn")}})
        agg = aggregate(per_file)
        result["tolerances"][str(tol)] = {
            "aggregate": {k: {"mean": m, "std": s} for k, (m, s) in agg.items()},
            "per_file": rows,
        }
        click.echo(
            "tolerance %5.1f cents: P %.3f  R %.3f  F %.3f  Acc %.3f  (%d files)"
            % (tol, agg["precision"][0], agg["recall"][0], agg["f_score"][0],
               agg["accuracy"][0], len(pairs))
        )
    if report:
        Path(report).write_text(json.dumps(result, indent=2))
        click.echo("report -> %s" % report)


@main.command("experiment")
@click.option("--config", required=True, type=click.Path(exists=True))
def experiment_cmd(config):
    """Run a declarative experiment config end to end."""
    cfg = load_experiment_config(config)
    report = run_experiment(cfg)
    click.echo(open(Path(cfg.out_dir) / "tables.txt").read())
    click.echo("report: %s" % (Path(cfg.out_dir) / "report.json"))


if __name__ == "__main__":
    main()
