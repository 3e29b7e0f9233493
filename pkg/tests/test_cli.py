import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from multif0.cli import main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def test_synth_random_songs(runner, workspace):
    result = runner.invoke(main, ["synth", "--random-songs", "2", "--duration", "3.0",
                                  "--out", str(workspace / "stems"), "--seed", "1"])
    assert result.exit_code == 0, result.output
    songs = sorted(p.name for p in (workspace / "stems").iterdir() if p.is_dir())
    assert songs == ["synth000", "synth001"]
    assert (workspace / "stems" / "synth000" / "S_1.wav").exists()
    assert (workspace / "stems" / "synth000" / "S_1.csv").exists()


def test_synth_spec_file(runner, workspace):
    spec = workspace / "quartet.json"
    spec.write_text(json.dumps({
        "S": [{"start": 0.0, "duration": 1.0, "f0": 523.25}],
        "A": [{"start": 0.0, "duration": 1.0, "f0": 392.0}],
        "T": [{"start": 0.0, "duration": 1.0, "f0": 261.63}],
        "B": [{"start": 0.0, "duration": 1.0, "f0": 130.81}],
    }))
    result = runner.invoke(main, ["synth", "--spec", str(spec),
                                  "--out", str(workspace / "spec_stems")])
    assert result.exit_code == 0, result.output
    assert (workspace / "spec_stems" / "quartet" / "B_1.wav").exists()


def test_synth_requires_input(runner, workspace):
    result = runner.invoke(main, ["synth", "--out", str(workspace / "nothing")])
    assert result.exit_code != 0


def test_forge(runner, workspace):
    result = runner.invoke(main, [
        "forge", "--stems", str(workspace / "stems"), "--out", str(workspace / "corpus"),
        "--shifts", "0,2", "--reverb", "synthetic", "--seed", "0",
        "--ratios", "1.0,0.0,0.0",
    ])
    assert result.exit_code == 0, result.output
    manifest = workspace / "corpus" / "manifest.tsv"
    assert manifest.exists()
    lines = manifest.read_text().strip().splitlines()
    # 2 songs x 1 mixture x 2 shifts x (dry + reverb) + header
    assert len(lines) == 1 + 2 * 2 * 2


def test_extract_features(runner, workspace):
    wav = workspace / "corpus" / "audio"
    out = workspace / "features"
    result = runner.invoke(main, ["extract-features", "--audio", str(wav),
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert len(list(out.glob("*.npz"))) == 8


def test_extract_features_no_phase(runner, workspace):
    from multif0.features import load_features

    wav = next((workspace / "corpus" / "audio").glob("*.wav"))
    out = workspace / "features_nophase"
    result = runner.invoke(main, ["extract-features", "--audio", str(wav),
                                  "--out", str(out), "--no-phase"])
    assert result.exit_code == 0, result.output
    feats = load_features(next(out.glob("*.npz")))
    assert feats.phase_diff is None


def test_train_tune_predict_score(runner, workspace):
    manifest = workspace / "corpus" / "manifest.tsv"
    ckpt = workspace / "model.pt"
    result = runner.invoke(main, [
        "train", "--arch", "late_deep", "--manifest", str(manifest),
        "--out", str(ckpt), "--epochs", "2", "--patience", "1",
        "--patches-per-file", "2", "--seed", "0",
        "--cache", str(workspace / "cache"),
    ])
    assert result.exit_code == 0, result.output
    assert ckpt.exists()

    result = runner.invoke(main, [
        "tune-threshold", "--ckpt", str(ckpt), "--manifest", str(manifest),
        "--cache", str(workspace / "cache"),
    ])
    assert result.exit_code == 0, result.output

    wav = sorted((workspace / "corpus" / "audio").glob("*.wav"))[0]
    est_out = workspace / "pred.tsv"
    plot_out = workspace / "pred.png"
    result = runner.invoke(main, [
        "predict", "--ckpt", str(ckpt), "--audio", str(wav),
        "--out", str(est_out), "--plot", str(plot_out),
    ])
    assert result.exit_code == 0, result.output
    assert est_out.exists() and plot_out.exists()

    ref = sorted((workspace / "corpus" / "annotations").glob("*.tsv"))[0]
    report = workspace / "scores.json"
    result = runner.invoke(main, [
        "score", "--ref", str(ref), "--est", str(est_out),
        "--tolerance", "50", "--tolerance", "100", "--report", str(report),
    ])
    assert result.exit_code == 0, result.output
    data = json.loads(report.read_text())
    assert set(data["tolerances"]) == {"50.0", "100.0"}


def test_score_identical_files(runner, workspace, params):
    from multif0.annotations import MultiF0Annotation, save_multif0
    from multif0.grid import frame_times

    ann = MultiF0Annotation(frame_times(5, params), [np.array([220.0, 330.0])] * 5)
    ref = workspace / "ref.tsv"
    save_multif0(ref, ann)
    result = runner.invoke(main, ["score", "--ref", str(ref), "--est", str(ref)])
    assert result.exit_code == 0, result.output
    assert "F 1.000" in result.output


def test_predict_silence_yields_empty_frames(runner, workspace, params):
    from multif0.annotations import load_multif0
    from multif0.audio import save_wav

    wav = workspace / "silence.wav"
    save_wav(wav, np.zeros(params.sample_rate, dtype=np.float32), params.sample_rate)
    out = workspace / "silence.tsv"
    result = runner.invoke(main, ["predict", "--ckpt", str(workspace / "model.pt"),
                                  "--audio", str(wav), "--out", str(out)])
    assert result.exit_code == 0, result.output
    ann = load_multif0(out)
    assert ann.n_frames == params.sample_rate // params.hop_length + 1
