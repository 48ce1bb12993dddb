import os

import numpy as np
import pytest

from maskbench.cli import main
from maskbench.config import load_config
from maskbench.dataset import Manifest, RenderStore
from maskbench.features import read_matrix_record
from maskbench.pipeline import StoreStateError, load_checked_manifest
from conftest import config_text


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory, corpus):
    """One full verb chain on the shared corpus, reused by the checks."""
    speech_dir, noise_dir = corpus
    base = tmp_path_factory.mktemp("pipe")
    workdir = str(base / "work")
    cfg_path = str(base / "exp.cfg")
    with open(cfg_path, "w") as fh:
        fh.write(config_text(speech_dir, noise_dir, workdir))
    for verb in ("mix", "features", "train", "separate", "eval",
                 "oracle", "coherence", "export-figs"):
        assert main([verb, "--config", cfg_path]) == 0, verb
    return cfg_path, workdir


def test_workdir_layout(pipeline_run):
    _, workdir = pipeline_run
    for rel in (
        "manifest.jsonl",
        "MANIFEST.sha",
        "config.resolved",
        "models/scaler.mat",
        "models/model_irm.ckpt",
        "models/history_irm.csv",
        "reports/report.csv",
        "reports/report.jsonl",
        "reports/oracle_report.csv",
        "reports/coherence.csv",
        "figures/clean.pgm",
        "figures/mixture.pgm",
        "figures/mask_irm.pgm",
        "figures/separated_irm.pgm",
    ):
        assert os.path.exists(os.path.join(workdir, rel)), rel


def test_separated_wavs_cover_test_split(pipeline_run):
    cfg_path, workdir = pipeline_run
    cfg = load_config(cfg_path)
    store = RenderStore(workdir)
    manifest = Manifest.load(store.manifest_path)
    for spec in manifest.test_specs:
        for kind in cfg.kinds:
            assert os.path.exists(store.separated_path(spec, kind))


def test_separated_wavs_start_and_end_quietly(pipeline_run):
    from maskbench.audio import wav_read

    cfg_path, workdir = pipeline_run
    cfg = load_config(cfg_path)
    store = RenderStore(workdir)
    manifest = Manifest.load(store.manifest_path)
    spec = manifest.test_specs[0]
    w = wav_read(store.separated_path(spec, cfg.kinds[0]))
    # the edge fade tames synthesis-window leakage; the outermost samples
    # must sit far below the waveform body even if a mask amplified them
    body = np.sqrt(np.mean(w.samples**2))
    assert abs(w.samples[0]) < 0.05 * body
    assert abs(w.samples[-1]) < 0.05 * body


def test_report_csv_shape(pipeline_run):
    _, workdir = pipeline_run
    path = os.path.join(workdir, "reports", "report.csv")
    lines = open(path).read().strip().splitlines()
    header = lines[0].split(",")
    assert header == ["noise", "snr_db", "target", "metric", "mean", "std", "n"]
    # 2 noises x 2 snrs x 3 targets (mixture, irm, orm) x 4 metrics
    assert len(lines) - 1 == 2 * 2 * 3 * 4


def test_history_csv_tracks_epochs(pipeline_run):
    _, workdir = pipeline_run
    lines = open(os.path.join(workdir, "models", "history_irm.csv")).read().splitlines()
    assert lines[0] == "epoch,train_mse,val_mse,momentum,learning_rate"
    assert len(lines) - 1 == 3


def test_coherence_csv_has_noise_columns(pipeline_run):
    _, workdir = pipeline_run
    lines = open(os.path.join(workdir, "reports", "coherence.csv")).read().splitlines()
    assert lines[0] == "freq_hz,shaped,white"
    assert len(lines) - 1 == 161


def test_features_match_live_extraction(pipeline_run):
    from maskbench.audio import wav_read
    from maskbench.features import extract_features
    from maskbench.pipeline import feature_config

    cfg_path, workdir = pipeline_run
    cfg = load_config(cfg_path)
    store = RenderStore(workdir)
    manifest = Manifest.load(store.manifest_path)
    spec = manifest.test_specs[0]
    stored = read_matrix_record(store.features_path(spec))
    live = extract_features(
        wav_read(store.wav_path(spec, "mixture")), feature_config(cfg)
    ).astype(np.float32)
    assert np.array_equal(stored, live)


def test_steps_refuse_unmixed_workdir(tmp_path, corpus):
    speech_dir, noise_dir = corpus
    cfg_path = str(tmp_path / "c.cfg")
    with open(cfg_path, "w") as fh:
        fh.write(config_text(speech_dir, noise_dir, str(tmp_path / "w")))
    for verb in ("features", "train", "separate", "eval", "oracle",
                 "coherence", "export-figs"):
        assert main([verb, "--config", cfg_path]) == 2, verb


def test_eval_before_separate_fails_cleanly(tmp_path, corpus, capsys):
    speech_dir, noise_dir = corpus
    workdir = str(tmp_path / "w")
    cfg_path = str(tmp_path / "c.cfg")
    with open(cfg_path, "w") as fh:
        fh.write(config_text(speech_dir, noise_dir, workdir))
    assert main(["mix", "--config", cfg_path]) == 0
    assert main(["eval", "--config", cfg_path]) == 2
    assert "separate" in capsys.readouterr().err


def test_digest_mismatch_detected(tmp_path, corpus):
    speech_dir, noise_dir = corpus
    workdir = str(tmp_path / "w")
    cfg_path = str(tmp_path / "c.cfg")
    with open(cfg_path, "w") as fh:
        fh.write(config_text(speech_dir, noise_dir, workdir))
    assert main(["mix", "--config", cfg_path]) == 0
    store = RenderStore(workdir)
    with open(store.manifest_path, "a") as fh:
        fh.write("\n")
    with pytest.raises(StoreStateError, match="rerun mix"):
        load_checked_manifest(store)


def test_manifest_change_clears_derived_outputs(tmp_path, corpus):
    speech_dir, noise_dir = corpus
    workdir = str(tmp_path / "w")
    cfg_path = str(tmp_path / "c.cfg")
    with open(cfg_path, "w") as fh:
        fh.write(config_text(speech_dir, noise_dir, workdir))
    assert main(["mix", "--config", cfg_path]) == 0
    assert main(["features", "--config", cfg_path]) == 0
    scaler = os.path.join(workdir, "models", "scaler.mat")
    assert os.path.exists(scaler)
    # same config, new seed: different manifest, so derived files must go
    assert main(["mix", "--config", cfg_path, "--seed", "99"]) == 0
    assert not os.path.exists(scaler)


def test_remix_same_seed_keeps_rendered_files(tmp_path, corpus):
    speech_dir, noise_dir = corpus
    workdir = str(tmp_path / "w")
    cfg_path = str(tmp_path / "c.cfg")
    with open(cfg_path, "w") as fh:
        fh.write(config_text(speech_dir, noise_dir, workdir))
    assert main(["mix", "--config", cfg_path]) == 0
    store = RenderStore(workdir)
    manifest = Manifest.load(store.manifest_path)
    probe = store.wav_path(manifest.specs[0], "mixture")
    stamp = os.path.getmtime(probe)
    assert main(["mix", "--config", cfg_path]) == 0
    assert os.path.getmtime(probe) == stamp


def test_mix_is_deterministic_across_workdirs(tmp_path, corpus):
    speech_dir, noise_dir = corpus
    texts = []
    for name in ("a", "b"):
        workdir = str(tmp_path / name)
        cfg_path = str(tmp_path / f"{name}.cfg")
        with open(cfg_path, "w") as fh:
            fh.write(config_text(speech_dir, noise_dir, workdir))
        assert main(["mix", "--config", cfg_path]) == 0
        texts.append(open(os.path.join(workdir, "manifest.jsonl")).read())
    assert texts[0] == texts[1]
