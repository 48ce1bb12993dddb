"""End-to-end drivers behind the command-line verbs.

Each step reads only what earlier steps wrote into the workdir, checks
the manifest digest so stale stores are caught instead of silently
reused, and leaves flat files (wav, mat records, CSV, JSONL) that later
steps and outside tools can inspect.
"""

import hashlib
import os
import shutil

import numpy as np

from .audio import Waveform, wav_read, wav_write
from .config import render_config
from .dataset import (
    Manifest,
    RenderStore,
    build_manifest,
    load_rendered_signals,
    render_dataset,
    render_mixture,
)
from .export import (
    coherence_to_csv,
    history_to_csv,
    mask_to_csv,
    matrix_to_pgm,
    report_to_csv,
    results_to_jsonl,
    spectrogram_to_pgm,
)
from .features import (
    FeatureConfig,
    extract_features,
    read_matrix_record,
    write_matrix_record,
)
from .masks import MaskParams, oracle_mask, spectral_coherence
from .metrics import (
    aggregate_results,
    apply_and_reconstruct,
    evaluate_system,
)
from .network import (
    ModelConfig,
    TrainConfig,
    infer_mask,
    init_model,
    load_checkpoint,
    output_activation_for,
    save_checkpoint,
    train_network,
)
from .stft import StftConfig, stft


class StoreStateError(ValueError):
    """The workdir is missing, stale, or out of step with its manifest."""


def _digest(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def feature_config(cfg):
    return FeatureConfig(
        mfcc_dims=cfg.mfcc_dims,
        ams_dims=cfg.ams_dims,
        plp_order=cfg.plp_order,
        context=cfg.context,
        include_deltas=cfg.include_deltas,
    )


def load_checked_manifest(store):
    if not os.path.exists(store.manifest_path):
        raise StoreStateError(
            f"no manifest under {store.workdir}; run mix first"
        )
    with open(store.manifest_path) as fh:
        text = fh.read()
    if not os.path.exists(store.digest_path):
        raise StoreStateError(f"missing {store.digest_path}; run mix first")
    with open(store.digest_path) as fh:
        recorded = fh.read().strip()
    if recorded != _digest(text):
        raise StoreStateError(
            f"manifest digest mismatch under {store.workdir}; rerun mix"
        )
    return Manifest.load(store.manifest_path)


def run_mix(cfg, log=print):
    """Build (or rebuild) the manifest and render every mixture."""
    store = RenderStore(cfg.workdir)
    manifest = build_manifest(
        cfg.speech_dir,
        cfg.noise_dir,
        cfg.snrs,
        slices_per_utt=cfg.slices_per_utt,
        seed=cfg.seed,
        test_fraction=cfg.test_fraction,
    )
    new_text = manifest.to_text()
    if os.path.exists(store.manifest_path):
        with open(store.manifest_path) as fh:
            if fh.read() != new_text:
                log("manifest changed; clearing derived outputs")
                for sub in ("render", "separated", "models", "reports", "figures"):
                    shutil.rmtree(os.path.join(cfg.workdir, sub),
                                  ignore_errors=True)
    os.makedirs(cfg.workdir, exist_ok=True)
    manifest.save(store.manifest_path)
    with open(store.digest_path, "w") as fh:
        fh.write(_digest(new_text) + "\n")
    with open(os.path.join(cfg.workdir, "config.resolved"), "w") as fh:
        fh.write(render_config(cfg))
    rendered = render_dataset(manifest, store, kinds=cfg.kinds)
    log(
        f"manifest: {len(manifest.train_specs)} train + "
        f"{len(manifest.test_specs)} test mixtures "
        f"({manifest.n_speech_train}+{manifest.n_speech_test} utterances, "
        f"{manifest.n_noises} noises, {len(manifest.snrs)} SNRs); "
        f"rendered {rendered}"
    )
    return manifest


def run_features(cfg, log=print):
    """Extract features for every mixture and fit the training scaler."""
    store = RenderStore(cfg.workdir)
    manifest = load_checked_manifest(store)
    fcfg = feature_config(cfg)
    for spec in manifest.specs:
        path = store.features_path(spec)
        if os.path.exists(path):
            continue
        mixture = wav_read(store.wav_path(spec, "mixture"))
        write_matrix_record(path, extract_features(mixture, fcfg))
    train_parts = [
        read_matrix_record(store.features_path(s)).astype(np.float64)
        for s in manifest.train_specs
    ]
    if not train_parts:
        raise StoreStateError("no train mixtures; cannot fit the scaler")
    X = np.vstack(train_parts)
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), 1e-8)
    write_matrix_record(store.scaler_path(), np.vstack([mean, std]))
    log(
        f"features: {X.shape[1]} dims, {X.shape[0]} train frames over "
        f"{len(manifest.train_specs)} mixtures; scaler saved"
    )
    return X.shape


def _load_scaler(store):
    path = store.scaler_path()
    if not os.path.exists(path):
        raise StoreStateError(f"no scaler at {path}; run features first")
    stats = read_matrix_record(path).astype(np.float64)
    return stats[0], stats[1]


def _normalized_features(store, spec, mean, std):
    x = read_matrix_record(store.features_path(spec)).astype(np.float64)
    return ((x - mean) / std).astype(np.float32)


def run_train(cfg, log=print):
    """Fit one network per configured target kind."""
    store = RenderStore(cfg.workdir)
    manifest = load_checked_manifest(store)
    mean, std = _load_scaler(store)
    X = np.vstack([
        _normalized_features(store, s, mean, std) for s in manifest.train_specs
    ])
    for kind in cfg.kinds:
        Y = np.vstack([
            read_matrix_record(store.target_path(s, kind))
            for s in manifest.train_specs
        ])
        dims = (
            (X.shape[1],)
            + (cfg.hidden_units,) * cfg.hidden_layers
            + (Y.shape[1],)
        )
        model = init_model(ModelConfig(
            layer_dims=dims,
            output_activation=output_activation_for(kind),
            dropout_rate=cfg.dropout_rate,
            seed=cfg.seed,
        ))
        model, history = train_network(model, X, Y, TrainConfig(
            batch_size=cfg.batch_size,
            learning_rate=cfg.learning_rate,
            epochs=cfg.epochs,
            validation_fraction=cfg.validation_fraction,
            seed=cfg.seed,
        ))
        save_checkpoint(store.checkpoint_path(kind), model)
        history_to_csv(store.history_path(kind), history)
        log(
            f"train {kind}: {X.shape[0]} frames, dims {'x'.join(map(str, dims))}, "
            f"best epoch {model.epochs_seen}, train mse {model.train_mse:.6g}, "
            f"val mse {model.val_mse:.6g}"
        )
    return manifest


def _edge_fade(w, n):
    """Ramp the first and last n samples of a waveform to zero.

    Masked resyntheses are ill-conditioned over the partial-overlap
    edges; written files get a short fade so they do not open or close
    on a click.
    """
    ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(n) + 0.5) / n)
    samples = w.samples.copy()
    samples[:n] *= ramp
    samples[len(samples) - n:] *= ramp[::-1]
    return Waveform(samples, w.sample_rate)


def run_separate(cfg, stft_cfg=StftConfig(), params=MaskParams(), log=print):
    """Apply each trained model to the test mixtures and write wavs."""
    store = RenderStore(cfg.workdir)
    manifest = load_checked_manifest(store)
    mean, std = _load_scaler(store)
    models = {}
    for kind in cfg.kinds:
        path = store.checkpoint_path(kind)
        if not os.path.exists(path):
            raise StoreStateError(f"no checkpoint for {kind!r}; run train first")
        models[kind] = load_checkpoint(path)
    count = 0
    for spec in manifest.test_specs:
        mixture = wav_read(store.wav_path(spec, "mixture"))
        Y = stft(mixture, stft_cfg)
        feats = _normalized_features(store, spec, mean, std)
        for kind in cfg.kinds:
            mask = infer_mask(models[kind], feats, kind, params)
            separated, _ = apply_and_reconstruct(mask, Y, len(mixture))
            faded = _edge_fade(separated, stft_cfg.frame_len - stft_cfg.hop)
            wav_write(store.separated_path(spec, kind), faded)
            count += 1
    log(f"separated {count} wavs over {len(manifest.test_specs)} test mixtures")
    return count


def _write_reports(store, results, basename, log):
    rows = aggregate_results(results)
    report_path = os.path.join(store.reports_dir, f"{basename}.csv")
    report_to_csv(report_path, rows)
    results_to_jsonl(
        os.path.join(store.reports_dir, f"{basename}.jsonl"), results
    )
    for row in rows:
        if row["metric"] in ("stoi", "si_sdr"):
            log(
                f"{row['noise']} @ {row['snr_db']:+g} dB {row['target']:>8} "
                f"{row['metric']}: {row['mean']:.4f} (std {row['std']:.4f}, "
                f"n={row['n']})"
            )
    log(f"wrote {report_path}")
    return rows


def run_eval(cfg, log=print):
    """Score separated outputs against the clean references."""
    store = RenderStore(cfg.workdir)
    manifest = load_checked_manifest(store)
    try:
        results = evaluate_system(manifest, store, cfg.kinds, mode="separated")
    except FileNotFoundError as exc:
        raise StoreStateError(str(exc)) from None
    return _write_reports(store, results, "report", log)


def run_oracle(cfg, log=print):
    """Score ideal-mask separation, the ceiling the models chase."""
    store = RenderStore(cfg.workdir)
    manifest = load_checked_manifest(store)
    results = evaluate_system(manifest, store, cfg.kinds, mode="oracle")
    return _write_reports(store, results, "oracle_report", log)


def run_coherence(cfg, stft_cfg=StftConfig(), log=print):
    """Per-noise speech-noise coherence averaged over train utterances."""
    store = RenderStore(cfg.workdir)
    manifest = load_checked_manifest(store)
    cache = {}
    by_noise = {}
    seen = set()
    for spec in manifest.train_specs:
        key = (spec.noise_path, spec.speech_path)
        if key in seen:
            continue
        seen.add(key)
        s, n, _, _ = render_mixture(spec, manifest.sample_rate, cache)
        coh = spectral_coherence(s, n, stft_cfg)
        by_noise.setdefault(spec.noise_path, []).append(coh)
    columns = {}
    for noise_path, vectors in by_noise.items():
        stem = os.path.splitext(os.path.basename(noise_path))[0]
        columns[stem] = np.mean(vectors, axis=0)
    freqs = np.arange(stft_cfg.n_bins) * manifest.sample_rate / stft_cfg.fft_size
    path = os.path.join(store.reports_dir, "coherence.csv")
    coherence_to_csv(path, freqs, columns)
    log(f"coherence over {len(columns)} noises -> {path}")
    return columns


def run_export_figs(cfg, stft_cfg=StftConfig(), params=MaskParams(), log=print):
    """Render figure-style images for the first test mixture: clean and
    noisy spectrograms, every oracle mask, and any separated outputs."""
    store = RenderStore(cfg.workdir)
    manifest = load_checked_manifest(store)
    if not manifest.test_specs:
        raise StoreStateError("manifest has no test mixtures")
    spec = manifest.test_specs[0]
    s, n, y = load_rendered_signals(store, spec)
    S, N, Y = stft(s, stft_cfg), stft(n, stft_cfg), stft(y, stft_cfg)
    fig_dir = store.figures_dir
    spectrogram_to_pgm(os.path.join(fig_dir, "clean.pgm"), S)
    spectrogram_to_pgm(os.path.join(fig_dir, "mixture.pgm"), Y)
    written = ["clean.pgm", "mixture.pgm"]
    for kind in cfg.kinds:
        mask = oracle_mask(kind, S, N, Y, params)
        if np.iscomplexobj(mask.values):
            matrix_to_pgm(
                os.path.join(fig_dir, f"mask_{kind}_real.pgm"), mask.values.real
            )
            matrix_to_pgm(
                os.path.join(fig_dir, f"mask_{kind}_imag.pgm"), mask.values.imag
            )
            mask_to_csv(
                os.path.join(fig_dir, f"mask_{kind}_real.csv"), mask.values.real
            )
            written += [f"mask_{kind}_real.pgm", f"mask_{kind}_imag.pgm"]
        else:
            matrix_to_pgm(os.path.join(fig_dir, f"mask_{kind}.pgm"), mask.values)
            mask_to_csv(os.path.join(fig_dir, f"mask_{kind}.csv"), mask.values)
            written.append(f"mask_{kind}.pgm")
        sep_path = store.separated_path(spec, kind)
        if os.path.exists(sep_path):
            spectrogram_to_pgm(
                os.path.join(fig_dir, f"separated_{kind}.pgm"),
                stft(wav_read(sep_path), stft_cfg),
            )
            written.append(f"separated_{kind}.pgm")
    log(f"figures for {spec.id}: {', '.join(written)}")
    return written
