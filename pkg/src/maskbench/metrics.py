"""Objective quality measures and the test-set evaluation driver.

The intelligibility score follows the short-time band-correlation
recipe: one-third-octave band envelopes at 10 kHz, 384 ms sliding
segments, clipped and normalized correlations averaged over bands and
segments.  SNR-style measures and spectral error round out the table.
"""

import os
from dataclasses import asdict, dataclass

import numpy as np

from .audio import Waveform, resample, wav_read
from .dataset import load_rendered_signals
from .masks import MaskParams, apply_complex_mask, apply_real_mask, oracle_mask
from .stft import StftConfig, hann_periodic, istft, stft
from .validation import check_same_shape

STOI_RATE = 10000
STOI_FRAME = 256
STOI_HOP = 128
STOI_FFT = 512
STOI_BANDS = 15
STOI_LOWEST_CF = 150.0
STOI_SEGMENT = 30
STOI_DYN_RANGE_DB = 40.0
STOI_CLIP_DB = -15.0

SNR_CAP_DB = 100.0


def _match_length(x, n):
    if len(x) >= n:
        return x[:n]
    return np.concatenate([x, np.zeros(n - len(x))])


def _third_octave_bands(n_bins):
    freqs = np.arange(n_bins) * STOI_RATE / STOI_FFT
    centers = STOI_LOWEST_CF * 2.0 ** (np.arange(STOI_BANDS) / 3.0)
    bands = np.zeros((STOI_BANDS, n_bins))
    for k, cf in enumerate(centers):
        lo, hi = cf * 2.0 ** (-1.0 / 6.0), cf * 2.0 ** (1.0 / 6.0)
        bands[k] = (freqs >= lo) & (freqs < hi)
    return bands


def stoi(clean, processed):
    """Short-time objective intelligibility of processed against clean.

    Both signals are resampled to 10 kHz and the processed one is
    trimmed or zero-padded to the clean length.  Frames whose clean
    energy sits more than 40 dB below the loudest frame are discarded
    before band analysis.  Returns a score clamped to [0, 1].
    """
    x = resample(clean, STOI_RATE).samples
    y = _match_length(resample(processed, STOI_RATE).samples, len(x))
    if len(x) < STOI_FRAME:
        raise ValueError("signal too short for one analysis frame")
    window = hann_periodic(STOI_FRAME)
    frames_x = np.lib.stride_tricks.sliding_window_view(x, STOI_FRAME)[::STOI_HOP]
    frames_y = np.lib.stride_tricks.sliding_window_view(y, STOI_FRAME)[::STOI_HOP]
    frames_x = frames_x * window
    frames_y = frames_y * window

    energy_db = 20.0 * np.log10(np.linalg.norm(frames_x, axis=1) + 1e-300)
    keep = energy_db > energy_db.max() - STOI_DYN_RANGE_DB
    if not np.any(keep):
        raise ValueError("no speech-active frames")
    frames_x, frames_y = frames_x[keep], frames_y[keep]
    if frames_x.shape[0] < STOI_SEGMENT:
        raise ValueError(
            f"too few speech-active frames: {frames_x.shape[0]} < {STOI_SEGMENT}"
        )

    spec_x = np.abs(np.fft.rfft(frames_x, n=STOI_FFT, axis=1)) ** 2
    spec_y = np.abs(np.fft.rfft(frames_y, n=STOI_FFT, axis=1)) ** 2
    bands = _third_octave_bands(spec_x.shape[1])
    env_x = np.sqrt(spec_x @ bands.T)
    env_y = np.sqrt(spec_y @ bands.T)

    seg_x = np.lib.stride_tricks.sliding_window_view(env_x, STOI_SEGMENT, axis=0)
    seg_y = np.lib.stride_tricks.sliding_window_view(env_y, STOI_SEGMENT, axis=0)
    # seg_*: (n_segments, n_bands, segment_len)
    norm_x = np.linalg.norm(seg_x, axis=2)
    norm_y = np.linalg.norm(seg_y, axis=2)
    alpha = norm_x / (norm_y + 1e-300)
    clip_bound = (1.0 + 10.0 ** (STOI_CLIP_DB / 20.0)) * seg_x
    y_prime = np.minimum(alpha[:, :, None] * seg_y, clip_bound)

    xc = seg_x - seg_x.mean(axis=2, keepdims=True)
    yc = y_prime - y_prime.mean(axis=2, keepdims=True)
    denom = np.linalg.norm(xc, axis=2) * np.linalg.norm(yc, axis=2)
    corr = (xc * yc).sum(axis=2) / (denom + 1e-300)
    return float(np.clip(corr.mean(), 0.0, 1.0))


def snr_metrics(clean, processed):
    """Output SNR and scale-invariant SDR in dB, both capped at 100.

    The scale-invariant measure projects the processed signal onto the
    clean one first, so a pure gain change does not move it.  Degenerate
    zero-error cases return the cap; zero-signal ratios floor at -100.
    """
    c = clean.samples
    p = _match_length(processed.samples, len(c))
    energy = float(np.dot(c, c))
    if energy == 0.0:
        raise ValueError("silent reference, SNR undefined")

    def _ratio_db(num, den):
        if den == 0.0:
            return SNR_CAP_DB
        if num == 0.0:
            return -SNR_CAP_DB
        return min(10.0 * np.log10(num / den), SNR_CAP_DB)

    err = c - p
    snr_out = _ratio_db(energy, float(np.dot(err, err)))
    alpha = float(np.dot(c, p)) / energy
    target = alpha * c
    resid = p - target
    si_sdr = _ratio_db(float(np.dot(target, target)), float(np.dot(resid, resid)))
    return {"snr_out": snr_out, "si_sdr": si_sdr}


def spectral_mse(S, S_hat):
    """Mean squared complex spectrogram error."""
    check_same_shape(S.bins, S_hat.bins)
    diff = S.bins - S_hat.bins
    return float(np.mean(np.real(diff * np.conj(diff))))


@dataclass
class EvalResult:
    mixture_id: str
    noise_name: str
    snr_db: float
    target_kind: str
    stoi: float
    snr_out: float
    si_sdr: float
    spectral_mse: float

    def to_dict(self):
        return asdict(self)


def apply_and_reconstruct(mask, Y, n_samples):
    """Mask the mixture spectrogram and resynthesize n_samples samples."""
    if np.iscomplexobj(mask.values):
        S_hat = apply_complex_mask(mask, Y)
    else:
        S_hat = apply_real_mask(mask, Y)
    w = istft(S_hat)
    return Waveform(_match_length(w.samples, n_samples), Y.sample_rate), S_hat


def evaluate_mixture(spec, clean, processed, S, S_hat, target_kind):
    scores = snr_metrics(clean, processed)
    return EvalResult(
        mixture_id=spec.id,
        noise_name=os.path.splitext(os.path.basename(spec.noise_path))[0],
        snr_db=spec.snr_db,
        target_kind=target_kind,
        stoi=stoi(clean, processed),
        snr_out=scores["snr_out"],
        si_sdr=scores["si_sdr"],
        spectral_mse=spectral_mse(S, S_hat),
    )


def scoring_interior(w, stft_cfg=StftConfig()):
    """Cut a waveform down to the fully-overlapped synthesis span.

    The first and last frame_len - hop samples see only a partial stack
    of analysis windows, so resynthesis there is ill-conditioned for any
    spectrogram that is not an exact STFT.  Waveform scores are taken on
    the interior, where the overlap-add is complete.
    """
    trim = stft_cfg.frame_len - stft_cfg.hop
    if len(w.samples) <= 2 * trim:
        raise ValueError(
            f"waveform of {len(w.samples)} samples is too short to score "
            f"(needs more than {2 * trim})"
        )
    return Waveform(w.samples[trim:-trim], w.sample_rate)


def evaluate_system(manifest, store, kinds, mode="separated",
                    stft_cfg=StftConfig(), params=MaskParams(),
                    include_mixture=True):
    """Score the test split.

    mode "separated" reads previously written enhanced wavs; mode
    "oracle" computes ideal masks from the rendered speech and noise and
    applies them on the fly.  The unprocessed mixture is scored alongside
    unless include_mixture is off.  Waveform metrics are computed over
    the fully-overlapped interior; spectral error uses the whole grid.
    """
    if mode not in ("separated", "oracle"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    results = []
    for spec in manifest.test_specs:
        s, n, y = load_rendered_signals(store, spec)
        S = stft(s, stft_cfg)
        Y = stft(y, stft_cfg)
        s_int = scoring_interior(s, stft_cfg)
        if include_mixture:
            y_int = scoring_interior(y, stft_cfg)
            results.append(evaluate_mixture(spec, s_int, y_int, S, Y, "mixture"))
        for kind in kinds:
            if mode == "oracle":
                N = stft(n, stft_cfg)
                mask = oracle_mask(kind, S, N, Y, params)
                processed, S_hat = apply_and_reconstruct(mask, Y, len(y))
            else:
                path = store.separated_path(spec, kind)
                if not os.path.exists(path):
                    raise FileNotFoundError(
                        f"missing separated output {path}; run separate first"
                    )
                processed = wav_read(path)
                S_hat = stft(processed, stft_cfg)
            p_int = scoring_interior(processed, stft_cfg)
            results.append(evaluate_mixture(spec, s_int, p_int, S, S_hat, kind))
    return results


METRIC_FIELDS = ("stoi", "snr_out", "si_sdr", "spectral_mse")


def aggregate_results(results):
    """Group scores by (noise, snr, target) and emit one row per metric
    with mean, population std, and count."""
    groups = {}
    for r in results:
        groups.setdefault((r.noise_name, r.snr_db, r.target_kind), []).append(r)
    rows = []
    for (noise, snr_db, target) in sorted(groups):
        batch = groups[(noise, snr_db, target)]
        for metric in METRIC_FIELDS:
            values = np.array([getattr(r, metric) for r in batch], dtype=np.float64)
            rows.append({
                "noise": noise,
                "snr_db": snr_db,
                "target": target,
                "metric": metric,
                "mean": float(values.mean()),
                "std": float(values.std()),
                "n": int(values.size),
            })
    return rows
