"""Complementary acoustic features for the mask estimator.

Three per-frame feature families are extracted from the noisy mixture on
the same 20 ms / 10 ms grid as the spectrogram targets: a 15-channel
amplitude modulation spectrogram (AMS), RASTA-filtered perceptual linear
prediction cepstra (RASTA-PLP), and mel-frequency cepstral coefficients
(MFCC).  Frames are spliced with a symmetric context window before they
reach the network.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.signal
from sklearn.base import BaseEstimator, TransformerMixin

from .audio import PIPELINE_RATE
from .stft import StftConfig, hann_periodic
from .validation import as_2d_float

MEL_BANDS = 40
MEL_LOG_FLOOR = 1e-10
PREEMPHASIS = 0.97

AMS_DECIMATION = 4
AMS_FRAME = 128           # 32 ms at the 4 kHz envelope rate
AMS_FFT = 256
AMS_BAND_LO = 15.6
AMS_BAND_HI = 400.0

RASTA_NUM = 0.1 * np.array([2.0, 1.0, 0.0, -1.0, -2.0])
RASTA_DEN = np.array([1.0, -0.98])
BAND_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureConfig:
    mfcc_dims: int = 31
    ams_dims: int = 15
    plp_order: int = 12
    context: int = 2
    include_deltas: bool = False

    def __post_init__(self):
        if self.context < 0:
            raise ValueError("context must be >= 0")
        if min(self.mfcc_dims, self.ams_dims, self.plp_order) < 1:
            raise ValueError("feature dimensions must be >= 1")

    @property
    def base_dim(self):
        d = self.ams_dims + (self.plp_order + 1) + self.mfcc_dims
        return 2 * d if self.include_deltas else d

    @property
    def spliced_dim(self):
        return self.base_dim * (2 * self.context + 1)


@dataclass
class NormStats:
    """Per-dimension training mean and std (std floored at 1e-8)."""

    mean: np.ndarray
    std: np.ndarray


def _check_rate(w):
    if w.sample_rate != PIPELINE_RATE:
        raise ValueError(
            f"features expect {PIPELINE_RATE} Hz input, got {w.sample_rate} Hz"
        )


def _frame(x, frame_len, hop):
    n_frames = 1 + (len(x) - frame_len) // hop
    if n_frames < 1:
        raise ValueError("signal too short for one analysis frame")
    return np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop][:n_frames]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_bands, n_bins, sample_rate, fmin=0.0, fmax=None):
    """Triangular unit-peak mel filters over the one-sided FFT bins."""
    if fmax is None:
        fmax = sample_rate / 2.0
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_bands + 2))
    fft_freqs = np.arange(n_bins) * sample_rate / (2.0 * (n_bins - 1))
    fb = np.zeros((n_bands, n_bins))
    for i in range(n_bands):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (fft_freqs - lo) / (center - lo)
        down = (hi - fft_freqs) / (hi - center)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


def extract_mfcc(w, cfg=FeatureConfig(), stft_cfg=StftConfig()):
    """Mel-frequency cepstra on the shared frame grid.

    Pre-emphasis 0.97, Hann window, power spectrum, 40-band mel
    filterbank up to Nyquist, log with a 1e-10 floor, then an orthonormal
    DCT-II keeping cfg.mfcc_dims coefficients (the 0th included).
    """
    _check_rate(w)
    x = w.samples
    emphasized = np.concatenate(([x[0]], x[1:] - PREEMPHASIS * x[:-1]))
    frames = _frame(emphasized, stft_cfg.frame_len, stft_cfg.hop)
    spectra = np.fft.rfft(frames * hann_periodic(stft_cfg.frame_len),
                          n=stft_cfg.fft_size, axis=1)
    power = np.abs(spectra) ** 2
    fb = mel_filterbank(MEL_BANDS, stft_cfg.n_bins, w.sample_rate)
    logmel = np.log(np.maximum(power @ fb.T, MEL_LOG_FLOOR))
    cepstra = scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)
    return cepstra[:, : cfg.mfcc_dims]


def modulation_filterbank(n_bands, n_bins, envelope_rate):
    """Triangular filters with centers log-spaced from 15.6 to 400 Hz."""
    centers = np.geomspace(AMS_BAND_LO, AMS_BAND_HI, n_bands)
    ratio = (AMS_BAND_HI / AMS_BAND_LO) ** (1.0 / (n_bands - 1))
    edges = np.concatenate(([centers[0] / ratio], centers, [centers[-1] * ratio]))
    freqs = np.arange(n_bins) * envelope_rate / (2.0 * (n_bins - 1))
    fb = np.zeros((n_bands, n_bins))
    for i in range(n_bands):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (freqs - lo) / (center - lo)
        down = (hi - freqs) / (hi - center)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


def extract_ams(w, cfg=FeatureConfig(), stft_cfg=StftConfig()):
    """Amplitude modulation spectrogram, one row per STFT frame.

    The full-wave rectified signal is decimated by 4 (4 kHz envelope
    rate); 32 ms envelope frames hop in lockstep with the 10 ms grid and
    are Hann-windowed and Fourier-transformed, after which 15 triangular
    modulation filters summarize the 15.6-400 Hz band.
    """
    _check_rate(w)
    n_frames = stft_cfg.frame_count(len(w))
    envelope = np.abs(w.samples)[::AMS_DECIMATION]
    env_hop = stft_cfg.hop // AMS_DECIMATION
    needed = (n_frames - 1) * env_hop + AMS_FRAME
    if needed > len(envelope):
        envelope = np.pad(envelope, (0, needed - len(envelope)))
    frames = np.lib.stride_tricks.sliding_window_view(envelope, AMS_FRAME)[::env_hop]
    frames = frames[:n_frames]
    spectra = np.fft.rfft(frames * hann_periodic(AMS_FRAME), n=AMS_FFT, axis=1)
    env_rate = w.sample_rate // AMS_DECIMATION
    fb = modulation_filterbank(cfg.ams_dims, AMS_FFT // 2 + 1, env_rate)
    return np.abs(spectra) @ fb.T


def hz_to_bark(f):
    f = np.asarray(f, dtype=np.float64)
    return 7.0 * np.log(f / 650.0 + np.sqrt(1.0 + (f / 650.0) ** 2))


def bark_to_hz(b):
    return 650.0 * np.sinh(np.asarray(b) / 7.0)


def bark_filterbank(n_bins, sample_rate, fmin=20.0):
    nyquist = sample_rate / 2.0
    n_bands = int(np.ceil(hz_to_bark(nyquist)))
    edges = bark_to_hz(
        np.linspace(hz_to_bark(fmin), hz_to_bark(nyquist), n_bands + 2)
    )
    freqs = np.arange(n_bins) * nyquist / (n_bins - 1)
    fb = np.zeros((n_bands, n_bins))
    for i in range(n_bands):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (freqs - lo) / (center - lo)
        down = (hi - freqs) / (hi - center)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


def rasta_filter(log_bands):
    """Band-pass each band trajectory: 0.1(2 + z^-1 - z^-3 - 2z^-4) over
    (1 - 0.98 z^-1), zero initial state.  DC gain is exactly zero."""
    return scipy.signal.lfilter(RASTA_NUM, RASTA_DEN, log_bands, axis=0)


def equal_loudness(freqs_hz):
    fsq = np.asarray(freqs_hz, dtype=np.float64) ** 2
    return (fsq / (fsq + 1.6e5)) ** 2 * ((fsq + 1.44e6) / (fsq + 9.61e6))


def levinson(r):
    """Levinson-Durbin over rows: autocorrelations (T, order+1) in, AR
    coefficients (T, order+1) with a0 = 1 and prediction error (T,) out."""
    r = np.atleast_2d(r)
    order = r.shape[1] - 1
    a = np.zeros_like(r)
    a[:, 0] = 1.0
    err = np.maximum(r[:, 0].copy(), 1e-30)
    for i in range(1, order + 1):
        acc = r[:, i].copy()
        for j in range(1, i):
            acc += a[:, j] * r[:, i - j]
        k = -acc / err
        a_prev = a[:, 1:i][:, ::-1].copy()
        a[:, 1:i] += k[:, None] * a_prev
        a[:, i] = k
        err = np.maximum(err * (1.0 - k**2), 1e-30)
    return a, err


def ar_to_cepstra(a, err, n_ceps):
    """Cepstra of the all-pole model spectrum err / |A|^2."""
    T = a.shape[0]
    c = np.zeros((T, n_ceps))
    c[:, 0] = np.log(err)
    for n in range(1, n_ceps):
        acc = a[:, n].copy() if n < a.shape[1] else np.zeros(T)
        for k in range(1, n):
            if n - k < a.shape[1]:
                acc += (k / n) * c[:, k] * a[:, n - k]
        c[:, n] = -acc
    return c


def extract_rasta_plp(w, cfg=FeatureConfig(), stft_cfg=StftConfig()):
    """RASTA-PLP cepstra on the shared frame grid.

    Bark-scale critical-band power spectrum, log, RASTA band-pass along
    time, exponentiation, equal-loudness weighting with cube-root
    compression, then an order-cfg.plp_order all-pole fit per frame
    (Levinson-Durbin) converted to cfg.plp_order + 1 cepstra.
    """
    _check_rate(w)
    frames = _frame(w.samples, stft_cfg.frame_len, stft_cfg.hop)
    spectra = np.fft.rfft(frames * hann_periodic(stft_cfg.frame_len),
                          n=stft_cfg.fft_size, axis=1)
    power = np.abs(spectra) ** 2
    fb = bark_filterbank(stft_cfg.n_bins, w.sample_rate)
    bands = power @ fb.T
    log_bands = np.log(np.maximum(bands, BAND_LOG_FLOOR))
    filtered = np.exp(rasta_filter(log_bands))

    nyquist = w.sample_rate / 2.0
    n_bands = fb.shape[0]
    centers = bark_to_hz(
        np.linspace(hz_to_bark(20.0), hz_to_bark(nyquist), n_bands + 2)[1:-1]
    )
    auditory = (filtered * equal_loudness(centers)) ** (1.0 / 3.0)

    # Treat the band vector as spectrum samples on [0, pi]; its inverse
    # transform yields the autocorrelation sequence for the AR fit.
    autocorr = np.fft.irfft(auditory, n=2 * (n_bands - 1), axis=1)
    a, err = levinson(autocorr[:, : cfg.plp_order + 1])
    return ar_to_cepstra(a, err, cfg.plp_order + 1)


def delta_features(matrix, span=2):
    """First-order regression deltas over +/-span frames, edge-replicated."""
    m = as_2d_float(matrix)
    idx = np.arange(m.shape[0])
    num = np.zeros_like(m)
    for n in range(1, span + 1):
        ahead = m[np.minimum(idx + n, m.shape[0] - 1)]
        behind = m[np.maximum(idx - n, 0)]
        num += n * (ahead - behind)
    return num / (2.0 * sum(n * n for n in range(1, span + 1)))


def splice_frames(matrix, context):
    """Concatenate each frame with its +/-context neighbors (edges
    replicate), multiplying the dimensionality by 2*context + 1."""
    m = as_2d_float(matrix)
    if context == 0:
        return m.copy()
    T = m.shape[0]
    idx = np.arange(T)
    parts = [m[np.clip(idx + off, 0, T - 1)] for off in range(-context, context + 1)]
    return np.hstack(parts)


def assemble_feature_vector(parts, cfg=FeatureConfig()):
    """Concatenate per-frame feature blocks, append deltas if configured,
    then splice the context window."""
    mats = [as_2d_float(p) for p in parts]
    T = mats[0].shape[0]
    for m in mats:
        if m.shape[0] != T:
            raise ValueError(
                f"feature blocks disagree on frame count: {m.shape[0]} vs {T}"
            )
    base = np.hstack(mats)
    if cfg.include_deltas:
        base = np.hstack([base] + [delta_features(m) for m in mats])
    return splice_frames(base, cfg.context)


def extract_features(w, cfg=FeatureConfig(), stft_cfg=StftConfig()):
    """Full AMS + RASTA-PLP + MFCC feature matrix, spliced, one row per
    STFT frame of the input."""
    parts = [
        extract_ams(w, cfg, stft_cfg),
        extract_rasta_plp(w, cfg, stft_cfg),
        extract_mfcc(w, cfg, stft_cfg),
    ]
    return assemble_feature_vector(parts, cfg)


class FeatureExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer from Waveforms to spliced feature matrices."""

    def __init__(self, mfcc_dims=31, ams_dims=15, plp_order=12, context=2,
                 include_deltas=False):
        self.mfcc_dims = mfcc_dims
        self.ams_dims = ams_dims
        self.plp_order = plp_order
        self.context = context
        self.include_deltas = include_deltas

    def _config(self):
        return FeatureConfig(
            mfcc_dims=self.mfcc_dims,
            ams_dims=self.ams_dims,
            plp_order=self.plp_order,
            context=self.context,
            include_deltas=self.include_deltas,
        )

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        cfg = self._config()
        if hasattr(X, "samples"):
            return extract_features(X, cfg)
        return [extract_features(w, cfg) for w in X]


class FeatureScaler(BaseEstimator, TransformerMixin):
    """Zero-mean unit-variance scaling fitted on training features only."""

    def __init__(self, std_floor=1e-8):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        X = as_2d_float(X)
        self.mean_ = X.mean(axis=0)
        self.std_ = np.maximum(X.std(axis=0), self.std_floor)
        return self

    def transform(self, X):
        X = as_2d_float(X)
        return (X - self.mean_) / self.std_

    @property
    def stats(self):
        return NormStats(self.mean_.copy(), self.std_.copy())


def normalize_features(train, apply_to, stats=None):
    """Normalize apply_to with stats fitted on train (or the given stats);
    returns the normalized matrix and the stats used."""
    if stats is None:
        scaler = FeatureScaler().fit(train)
        stats = scaler.stats
    normed = (as_2d_float(apply_to) - stats.mean) / stats.std
    return normed, stats


# --- binary feature/matrix records -------------------------------------
#
# Layout: uint32 dims, uint32 frames, then frames*dims little-endian
# float32 values, row-major.

RECORD_HEADER = struct.Struct("<II")


def write_matrix_record(path, matrix):
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(RECORD_HEADER.pack(m.shape[1], m.shape[0]))
        fh.write(m.tobytes())


def read_matrix_record(path):
    with open(path, "rb") as fh:
        header = fh.read(RECORD_HEADER.size)
        if len(header) < RECORD_HEADER.size:
            raise ValueError(f"{path}: truncated record header")
        dims, frames = RECORD_HEADER.unpack(header)
        payload = fh.read(4 * dims * frames)
        if len(payload) < 4 * dims * frames:
            raise ValueError(f"{path}: truncated record payload")
        return np.frombuffer(payload, dtype="<f4").reshape(frames, dims).copy()
