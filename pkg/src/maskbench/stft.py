"""Short-time Fourier analysis and overlap-add synthesis.

Analysis applies a periodic Hann window per frame; synthesis overlap-adds
the inverse transforms and normalizes by the overlap-added window sum,
which reconstructs the analyzed span exactly wherever that sum is
nonvanishing.
"""

from dataclasses import dataclass, field

import numpy as np

from .audio import Waveform
from .validation import check_finite

COLA_TOL = 1e-12


class SignalTooShortError(ValueError):
    pass


class ColaViolationError(ValueError):
    """Window/hop pair does not satisfy constant overlap-add."""


def hann_periodic(n):
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


_WINDOWS = {"hann": hann_periodic}


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 320
    hop: int = 160
    fft_size: int = 320
    window: str = "hann"

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len <= self.fft_size):
            raise ValueError(
                f"need 0 < hop <= frame_len <= fft_size, got "
                f"hop={self.hop} frame_len={self.frame_len} fft_size={self.fft_size}"
            )
        if self.window not in _WINDOWS:
            raise ValueError(f"unknown window {self.window!r}")

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1

    def window_values(self):
        return _WINDOWS[self.window](self.frame_len)

    def frame_count(self, n_samples):
        if n_samples < self.frame_len:
            raise SignalTooShortError(
                f"signal too short: {n_samples} samples < one {self.frame_len}-sample frame"
            )
        return 1 + (n_samples - self.frame_len) // self.hop

    def span(self, n_frames):
        """Sample length covered by n_frames overlapping frames."""
        return (n_frames - 1) * self.hop + self.frame_len


@dataclass
class Spectrogram:
    """One-sided complex spectrogram, frames along axis 0."""

    bins: np.ndarray
    config: StftConfig
    sample_rate: int

    def __post_init__(self):
        self.bins = np.asarray(self.bins)
        if self.bins.ndim != 2 or self.bins.shape[1] != self.config.n_bins:
            raise ValueError(
                f"expected (T, {self.config.n_bins}) bins, got {self.bins.shape}"
            )
        check_finite(self.bins, "spectrogram bins")

    @property
    def n_frames(self):
        return self.bins.shape[0]

    @property
    def magnitude(self):
        return np.abs(self.bins)

    @property
    def phase(self):
        return np.angle(self.bins)


def cola_deviation(cfg, n_frames=16):
    """Max relative deviation of the overlap-added window sum over the
    fully overlapped interior; 0 means perfect constant overlap-add."""
    w = cfg.window_values()
    span = cfg.span(n_frames)
    acc = np.zeros(span)
    for t in range(n_frames):
        acc[t * cfg.hop : t * cfg.hop + cfg.frame_len] += w
    interior = acc[cfg.frame_len : span - cfg.frame_len]
    if interior.size == 0:
        return 0.0
    return float(np.abs(interior / interior.mean() - 1.0).max())


def check_cola(cfg):
    dev = cola_deviation(cfg)
    if dev > COLA_TOL:
        raise ColaViolationError(
            f"window {cfg.window!r} with hop {cfg.hop} is not COLA "
            f"(deviation {dev:.3e} > {COLA_TOL:.0e})"
        )


def stft(w, cfg=StftConfig()):
    """Analyze a Waveform into a one-sided complex spectrogram.

    T = 1 + floor((len - frame_len) / hop); samples past the last full
    frame are dropped.
    """
    x = w.samples
    n_frames = cfg.frame_count(len(x))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_len)[:: cfg.hop]
    frames = frames[:n_frames] * cfg.window_values()
    bins = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return Spectrogram(bins, cfg, w.sample_rate)


def istft(spec):
    """Overlap-add synthesis back to a Waveform.

    The inverse transforms are accumulated and divided by the
    overlap-added analysis-window sum.  Samples where that sum sits at
    or below 1e-12 (the window zero at the very first sample) carry no
    recoverable signal and synthesize to 0 rather than being amplified
    by the floor.  Requires a COLA-compliant config.
    """
    cfg = spec.config
    check_cola(cfg)
    frames = np.fft.irfft(spec.bins, n=cfg.fft_size, axis=1)[:, : cfg.frame_len]
    w = cfg.window_values()
    span = cfg.span(spec.n_frames)
    out = np.zeros(span)
    norm = np.zeros(span)
    for t in range(spec.n_frames):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.frame_len)
        out[sl] += frames[t]
        norm[sl] += w
    covered = norm > 1e-12
    out = np.where(covered, out / np.where(covered, norm, 1.0), 0.0)
    return Waveform(out, spec.sample_rate)
