"""Waveform container, WAV file I/O, and sample-rate conversion.

All pipeline audio is mono float64 in [-1, 1].  Files are read through
scipy's RIFF reader and validated here; writing always emits 16-bit PCM.
"""

import os
from dataclasses import dataclass
from math import gcd

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .validation import as_1d_float

PIPELINE_RATE = 16000


class WavFormatError(ValueError):
    """Unreadable or unsupported WAV file."""


@dataclass
class Waveform:
    """Mono time-domain signal: samples (float64) plus sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = as_1d_float(self.samples, "samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate

    def rms(self):
        return float(np.sqrt(np.mean(self.samples**2))) if len(self) else 0.0


def wav_read(path):
    """Read a RIFF/WAVE file as a mono Waveform normalized to [-1, 1].

    PCM16 and IEEE float32/float64 payloads are accepted; stereo is
    downmixed by averaging the channels.
    """
    try:
        rate, data = scipy.io.wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise WavFormatError(f"{path}: malformed or unreadable WAV ({exc})") from exc
    if data.size == 0:
        raise WavFormatError(f"{path}: zero-length data chunk")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported codec (sample dtype {data.dtype}); "
            "expected 16-bit PCM or IEEE float"
        )
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    elif samples.ndim != 1:
        raise WavFormatError(f"{path}: unsupported channel layout {data.shape}")
    return Waveform(samples, int(rate))


def wav_write(path, w):
    """Write a Waveform as mono 16-bit PCM, little-endian.

    Samples are clipped to [-1, 1] and quantized with rounding, so a
    write/read round trip is exact to within one 16-bit LSB.
    """
    x = np.clip(w.samples, -1.0, 1.0)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    scipy.io.wavfile.write(path, w.sample_rate, pcm)


def resample(w, target_rate):
    """Windowed-sinc polyphase resampling to target_rate.

    Output length is round(len * target / source); the anti-alias filter
    cuts off at the lower of the two Nyquist frequencies (Kaiser window,
    stopband well below -60 dB).
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)

    g = gcd(w.sample_rate, int(target_rate))
    up, down = int(target_rate) // g, w.sample_rate // g
    out_len = int(round(len(w) * target_rate / w.sample_rate))

    # Half-length chosen as a multiple of `down` so the filter group delay
    # lands exactly on an output sample.
    half = down * int(np.ceil(32 * max(up, down) / down))
    taps = scipy.signal.firwin(
        2 * half + 1,
        min(w.sample_rate, target_rate) / 2.0,
        fs=w.sample_rate * up,
        window=("kaiser", 12.0),
    )
    # Zero-stuffing by `up` divides the passband gain by `up`; compensate.
    y = scipy.signal.upfirdn(taps * up, w.samples, up=up, down=down)
    y = y[half // down :]
    if len(y) < out_len:
        y = np.pad(y, (0, out_len - len(y)))
    return Waveform(y[:out_len], int(target_rate))
