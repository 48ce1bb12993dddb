"""Synthetic speech and noise for the test suite.

Real recordings are too heavy to ship with tests, so utterances are
synthesized: a glottal pulse train with vibrato drives a cascade of
formant resonators, gated by a syllabic envelope with pauses, plus a
touch of breath noise.  The result has the harmonic structure, spectral
tilt, and temporal modulation that the features and the intelligibility
metric key on.
"""

import os

import numpy as np
import scipy.signal

from maskbench.audio import Waveform, wav_write

SR = 16000


def _resonator(x, fc, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    theta = 2.0 * np.pi * fc / sr
    b = [1.0 - r]
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    return scipy.signal.lfilter(b, a, x)


def _syllabic_envelope(rng, n, sr):
    env = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.05) * sr)
    while pos < n:
        seg_len = int(rng.uniform(0.12, 0.35) * sr)
        gap_len = int(rng.uniform(0.04, 0.12) * sr)
        end = min(pos + seg_len, n)
        seg = np.ones(end - pos)
        ramp = min(int(0.02 * sr), len(seg) // 2)
        if ramp > 0:
            r = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
            seg[:ramp] *= r
            seg[len(seg) - ramp :] *= r[::-1]
        env[pos:end] = seg
        pos = end + gap_len
    return env


def synth_speech(rng, seconds=2.0, sr=SR):
    """One synthetic utterance, peak-normalized to 0.5.

    Formants are redrawn for every syllable, the way vowels move in
    running speech; a single static cascade would leave band envelopes
    almost untouched by additive noise and make separation look easier
    than it is.
    """
    n = int(seconds * sr)
    t = np.arange(n) / sr
    f0 = rng.uniform(90.0, 220.0)
    vibrato = 1.0 + 0.04 * np.sin(
        2.0 * np.pi * rng.uniform(3.0, 6.0) * t + rng.uniform(0.0, 2.0 * np.pi)
    )
    phase = np.cumsum(f0 * vibrato) / sr
    pulses = np.diff(np.floor(phase), prepend=0.0)

    env = _syllabic_envelope(rng, n, sr)
    active = env > 0.0
    edges = np.flatnonzero(np.diff(active.astype(int)))
    bounds = [0] + (edges + 1).tolist() + [n]
    warmup = 400  # filter settling lead-in, discarded after filtering
    x = np.zeros(n)
    for a, b in zip(bounds[:-1], bounds[1:]):
        if not active[a:b].any():
            continue
        seg = pulses[max(0, a - warmup):b]
        for fc, bw in [
            (rng.uniform(300.0, 900.0), rng.uniform(60.0, 110.0)),
            (rng.uniform(900.0, 2400.0), rng.uniform(90.0, 160.0)),
            (rng.uniform(2400.0, 3600.0), rng.uniform(130.0, 220.0)),
        ]:
            seg = _resonator(seg, fc, bw, sr)
        x[a:b] = seg[len(seg) - (b - a):]
    x = x * env
    rms = np.sqrt(np.mean(x**2)) + 1e-12
    x = x + 10.0 ** (-30.0 / 20.0) * rms * rng.normal(0.0, 1.0, n)
    peak = np.max(np.abs(x)) + 1e-12
    return Waveform(0.5 * x / peak, sr)


def white_noise(rng, seconds, sr=SR):
    x = rng.normal(0.0, 1.0, int(seconds * sr))
    return Waveform(0.1 * x / np.sqrt(np.mean(x**2)), sr)


def speech_shaped_noise(rng, seconds, sr=SR):
    """White noise colored by a fixed formant-like cascade."""
    x = rng.normal(0.0, 1.0, int(seconds * sr))
    for fc, bw in ((500.0, 120.0), (1400.0, 220.0), (2600.0, 380.0)):
        x = _resonator(x, fc, bw, sr)
    return Waveform(0.1 * x / np.sqrt(np.mean(x**2)), sr)


def babble_noise(rng, seconds, sr=SR, voices=2, floor=0.1):
    """Speech-shaped noise streams gated at syllabic rate and summed.

    With few voices the sum keeps deep level fluctuations, the
    non-stationary regime where time-frequency masking pays off most.
    """
    n = int(seconds * sr)
    total = np.zeros(n)
    for _ in range(voices):
        x = rng.normal(0.0, 1.0, n)
        for fc, bw in ((500.0, 120.0), (1400.0, 220.0), (2600.0, 380.0)):
            x = _resonator(x, fc, bw, sr)
        total += x * (floor + (1.0 - floor) * _syllabic_envelope(rng, n, sr))
    return Waveform(0.1 * total / np.sqrt(np.mean(total**2)), sr)


NOISE_MAKERS = {
    "white": white_noise,
    "shaped": speech_shaped_noise,
    "babble": babble_noise,
}


def make_corpus(root, n_train, n_test, seed=0, utt_seconds=2.0,
                noise_seconds=None, sr=SR, noises=("white", "shaped")):
    """Write a small split corpus: speech/train, speech/test, noise/.

    Returns (speech_dir, noise_dir).  Noise recordings are long enough
    that both halves can host any utterance.
    """
    rng = np.random.default_rng(seed)
    if noise_seconds is None:
        noise_seconds = 3.0 * utt_seconds
    speech_dir = os.path.join(root, "speech")
    noise_dir = os.path.join(root, "noise")
    for i in range(n_train):
        wav_write(
            os.path.join(speech_dir, "train", f"utt{i:03d}.wav"),
            synth_speech(rng, utt_seconds, sr),
        )
    for i in range(n_test):
        wav_write(
            os.path.join(speech_dir, "test", f"utt{i:03d}.wav"),
            synth_speech(rng, utt_seconds, sr),
        )
    for name in noises:
        wav_write(os.path.join(noise_dir, f"{name}.wav"),
                  NOISE_MAKERS[name](rng, noise_seconds, sr))
    return speech_dir, noise_dir
