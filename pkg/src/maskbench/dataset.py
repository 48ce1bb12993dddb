"""Corpus enumeration, SNR mixing, and the on-disk render store.

A manifest pins down every mixture in the experiment before any audio is
written: which utterance, which noise, the noise slice offset, the SNR,
and the exact noise gain.  Rendering is then a pure function of the
manifest, so reruns with the same seed produce byte-identical stores.
"""

import json
import os
import re
from dataclasses import dataclass

import numpy as np

from .audio import PIPELINE_RATE, Waveform, resample, wav_read, wav_write
from .masks import MaskParams, compute_mask
from .stft import StftConfig, stft

MASK_KINDS = ("ibm", "irm", "cirm", "psm", "orm")


class CorpusError(ValueError):
    """Raised when the corpus layout cannot support the requested design."""


@dataclass
class MixtureSpec:
    """One planned mixture: everything needed to render it exactly."""

    id: str
    split: str
    speech_path: str
    noise_path: str
    noise_offset: int
    snr_db: float
    noise_gain: float
    seed_used: int

    def to_json_line(self):
        d = {
            "record": "mixture",
            "id": self.id,
            "split": self.split,
            "speech_path": self.speech_path,
            "noise_path": self.noise_path,
            "noise_offset": self.noise_offset,
            "snr_db": self.snr_db,
            "noise_gain": "__GAIN__",
            "seed_used": self.seed_used,
        }
        # full-precision gain so the render step reproduces the mixture bitwise
        return json.dumps(d).replace('"__GAIN__"', format(self.noise_gain, ".17g"))

    @classmethod
    def from_json(cls, d):
        return cls(
            id=d["id"],
            split=d["split"],
            speech_path=d["speech_path"],
            noise_path=d["noise_path"],
            noise_offset=int(d["noise_offset"]),
            snr_db=float(d["snr_db"]),
            noise_gain=float(d["noise_gain"]),
            seed_used=int(d["seed_used"]),
        )


@dataclass
class Manifest:
    sample_rate: int
    seed: int
    snrs: tuple
    slices_per_utt: int
    n_speech_train: int
    n_speech_test: int
    n_noises: int
    specs: list

    @property
    def train_specs(self):
        return [s for s in self.specs if s.split == "train"]

    @property
    def test_specs(self):
        return [s for s in self.specs if s.split == "test"]

    def to_text(self):
        meta = {
            "record": "meta",
            "sample_rate": self.sample_rate,
            "seed": self.seed,
            "snrs": list(self.snrs),
            "slices_per_utt": self.slices_per_utt,
            "n_speech_train": self.n_speech_train,
            "n_speech_test": self.n_speech_test,
            "n_noises": self.n_noises,
        }
        lines = [json.dumps(meta)] + [s.to_json_line() for s in self.specs]
        return "\n".join(lines) + "\n"

    def save(self, path):
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        specs = []
        meta = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                if d.get("record") == "meta":
                    meta = d
                elif d.get("record") == "mixture":
                    specs.append(MixtureSpec.from_json(d))
        if meta is None:
            raise ValueError(f"{path}: no meta record found")
        return cls(
            sample_rate=int(meta["sample_rate"]),
            seed=int(meta["seed"]),
            snrs=tuple(float(s) for s in meta["snrs"]),
            slices_per_utt=int(meta["slices_per_utt"]),
            n_speech_train=int(meta["n_speech_train"]),
            n_speech_test=int(meta["n_speech_test"]),
            n_noises=int(meta["n_noises"]),
            specs=specs,
        )


def train_spec_count(n_utts, slices_per_utt, n_noises, n_snrs):
    """Planned train-mixture count for a fully crossed design."""
    return n_utts * slices_per_utt * n_noises * n_snrs


def mixing_gain(speech, noise_slice, snr_db):
    """Gain applied to the noise slice so the mixture hits snr_db exactly."""
    rs = np.sqrt(np.mean(speech**2))
    rn = np.sqrt(np.mean(noise_slice**2))
    if rs == 0.0:
        raise ValueError("silent speech segment, SNR undefined")
    if rn == 0.0:
        raise ValueError("silent noise slice, SNR undefined")
    return rs / (rn * 10.0 ** (snr_db / 20.0))


def mix_at_snr(speech, noise, snr_db):
    """Scale noise to the requested SNR and add it to speech.

    Both inputs must share length and sample rate.  Returns the mixture
    and the applied noise gain; no clipping or renormalization happens
    here.
    """
    if speech.sample_rate != noise.sample_rate:
        raise ValueError("speech and noise sample rates differ")
    if len(speech) != len(noise):
        raise ValueError(
            f"speech and noise lengths differ: {len(speech)} vs {len(noise)}"
        )
    gain = mixing_gain(speech.samples, noise.samples, snr_db)
    mixture = Waveform(speech.samples + gain * noise.samples, speech.sample_rate)
    return mixture, gain


def _stem(path):
    base = os.path.splitext(os.path.basename(path))[0]
    return re.sub(r"[^A-Za-z0-9_-]", "-", base)


def _snr_tag(snr_db):
    return "snr" + format(snr_db, "g").replace("-", "m").replace(".", "p")


def _wav_files(directory):
    if not os.path.isdir(directory):
        raise CorpusError(f"not a directory: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".wav"))
    return [os.path.join(directory, n) for n in names]


def _split_speech(speech_dir, seed, test_fraction):
    """Honor train/ and test/ subdirectories when present; otherwise draw
    a deterministic seeded split."""
    train_dir = os.path.join(speech_dir, "train")
    test_dir = os.path.join(speech_dir, "test")
    if os.path.isdir(train_dir) and os.path.isdir(test_dir):
        return _wav_files(train_dir), _wav_files(test_dir)
    files = _wav_files(speech_dir)
    if not files:
        raise CorpusError(f"no wav files under {speech_dir}")
    if test_fraction <= 0.0 or len(files) < 2:
        return files, []
    rng = np.random.default_rng([seed, 1])
    order = rng.permutation(len(files))
    n_test = max(1, int(round(test_fraction * len(files))))
    test_idx = sorted(order[:n_test])
    train_idx = sorted(order[n_test:])
    return [files[i] for i in train_idx], [files[i] for i in test_idx]


def _load_resampled(path, sample_rate, cache):
    if path not in cache:
        cache[path] = resample(wav_read(path), sample_rate)
    return cache[path]


def build_manifest(speech_dir, noise_dir, snrs, slices_per_utt=2, seed=0,
                   test_fraction=1.0 / 6.0, sample_rate=PIPELINE_RATE):
    """Enumerate every mixture for the experiment.

    Train slices come from the first half of each noise recording and
    test slices from the second half, so the splits never share noise
    material.  Enumeration order is noise, then SNR, then utterance,
    then slice; offsets are drawn from a generator seeded only by
    ``seed``, so the manifest is a pure function of the corpus and seed.
    """
    snrs = tuple(float(s) for s in snrs)
    if not snrs:
        raise ValueError("need at least one SNR")
    if slices_per_utt < 1:
        raise ValueError("slices_per_utt must be >= 1")
    train_files, test_files = _split_speech(speech_dir, seed, test_fraction)
    noise_files = _wav_files(noise_dir)
    if not noise_files:
        raise CorpusError(f"no wav files under {noise_dir}")

    cache = {}
    speech = {
        p: _load_resampled(p, sample_rate, cache) for p in train_files + test_files
    }
    noises = {p: _load_resampled(p, sample_rate, cache) for p in noise_files}

    for npath, nwav in noises.items():
        mid = len(nwav) // 2
        for upath, uwav in speech.items():
            if len(uwav) > mid:
                raise CorpusError(
                    f"noise {npath} ({len(nwav)} samples) cannot host utterance "
                    f"{upath} ({len(uwav)} samples) in a half split"
                )

    rng = np.random.default_rng([seed, 2])
    specs = []
    for npath in noise_files:
        nwav = noises[npath]
        mid = len(nwav) // 2
        for snr in snrs:
            for upath in train_files:
                uwav = speech[upath]
                for k in range(slices_per_utt):
                    off = int(rng.integers(0, mid - len(uwav) + 1))
                    gain = mixing_gain(
                        uwav.samples, nwav.samples[off : off + len(uwav)], snr
                    )
                    specs.append(MixtureSpec(
                        id=f"train_{_stem(npath)}_{_snr_tag(snr)}_{_stem(upath)}_s{k:02d}",
                        split="train",
                        speech_path=os.path.abspath(upath),
                        noise_path=os.path.abspath(npath),
                        noise_offset=off,
                        snr_db=snr,
                        noise_gain=gain,
                        seed_used=seed,
                    ))
    for npath in noise_files:
        nwav = noises[npath]
        mid = len(nwav) // 2
        for snr in snrs:
            for upath in test_files:
                uwav = speech[upath]
                off = int(rng.integers(mid, len(nwav) - len(uwav) + 1))
                gain = mixing_gain(
                    uwav.samples, nwav.samples[off : off + len(uwav)], snr
                )
                specs.append(MixtureSpec(
                    id=f"test_{_stem(npath)}_{_snr_tag(snr)}_{_stem(upath)}_s00",
                    split="test",
                    speech_path=os.path.abspath(upath),
                    noise_path=os.path.abspath(npath),
                    noise_offset=off,
                    snr_db=snr,
                    noise_gain=gain,
                    seed_used=seed,
                ))

    ids = [s.id for s in specs]
    if len(set(ids)) != len(ids):
        raise CorpusError("mixture ids collide; rename corpus files")
    return Manifest(
        sample_rate=sample_rate,
        seed=seed,
        snrs=snrs,
        slices_per_utt=slices_per_utt,
        n_speech_train=len(train_files),
        n_speech_test=len(test_files),
        n_noises=len(noise_files),
        specs=specs,
    )


class RenderStore:
    """Path bookkeeping for everything a workdir holds."""

    def __init__(self, workdir):
        self.workdir = workdir

    @property
    def manifest_path(self):
        return os.path.join(self.workdir, "manifest.jsonl")

    @property
    def digest_path(self):
        return os.path.join(self.workdir, "MANIFEST.sha")

    @property
    def models_dir(self):
        return os.path.join(self.workdir, "models")

    @property
    def reports_dir(self):
        return os.path.join(self.workdir, "reports")

    @property
    def figures_dir(self):
        return os.path.join(self.workdir, "figures")

    def spec_dir(self, spec):
        return os.path.join(self.workdir, "render", spec.split, spec.id)

    def wav_path(self, spec, role):
        return os.path.join(self.spec_dir(spec), f"{role}.wav")

    def target_path(self, spec, kind):
        return os.path.join(self.spec_dir(spec), f"target_{kind}.mat")

    def features_path(self, spec):
        return os.path.join(self.spec_dir(spec), "features.mat")

    def meta_path(self, spec):
        return os.path.join(self.spec_dir(spec), "meta.json")

    def scaler_path(self):
        return os.path.join(self.models_dir, "scaler.mat")

    def checkpoint_path(self, kind):
        return os.path.join(self.models_dir, f"model_{kind}.ckpt")

    def history_path(self, kind):
        return os.path.join(self.models_dir, f"history_{kind}.csv")

    def separated_path(self, spec, kind):
        return os.path.join(self.workdir, "separated", spec.id, f"{kind}.wav")


def load_rendered_signals(store, spec):
    """Read back the rendered speech, gained noise, and mixture."""
    s = wav_read(store.wav_path(spec, "speech"))
    n = wav_read(store.wav_path(spec, "noise"))
    y = wav_read(store.wav_path(spec, "mixture"))
    return s, n, y


def render_mixture(spec, sample_rate, cache):
    """Materialize one spec in memory: speech, gained noise slice, and
    mixture, jointly peak-normalized when the mixture exceeds full scale."""
    s = _load_resampled(spec.speech_path, sample_rate, cache)
    n_full = _load_resampled(spec.noise_path, sample_rate, cache)
    seg = n_full.samples[spec.noise_offset : spec.noise_offset + len(s)]
    if len(seg) != len(s):
        raise ValueError(f"{spec.id}: noise slice out of range")
    noise = spec.noise_gain * seg
    mix = s.samples + noise
    peak = float(np.max(np.abs(mix))) if len(mix) else 0.0
    scale = peak if peak > 1.0 else 1.0
    return (
        Waveform(s.samples / scale, sample_rate),
        Waveform(noise / scale, sample_rate),
        Waveform(mix / scale, sample_rate),
        scale,
    )


def render_dataset(manifest, store, kinds=MASK_KINDS, stft_cfg=StftConfig(),
                   params=MaskParams(), resume=True, on_progress=None):
    """Write wavs and mask targets for every spec in the manifest.

    Targets are computed from the float64 signals before quantization;
    ORM and cIRM targets are stored compressed (the form the network
    trains on), complex targets as [real | imag] blocks.
    """
    from .features import write_matrix_record

    cache = {}
    done = 0
    for spec in manifest.specs:
        wanted = [store.wav_path(spec, r) for r in ("speech", "noise", "mixture")]
        wanted += [store.target_path(spec, k) for k in kinds]
        wanted.append(store.meta_path(spec))
        if resume and all(os.path.exists(p) for p in wanted):
            done += 1
            continue
        s, n, y, scale = render_mixture(spec, manifest.sample_rate, cache)
        wav_write(store.wav_path(spec, "speech"), s)
        wav_write(store.wav_path(spec, "noise"), n)
        wav_write(store.wav_path(spec, "mixture"), y)
        S, N, Y = stft(s, stft_cfg), stft(n, stft_cfg), stft(y, stft_cfg)
        for kind in kinds:
            mask = compute_mask(kind, S, N, Y, params)
            if np.iscomplexobj(mask.values):
                mat = np.hstack([mask.values.real, mask.values.imag])
            else:
                mat = mask.values
            write_matrix_record(store.target_path(spec, kind), mat)
        meta = {
            "id": spec.id,
            "peak_scale": scale,
            "n_frames": S.n_frames,
            "n_bins": S.config.n_bins,
            "snr_db": spec.snr_db,
        }
        with open(store.meta_path(spec), "w") as fh:
            json.dump(meta, fh, sort_keys=True)
            fh.write("\n")
        done += 1
        if on_progress is not None:
            on_progress(done, len(manifest.specs), spec.id)
    return done
