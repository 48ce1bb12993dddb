import numpy as np
import pytest

from maskbench.audio import PIPELINE_RATE, Waveform, WavFormatError, resample, wav_read, wav_write


def test_waveform_rejects_non_finite():
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]), 16000)


def test_waveform_rejects_2d():
    with pytest.raises(ValueError):
        Waveform(np.zeros((4, 2)), 16000)


def test_waveform_duration_and_rms():
    w = Waveform(np.full(8000, 0.25), 16000)
    assert w.duration == 0.5
    assert abs(w.rms() - 0.25) < 1e-12


def test_wav_round_trip_within_one_lsb(tmp_path):
    rng = np.random.default_rng(3)
    w = Waveform(rng.uniform(-0.9, 0.9, 4000), 16000)
    path = str(tmp_path / "x.wav")
    wav_write(path, w)
    back = wav_read(path)
    assert back.sample_rate == 16000
    assert len(back) == len(w)
    assert np.max(np.abs(back.samples - w.samples)) <= 1.0 / 32768.0


def test_wav_write_clips_out_of_range(tmp_path):
    w = Waveform(np.array([2.0, -2.0, 0.0]), 8000)
    path = str(tmp_path / "clip.wav")
    wav_write(path, w)
    back = wav_read(path)
    assert np.all(np.abs(back.samples) <= 1.0)
    assert back.samples[0] > 0.99


def test_wav_read_rejects_garbage(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"not a riff file at all")
    with pytest.raises(WavFormatError):
        wav_read(str(path))


def test_wav_read_missing_file_raises_oserror(tmp_path):
    with pytest.raises(FileNotFoundError):
        wav_read(str(tmp_path / "nope.wav"))


def test_wav_read_downmixes_stereo(tmp_path):
    import scipy.io.wavfile

    left = np.full(100, 8192, dtype=np.int16)
    right = np.zeros(100, dtype=np.int16)
    path = str(tmp_path / "st.wav")
    scipy.io.wavfile.write(path, 16000, np.stack([left, right], axis=1))
    w = wav_read(path)
    assert w.samples.ndim == 1
    assert abs(w.samples[0] - 8192 / 32768.0 / 2.0) < 1e-12


def test_resample_identity_copies():
    w = Waveform(np.arange(100, dtype=np.float64), 16000)
    out = resample(w, 16000)
    assert out.sample_rate == 16000
    assert np.array_equal(out.samples, w.samples)
    out.samples[0] = 99.0
    assert w.samples[0] == 0.0


def test_resample_length_and_rate():
    w = Waveform(np.zeros(32000), 16000)
    out = resample(w, 10000)
    assert out.sample_rate == 10000
    assert len(out) == 20000


def test_resample_preserves_tone():
    # a 440 Hz tone should survive 44.1k -> 16k with tiny error away
    # from the filter edges
    sr = 44100
    t = np.arange(sr) / sr
    w = Waveform(np.sin(2 * np.pi * 440.0 * t), sr)
    out = resample(w, 16000)
    t2 = np.arange(len(out)) / 16000.0
    ref = np.sin(2 * np.pi * 440.0 * t2)
    mid = slice(800, len(out) - 800)
    err = np.max(np.abs(out.samples[mid] - ref[mid]))
    assert err < 1e-3


def test_resample_rejects_bad_rate():
    w = Waveform(np.zeros(100), 16000)
    with pytest.raises(ValueError):
        resample(w, 0)


def test_pipeline_rate_value():
    assert PIPELINE_RATE == 16000
