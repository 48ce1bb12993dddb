import numpy as np
import pytest

from maskbench.audio import Waveform
from maskbench.features import (
    FeatureConfig,
    FeatureExtractor,
    FeatureScaler,
    ar_to_cepstra,
    bark_filterbank,
    delta_features,
    extract_ams,
    extract_features,
    extract_mfcc,
    extract_rasta_plp,
    levinson,
    mel_filterbank,
    normalize_features,
    read_matrix_record,
    splice_frames,
    write_matrix_record,
)
from synthdata import synth_speech


@pytest.fixture(scope="module")
def utterance():
    return synth_speech(np.random.default_rng(0), seconds=2.0)


def test_mel_filterbank_shape_and_peaks():
    fb = mel_filterbank(40, 161, 16000)
    assert fb.shape == (40, 161)
    # triangles peak at 1 in continuous frequency; on the bin grid the
    # apex lands near but not exactly on a bin
    peaks = fb.max(axis=1)
    assert np.all(peaks <= 1.0 + 1e-12)
    assert np.all(peaks > 0.5)
    # every interior bin is covered by some filter
    assert np.all(fb[:, 1:-1].sum(axis=0) > 0.0)


def test_bark_filterbank_covers_band():
    fb = bark_filterbank(161, 16000)
    assert fb.shape[1] == 161
    assert fb.shape[0] >= 20
    assert np.all(fb.sum(axis=1) > 0.0)


def test_mfcc_shape_and_determinism(utterance):
    f1 = extract_mfcc(utterance)
    f2 = extract_mfcc(utterance)
    assert f1.shape == (199, 31)
    assert np.array_equal(f1, f2)


def test_ams_shape(utterance):
    f = extract_ams(utterance)
    assert f.shape == (199, 15)
    assert np.all(f >= 0.0)


def test_plp_shape_and_finiteness(utterance):
    f = extract_rasta_plp(utterance)
    assert f.shape == (199, 13)
    assert np.all(np.isfinite(f))


def test_feature_rate_validation():
    w = Waveform(np.zeros(32000), 8000)
    with pytest.raises(ValueError):
        extract_mfcc(w)


def test_levinson_recovers_ar_coefficients():
    # AR(2) with known poles; autocorrelation computed from the exact
    # filter output should give back the coefficients
    rng = np.random.default_rng(1)
    a_true = np.array([1.0, -0.6, 0.2])
    x = rng.normal(0, 1, 200000)
    from scipy.signal import lfilter

    y = lfilter([1.0], a_true, x)
    r = np.correlate(y, y, mode="full")[len(y) - 1 : len(y) + 2] / len(y)
    a, err = levinson(r[None, :])
    assert err[0] > 0.0
    assert np.allclose(a[0], a_true, atol=0.02)


def test_ar_to_cepstra_matches_log_spectrum():
    # cepstra of an AR model must fourier-back to the model's log
    # magnitude spectrum
    a = np.array([[1.0, -0.5, 0.25]])
    err = np.array([2.0])
    n_ceps = 64
    c = ar_to_cepstra(a, err, n_ceps)[0]
    grid = np.exp(1j * np.linspace(0, np.pi, 200))
    H = np.sqrt(err[0]) / np.polyval(a[0][::-1], 1.0 / grid)
    direct = np.log(np.abs(H) ** 2)
    via_ceps = c[0] + 2.0 * sum(
        c[k] * np.cos(k * np.linspace(0, np.pi, 200)) for k in range(1, n_ceps)
    )
    assert np.max(np.abs(direct - via_ceps)) < 1e-6


def test_delta_of_constant_is_zero():
    m = np.tile(np.arange(5.0), (12, 1))
    d = delta_features(m)
    assert np.allclose(d, 0.0)


def test_delta_of_linear_ramp_is_slope():
    t = np.arange(40.0)
    m = np.stack([3.0 * t, -2.0 * t], axis=1)
    d = delta_features(m)
    # interior rows of a linear ramp give the exact slope
    assert np.allclose(d[2:-2, 0], 3.0)
    assert np.allclose(d[2:-2, 1], -2.0)


def test_splice_replicates_edges():
    m = np.arange(12.0).reshape(4, 3)
    sp = splice_frames(m, 1)
    assert sp.shape == (4, 9)
    # first row: left context is the row itself
    assert np.array_equal(sp[0, :3], m[0])
    assert np.array_equal(sp[0, 3:6], m[0])
    assert np.array_equal(sp[0, 6:9], m[1])
    assert np.array_equal(sp[-1, 6:9], m[-1])


def test_extract_features_dims(utterance):
    cfg = FeatureConfig()
    f = extract_features(utterance, cfg)
    assert f.shape == (199, cfg.spliced_dim)
    assert cfg.base_dim == 59
    assert cfg.spliced_dim == 295


def test_extract_features_with_deltas(utterance):
    cfg = FeatureConfig(include_deltas=True)
    f = extract_features(utterance, cfg)
    assert f.shape == (199, 590)


def test_record_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(2)
    m = rng.normal(0, 1, (57, 13)).astype(np.float32)
    path = str(tmp_path / "m.mat")
    write_matrix_record(path, m)
    back = read_matrix_record(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, m)


def test_record_rejects_truncation(tmp_path):
    path = tmp_path / "t.mat"
    m = np.ones((4, 4), dtype=np.float32)
    write_matrix_record(str(path), m)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError):
        read_matrix_record(str(path))


def test_scaler_standardizes():
    rng = np.random.default_rng(3)
    X = rng.normal(5.0, 3.0, (500, 7))
    sc = FeatureScaler().fit(X)
    Z = sc.transform(X)
    assert np.max(np.abs(Z.mean(axis=0))) < 1e-10
    assert np.max(np.abs(Z.std(axis=0) - 1.0)) < 1e-10


def test_scaler_floors_constant_columns():
    X = np.ones((50, 3))
    Z = FeatureScaler().fit(X).transform(X)
    assert np.all(np.isfinite(Z))
    assert np.allclose(Z, 0.0)


def test_normalize_features_matches_scaler():
    rng = np.random.default_rng(4)
    train = rng.normal(0, 2, (100, 5))
    other = rng.normal(0, 2, (30, 5))
    z1, stats = normalize_features(train, other)
    sc = FeatureScaler().fit(train)
    assert np.allclose(z1, sc.transform(other))
    assert np.allclose(stats.mean, train.mean(axis=0))


def test_extractor_estimator_contract(utterance):
    from sklearn.base import clone

    ex = FeatureExtractor(context=1)
    params = ex.get_params()
    assert params["context"] == 1
    ex2 = clone(ex)
    f1 = ex.fit_transform([utterance])
    f2 = ex2.transform([utterance])
    assert np.array_equal(f1, f2)
