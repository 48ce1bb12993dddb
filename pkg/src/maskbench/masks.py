"""Time-frequency training targets and mask application.

Five targets are supported: the ideal binary mask (IBM), ideal ratio mask
(IRM), complex ideal ratio mask (cIRM), phase-sensitive mask (PSM), and
the optimal ratio mask (ORM) which keeps the speech-noise cross term that
the IRM drops.  The raw ORM is unbounded, so the trainable form squashes
it through a scaled tanh; the inverse map is used at synthesis time.
"""

from dataclasses import dataclass

import numpy as np

from .stft import Spectrogram, stft
from .validation import check_finite, check_same_shape

REAL_MASK_KINDS = ("ibm", "irm", "psm", "orm_raw", "orm_compressed")


@dataclass(frozen=True)
class MaskParams:
    """Tunables shared by the mask definitions.

    theta: IBM local energy threshold.  beta: IRM exponent.  K and c:
    range bound and steepness of the tanh compression.  eps: denominator
    floor for degenerate T-F units.
    """

    theta: float = 0.0
    beta: float = 0.5
    K: float = 10.0
    c: float = 0.1
    eps: float = 1e-12

    def __post_init__(self):
        if self.K <= 0 or self.c <= 0 or self.beta <= 0 or self.eps <= 0:
            raise ValueError("K, c, beta, and eps must all be positive")


@dataclass
class RealMask:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in REAL_MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        self.values = check_finite(np.asarray(self.values, dtype=np.float64), "mask")


@dataclass
class ComplexMask:
    values: np.ndarray
    compressed: bool = False

    def __post_init__(self):
        self.values = check_finite(np.asarray(self.values, dtype=np.complex128), "mask")


def compute_ibm(S, N, p=MaskParams()):
    """Binary mask: 1 where speech power exceeds noise power by theta.

    The inequality is strict, so equal energies resolve to 0.
    """
    check_same_shape(S.bins, N.bins)
    values = (np.abs(S.bins) ** 2 - np.abs(N.bins) ** 2 > p.theta).astype(np.float64)
    return RealMask(values, "ibm")


def compute_irm(S, N, p=MaskParams()):
    """Ratio mask: speech fraction of the total power, raised to beta."""
    check_same_shape(S.bins, N.bins)
    ps = np.abs(S.bins) ** 2
    pn = np.abs(N.bins) ** 2
    values = (ps / (ps + pn + p.eps)) ** p.beta
    return RealMask(values, "irm")


def _floor_divide(num, den, eps):
    # units whose denominator underflows eps count as cancelled -> mask 0;
    # everywhere else the division is exact so mask * Y reproduces S to
    # rounding error regardless of how small |Y| gets
    degenerate = den < eps
    safe = np.where(degenerate, 1.0, den)
    return np.where(degenerate, 0.0 * num, num / safe)


def compute_cirm(S, Y, p=MaskParams(), compress=False):
    """Complex mask M with M * Y = S: conj(Y) * S / |Y|^2.

    Units with |Y|^2 below eps are zeroed; elsewhere the quotient is
    exact, which is what makes the mask a perfect resynthesis recipe.
    With compress=True both components are squashed through the same tanh
    map used for the ORM.
    """
    check_same_shape(S.bins, Y.bins)
    den = np.abs(Y.bins) ** 2
    values = _floor_divide(np.conj(Y.bins) * S.bins, den, p.eps)
    if compress:
        values = _compress(values.real, p) + 1j * _compress(values.imag, p)
    return ComplexMask(values, compressed=compress)


def compute_psm(S, Y, p=MaskParams()):
    """Phase-sensitive mask: |S|/|Y| * cos(phase(S) - phase(Y)), clipped.

    |S| cos(dphase) / |Y| equals Re(S conj(Y)) / |Y|^2, which is the form
    computed here; it is exactly the real part of the complex mask and
    shares its handling of cancelled units.  Values are clipped to
    [-K, K].
    """
    check_same_shape(S.bins, Y.bins)
    raw = psm_preclip(S, Y, p)
    return RealMask(np.clip(raw, -p.K, p.K), "psm")


def psm_preclip(S, Y, p=MaskParams()):
    """Unclipped phase-sensitive values as a plain array."""
    den = np.abs(Y.bins) ** 2
    return _floor_divide(np.real(S.bins * np.conj(Y.bins)), den, p.eps)


def compute_orm_raw(S, N, p=MaskParams()):
    """Optimal ratio mask: the real per-unit minimizer of |S - m Y|^2.

    The textbook form (|S|^2 + Re(S N*)) / (|S|^2 + |N|^2 + 2 Re(S N*))
    factors as Re(S Y*) / |Y|^2 with Y = S + N; the factored form is used
    so the value agrees bitwise with the mixture-domain masks.  Units
    whose denominator |Y|^2 underflows eps are treated as cancelled and
    set to 0.
    """
    check_same_shape(S.bins, N.bins)
    Y = S.bins + N.bins
    den = np.abs(Y) ** 2
    num = np.real(S.bins * np.conj(Y))
    return RealMask(_floor_divide(num, den, p.eps), "orm_raw")


def _compress(values, p):
    # K * (1 - exp(-c*g)) / (1 + exp(-c*g)) == K * tanh(c*g/2)
    return p.K * np.tanh(0.5 * p.c * values)


def _uncompress(values, p):
    clamped = np.clip(values, -(p.K - 1e-9), p.K - 1e-9)
    # inverse of the tanh map: -(1/c) * ln((K - m) / (K + m))
    return -(1.0 / p.c) * np.log((p.K - clamped) / (p.K + clamped))


def compress_mask(m, p=MaskParams()):
    """Squash a raw ORM into (-K, K) for use as a training target."""
    return RealMask(_compress(m.values, p), "orm_compressed")


def uncompress_mask(m, p=MaskParams()):
    """Invert the tanh compression; saturated values are clamped first."""
    return RealMask(_uncompress(m.values, p), "orm_raw")


def uncompress_complex_mask(m, p=MaskParams()):
    values = _uncompress(m.values.real, p) + 1j * _uncompress(m.values.imag, p)
    return ComplexMask(values, compressed=False)


def apply_real_mask(m, Y):
    """Scale the mixture spectrogram elementwise by a real mask."""
    if m.kind == "orm_compressed":
        raise ValueError("compressed mask must be uncompressed before application")
    check_same_shape(m.values, Y.bins)
    return Spectrogram(Y.bins * m.values, Y.config, Y.sample_rate)


def apply_complex_mask(m, Y):
    """Complex-multiply the mixture spectrogram by a complex mask."""
    if m.compressed:
        raise ValueError("compressed mask must be uncompressed before application")
    check_same_shape(m.values, Y.bins)
    return Spectrogram(Y.bins * m.values, Y.config, Y.sample_rate)


def compute_mask(kind, S, N, Y, p=MaskParams()):
    """Dispatch on mask kind; ORM is returned in its compressed form."""
    if kind == "ibm":
        return compute_ibm(S, N, p)
    if kind == "irm":
        return compute_irm(S, N, p)
    if kind == "cirm":
        return compute_cirm(S, Y, p, compress=True)
    if kind == "psm":
        return compute_psm(S, Y, p)
    if kind == "orm":
        return compress_mask(compute_orm_raw(S, N, p), p)
    raise ValueError(f"unknown mask kind {kind!r}")


def oracle_mask(kind, S, N, Y, p=MaskParams()):
    """Ideal mask in directly applicable (uncompressed) form."""
    if kind == "ibm":
        return compute_ibm(S, N, p)
    if kind == "irm":
        return compute_irm(S, N, p)
    if kind == "cirm":
        return compute_cirm(S, Y, p, compress=False)
    if kind == "psm":
        return compute_psm(S, Y, p)
    if kind == "orm":
        return compute_orm_raw(S, N, p)
    raise ValueError(f"unknown mask kind {kind!r}")


def spectral_coherence(s, n, cfg, eps=1e-12):
    """Magnitude-squared coherence between two signals per frequency bin.

    Welch-style: cross- and auto-spectra are averaged over all STFT
    frames of the pair, giving an F-vector in [0, 1].
    """
    if len(s) != len(n):
        raise ValueError(f"signals must have equal length, got {len(s)} and {len(n)}")
    if s.sample_rate != n.sample_rate:
        raise ValueError("signals must share a sample rate")
    S = stft(s, cfg).bins
    N = stft(n, cfg).bins
    cross = np.abs((S * np.conj(N)).sum(axis=0)) ** 2
    auto = (np.abs(S) ** 2).sum(axis=0) * (np.abs(N) ** 2).sum(axis=0)
    return np.clip(cross / (auto + eps), 0.0, 1.0)
