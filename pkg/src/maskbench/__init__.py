"""Mask-based monaural speech separation bench.

Mixes speech with noise at controlled SNRs, computes five time-frequency
training targets, trains feed-forward mask estimators on complementary
features, and scores the separated audio.
"""

from .audio import PIPELINE_RATE, Waveform, WavFormatError, resample, wav_read, wav_write
from .config import ConfigError, PipelineConfig, load_config, parse_config_text
from .dataset import (
    Manifest,
    MixtureSpec,
    RenderStore,
    build_manifest,
    mix_at_snr,
    render_dataset,
)
from .features import (
    FeatureConfig,
    FeatureExtractor,
    FeatureScaler,
    extract_ams,
    extract_features,
    extract_mfcc,
    extract_rasta_plp,
    normalize_features,
)
from .masks import (
    ComplexMask,
    MaskParams,
    RealMask,
    apply_complex_mask,
    apply_real_mask,
    compress_mask,
    compute_cirm,
    compute_ibm,
    compute_irm,
    compute_mask,
    compute_orm_raw,
    compute_psm,
    oracle_mask,
    spectral_coherence,
    uncompress_mask,
)
from .metrics import (
    EvalResult,
    aggregate_results,
    evaluate_system,
    snr_metrics,
    spectral_mse,
    stoi,
)
from .network import (
    MlpMaskRegressor,
    Model,
    ModelConfig,
    TrainConfig,
    infer_mask,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train_network,
)
from .stft import ColaViolationError, Spectrogram, StftConfig, istft, stft

__version__ = "0.1.0"

__all__ = [
    "PIPELINE_RATE",
    "Waveform",
    "WavFormatError",
    "resample",
    "wav_read",
    "wav_write",
    "ConfigError",
    "PipelineConfig",
    "load_config",
    "parse_config_text",
    "Manifest",
    "MixtureSpec",
    "RenderStore",
    "build_manifest",
    "mix_at_snr",
    "render_dataset",
    "FeatureConfig",
    "FeatureExtractor",
    "FeatureScaler",
    "extract_ams",
    "extract_features",
    "extract_mfcc",
    "extract_rasta_plp",
    "normalize_features",
    "ComplexMask",
    "MaskParams",
    "RealMask",
    "apply_complex_mask",
    "apply_real_mask",
    "compress_mask",
    "compute_cirm",
    "compute_ibm",
    "compute_irm",
    "compute_mask",
    "compute_orm_raw",
    "compute_psm",
    "oracle_mask",
    "spectral_coherence",
    "uncompress_mask",
    "EvalResult",
    "aggregate_results",
    "evaluate_system",
    "snr_metrics",
    "spectral_mse",
    "stoi",
    "MlpMaskRegressor",
    "Model",
    "ModelConfig",
    "TrainConfig",
    "infer_mask",
    "init_model",
    "load_checkpoint",
    "save_checkpoint",
    "train_network",
    "ColaViolationError",
    "Spectrogram",
    "StftConfig",
    "istft",
    "stft",
]
