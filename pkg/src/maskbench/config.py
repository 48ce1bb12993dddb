"""Experiment configuration: a small sectioned key = value format.

Errors carry line numbers, unknown sections or keys are rejected rather
than ignored, and the fully resolved configuration can be rendered back
out so a workdir records exactly what produced it.
"""

import os
from dataclasses import dataclass

MASK_KINDS = ("ibm", "irm", "cirm", "psm", "orm")
WORKDIR_ENV = "MASKBENCH_WORKDIR"


class ConfigError(ValueError):
    """Raised for unparseable or invalid configuration input."""


@dataclass
class PipelineConfig:
    speech_dir: str = ""
    noise_dir: str = ""
    workdir: str = ""
    snrs: tuple = (-3.0, 0.0, 3.0)
    slices_per_utt: int = 2
    test_fraction: float = 1.0 / 6.0
    kinds: tuple = MASK_KINDS
    mfcc_dims: int = 31
    ams_dims: int = 15
    plp_order: int = 12
    context: int = 2
    include_deltas: bool = False
    hidden_units: int = 1024
    hidden_layers: int = 3
    dropout_rate: float = 0.2
    batch_size: int = 256
    learning_rate: float = 0.01
    epochs: int = 30
    validation_fraction: float = 0.1
    seed: int = 12345
    jobs: int = 1


def _parse_bool(raw):
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_float_list(raw):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _parse_str_list(raw):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(parts)


# (section, key) -> (PipelineConfig attribute, value parser)
_SCHEMA = {
    ("paths", "speech_dir"): ("speech_dir", str),
    ("paths", "noise_dir"): ("noise_dir", str),
    ("paths", "workdir"): ("workdir", str),
    ("mixing", "snrs"): ("snrs", _parse_float_list),
    ("mixing", "slices_per_utt"): ("slices_per_utt", int),
    ("mixing", "test_fraction"): ("test_fraction", float),
    ("targets", "kinds"): ("kinds", _parse_str_list),
    ("features", "mfcc_dims"): ("mfcc_dims", int),
    ("features", "ams_dims"): ("ams_dims", int),
    ("features", "plp_order"): ("plp_order", int),
    ("features", "context"): ("context", int),
    ("features", "include_deltas"): ("include_deltas", _parse_bool),
    ("model", "hidden_units"): ("hidden_units", int),
    ("model", "hidden_layers"): ("hidden_layers", int),
    ("model", "dropout_rate"): ("dropout_rate", float),
    ("training", "batch_size"): ("batch_size", int),
    ("training", "learning_rate"): ("learning_rate", float),
    ("training", "epochs"): ("epochs", int),
    ("training", "validation_fraction"): ("validation_fraction", float),
    ("run", "seed"): ("seed", int),
    ("run", "jobs"): ("jobs", int),
}

_SECTIONS = tuple(dict.fromkeys(section for section, _ in _SCHEMA))


def parse_config_text(text, source="<config>"):
    """Parse configuration text into a PipelineConfig.

    Unknown sections, unknown keys, bad values, and duplicate keys all
    raise ConfigError naming the offending line.
    """
    cfg = PipelineConfig()
    section = None
    seen = set()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(
                    f"{source}:{lineno}: unknown section [{section}]"
                )
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        if section is None:
            raise ConfigError(f"{source}:{lineno}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if (section, key) not in _SCHEMA:
            raise ConfigError(
                f"{source}:{lineno}: unknown key {key!r} in [{section}]"
            )
        if (section, key) in seen:
            raise ConfigError(
                f"{source}:{lineno}: duplicate key {key!r} in [{section}]"
            )
        seen.add((section, key))
        attr, parser = _SCHEMA[(section, key)]
        try:
            setattr(cfg, attr, parser(value))
        except ValueError as exc:
            raise ConfigError(
                f"{source}:{lineno}: bad value for {key!r}: {exc}"
            ) from None
    return cfg


def load_config(path, overrides=None):
    """Read a config file, apply overrides, resolve the workdir, and
    validate the result."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config_text(text, source=path)
    for attr, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, attr, value)
    if not cfg.workdir:
        cfg.workdir = os.environ.get(WORKDIR_ENV, "")
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if not cfg.speech_dir:
        raise ConfigError("speech_dir is not set")
    if not cfg.noise_dir:
        raise ConfigError("noise_dir is not set")
    if not cfg.workdir:
        raise ConfigError(
            f"workdir is not set (set [paths] workdir or ${WORKDIR_ENV})"
        )
    if not cfg.snrs:
        raise ConfigError("snrs must list at least one value")
    for kind in cfg.kinds:
        if kind not in MASK_KINDS:
            raise ConfigError(
                f"unknown target kind {kind!r}; choose from {', '.join(MASK_KINDS)}"
            )
    if len(set(cfg.kinds)) != len(cfg.kinds):
        raise ConfigError("duplicate target kinds")
    if not 0.0 <= cfg.dropout_rate < 1.0:
        raise ConfigError("dropout_rate must be in [0, 1)")
    if not 0.0 <= cfg.validation_fraction < 1.0:
        raise ConfigError("validation_fraction must be in [0, 1)")
    if not 0.0 <= cfg.test_fraction < 1.0:
        raise ConfigError("test_fraction must be in [0, 1)")
    if cfg.slices_per_utt < 1:
        raise ConfigError("slices_per_utt must be >= 1")
    if min(cfg.hidden_units, cfg.hidden_layers, cfg.batch_size) < 1:
        raise ConfigError("hidden_units, hidden_layers, batch_size must be >= 1")
    if cfg.epochs < 0:
        raise ConfigError("epochs must be >= 0")
    if cfg.learning_rate <= 0:
        raise ConfigError("learning_rate must be positive")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return cfg


def render_config(cfg):
    """Render the resolved configuration back into parseable text."""

    def fmt(value):
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, tuple):
            return ", ".join(fmt(v) for v in value)
        if isinstance(value, float):
            return format(value, "g")
        return str(value)

    lines = []
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        for (sec, key), (attr, _) in _SCHEMA.items():
            if sec == section:
                lines.append(f"{key} = {fmt(getattr(cfg, attr))}")
        lines.append("")
    return "\n".join(lines)
