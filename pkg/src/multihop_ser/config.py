"""Run configuration: defaults, key-value file parsing and validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

MODELS = ("audio-bre", "text-bre", "mha-1", "mha-2", "mha-3")
ATTENTION_MODES = ("strict", "projected")


class ConfigError(ValueError):
    """Configuration is invalid; raised before any data is touched."""


@dataclass
class RunConfig:
    model: str = "mha-2"
    d_h_audio: int = 64
    d_h_text: int = 80
    d_e: int = 100
    d_p: int = 32
    layers: int = 1
    dropout_rate: float = 0.3
    learning_rate: float = 1e-3
    clip_norm: float = 1.0
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    max_audio_len: int = 750
    max_text_len: int = 128
    attention_mode: str = "strict"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    n_folds: int = 10
    group_by_session: bool = False
    mfcc_dim: int = 40
    compute_deltas: bool = True

    def validate(self):
        validate_model_params(self.__dict__)
        if self.n_folds < 3:
            raise ConfigError("n_folds must be at least 3")
        if self.mfcc_dim < 1:
            raise ConfigError("mfcc_dim must be positive")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def estimator_params(self):
        from .estimator import EmotionClassifier

        names = EmotionClassifier._get_param_names()
        return {k: v for k, v in self.__dict__.items() if k in names}

    def to_dict(self):
        return dataclasses.asdict(self)

    def dump(self):
        return "\n".join(f"{k} = {_format(v)}" for k, v in self.to_dict().items()) + "\n"


def validate_model_params(p):
    """Reject inconsistent model/training settings with a ConfigError."""
    if p["model"] not in MODELS:
        raise ConfigError(f"model must be one of {', '.join(MODELS)}, got {p['model']!r}")
    if p["attention_mode"] not in ATTENTION_MODES:
        raise ConfigError(f"attention_mode must be 'strict' or 'projected', got {p['attention_mode']!r}")
    for key in ("d_h_audio", "d_h_text", "d_e", "layers", "batch_size", "max_epochs", "max_audio_len", "max_text_len"):
        if int(p[key]) < 1:
            raise ConfigError(f"{key} must be a positive integer")
    if int(p["d_p"]) < 0:
        raise ConfigError("d_p must be non-negative")
    if int(p["patience"]) < 1:
        raise ConfigError("patience must be positive")
    for key in ("learning_rate", "clip_norm", "epsilon"):
        if not float(p[key]) > 0:
            raise ConfigError(f"{key} must be positive")
    if not 0.0 <= float(p["dropout_rate"]) < 1.0:
        raise ConfigError("dropout_rate must lie in [0, 1)")
    for key in ("beta1", "beta2"):
        if not 0.0 <= float(p[key]) < 1.0:
            raise ConfigError(f"{key} must lie in [0, 1)")
    fused = p["model"].startswith("mha")
    if fused and p["attention_mode"] == "strict":
        d_text = 2 * int(p["d_h_text"])
        d_audio = 2 * int(p["d_h_audio"]) + int(p["d_p"])
        if d_text != d_audio:
            raise ConfigError(
                f"strict attention requires 2*d_h_text = 2*d_h_audio + d_p, "
                f"got 2*{p['d_h_text']} = {d_text} vs 2*{p['d_h_audio']} + {p['d_p']} = {d_audio}"
            )


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(name, raw, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from exc
    return raw


_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def parse_overrides(pairs):
    """``["key=value", ...]`` -> typed dict."""
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, value, _TYPES[key])
    return out


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            items.append(line)
    return parse_overrides(items)


def load_config(path=None, overrides=(), **extra):
    values = {}
    if path is not None:
        values.update(read_config_file(path))
    values.update(parse_overrides(overrides))
    values.update({k: v for k, v in extra.items() if v is not None})
    return RunConfig(**values).validate()
