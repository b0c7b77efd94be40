"""Model and experiment configuration.

Configs are flat ``key = value`` text files; every run writes the resolved
config next to its outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

ENCODER_KINDS = ("word", "char-lstm", "char-cnn", "trigram-lstm", "oracle")
AUGMENT_MODES = ("none", "gold-case", "predicted-case", "mtl")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    encoder: str = "char-lstm"
    word_dim: int = 200
    pos_dim: int = 100
    unit_dim: int = 100
    subword_hidden: int = 100
    subword_layers: int = 1
    cnn_char_dim: int = 15
    cnn_widths: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    cnn_filters_per_width: int = 25
    cnn_highway_layers: int = 1
    lstm_hidden: int = 200
    lstm_layers: int = 2
    mlp_hidden: int = 100
    dropout_embed: float = 0.33
    dropout_head: float = 0.33
    case_symbols: bool = False
    inflectional_only: bool = False
    attention: bool = False
    mtl: bool = False
    mtl_case_layer: int = 2
    case_hidden: int = 100
    single_root: bool = False
    max_words: int = 20000

    def validate(self) -> None:
        if self.encoder not in ENCODER_KINDS:
            raise ConfigError(f"encoder must be one of {ENCODER_KINDS}, got {self.encoder!r}")
        for name in ("word_dim", "pos_dim", "unit_dim", "subword_hidden", "subword_layers", "cnn_char_dim",
                     "cnn_filters_per_width", "lstm_hidden", "lstm_layers", "mlp_hidden", "case_hidden", "max_words"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.encoder in ("char-lstm", "trigram-lstm", "oracle") and 2 * self.subword_hidden != self.word_dim:
            raise ConfigError("2 * subword_hidden must equal word_dim so all encoders share one width")
        if self.case_symbols and self.encoder != "char-lstm":
            raise ConfigError("case_symbols augments the char-lstm encoder only")
        if self.attention and self.encoder != "oracle":
            raise ConfigError("the attention variant requires the oracle encoder")
        if self.mtl and not 1 <= self.mtl_case_layer < self.lstm_layers:
            raise ConfigError("mtl_case_layer must name a lower encoder layer")
        for name in ("dropout_embed", "dropout_head"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1)")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    cnn_batch_size: int = 16
    lr: float = 0.001
    clip: float = 5.0
    patience: int = 5
    seed: int = 1
    dtype: str = "float32"
    target_train_las: float | None = None  # stop once training LAS reaches this

    def batch_size_for(self, encoder: str) -> int:
        return self.cnn_batch_size if encoder == "char-cnn" else self.batch_size


@dataclass
class ExperimentConfig:
    """Everything one CLI run needs, kept flat for the key-value file format."""

    train: str | None = None
    dev: str | None = None
    test: str | None = None
    output: str = "run"
    augment: str = "none"
    # model
    encoder: str = "char-lstm"
    word_dim: int = 200
    pos_dim: int = 100
    unit_dim: int = 100
    subword_hidden: int = 100
    subword_layers: int = 1
    cnn_char_dim: int = 15
    cnn_widths: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    cnn_filters_per_width: int = 25
    cnn_highway_layers: int = 1
    lstm_hidden: int = 200
    lstm_layers: int = 2
    mlp_hidden: int = 100
    dropout_embed: float = 0.33
    dropout_head: float = 0.33
    inflectional_only: bool = False
    attention: bool = False
    mtl_case_layer: int = 2
    case_hidden: int = 100
    single_root: bool = False
    max_words: int = 20000
    # training
    epochs: int = 50
    batch_size: int = 32
    cnn_batch_size: int = 16
    lr: float = 0.001
    clip: float = 5.0
    patience: int = 5
    seed: int = 1
    dtype: str = "float32"
    target_train_las: float | None = None
    # case tagger
    tagger_epochs: int = 20
    tagger_fraction: float = 0.75
    tagger_dropout: float = 0.2

    def model_config(self) -> ModelConfig:
        kw = {f.name: getattr(self, f.name) for f in fields(ModelConfig) if hasattr(self, f.name)}
        kw["case_symbols"] = self.augment in ("gold-case", "predicted-case")
        kw["mtl"] = self.augment == "mtl"
        if kw["mtl"]:
            kw["lstm_layers"] = max(self.lstm_layers, 2 * self.mtl_case_layer)
        return ModelConfig(**kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{f.name: getattr(self, f.name) for f in fields(TrainConfig)})

    def validate(self, require_files: bool = True) -> None:
        if self.augment not in AUGMENT_MODES:
            raise ConfigError(f"augment must be one of {AUGMENT_MODES}, got {self.augment!r}")
        if self.augment != "none" and self.augment != "mtl" and self.encoder != "char-lstm":
            raise ConfigError("case augmentation applies to the char-lstm encoder")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if not 0.0 < self.tagger_fraction <= 1.0:
            raise ConfigError("tagger_fraction must be in (0, 1]")
        self.model_config().validate()
        if require_files:
            for name in ("train", "dev", "test"):
                path = getattr(self, name)
                if path is not None and not Path(path).is_file():
                    raise ConfigError(f"{name} file not found: {path}")


def _coerce(value: str, current: Any, ftype) -> Any:
    text = value.strip()
    tname = str(ftype)
    if text.lower() in ("none", "null") and ("None" in tname or current is None):
        return None
    if "tuple" in tname:
        return tuple(int(v) for v in text.replace(",", " ").split())
    if "bool" in tname:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if "float" in tname:
        return float(text)
    if "int" in tname:
        return int(text)
    return text


def apply_overrides(cfg, items: dict[str, str]):
    types = {f.name: f.type for f in fields(cfg)}
    updates = {}
    for key, value in items.items():
        key = key.strip().replace("-", "_")
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[key] = _coerce(value, getattr(cfg, key), types[key])
        except ValueError as err:
            raise ConfigError(f"bad value for {key}: {err}") from None
    return dataclasses.replace(cfg, **updates)


def parse_config_text(text: str) -> dict[str, str]:
    items = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {n}: expected key = value")
        items[key.strip()] = value.strip()
    return items


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        cfg = apply_overrides(cfg, parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def format_config(cfg) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = " ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def model_config_to_dict(cfg: ModelConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["cnn_widths"] = list(cfg.cnn_widths)
    return d


def model_config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["cnn_widths"] = tuple(d["cnn_widths"])
    return ModelConfig(**d)
