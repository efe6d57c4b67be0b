"""Run configuration: flat key=value sections with strict validation.

Config files are INI-style. Unknown sections or keys are rejected,
and every violation in a file is reported in one pass. Flags override
config values; config values override defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields

from .ensemble import COMBINE_RULES
from .network.estimators import ARCHITECTURES

BASELINE_ARCHITECTURES = ("softmax", "nb")


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(self.violations))


@dataclass
class RunConfig:
    # [data]
    corpus: str | None = None
    annotations: str | None = None
    output_dir: str = "out"
    # [preprocess]
    lowercase: bool = True
    normalize_hashtags: bool = True
    strip_emojis_mentions_duplicates: bool = True
    min_df: int = 5
    max_len: int = 100
    # [model]
    architecture: str = "conv-lstm"
    embedding_dim: int = 32
    conv_filters: tuple = (32, 32)
    kernel_size: int = 3
    pool_size: int = 2
    lstm_units: tuple = (32,)
    dense_units: tuple = (64,)
    dropout: float = 0.2
    noise_std: float = 0.1
    activation: str = "relu"
    vocab_size: int = 20000
    embedding_path: str | None = None
    # [train]
    optimizer: str = "adagrad"
    learning_rate: float = 0.05
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0
    clip_norm: float | None = 5.0
    test_fraction: float = 0.2
    # [explain]
    method: str = "lrp"
    epsilon: float = 0.001
    delta: float = 1.0
    # [faithfulness]
    p: float = 0.2
    # [ensemble]
    folds: int = 5
    combine: str = "weighted-soft"


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_tuple(raw: str) -> tuple:
    return tuple(int(part) for part in raw.split(",") if part.strip() != "")


def _parse_opt_float(raw: str):
    return None if raw.strip().lower() == "none" else float(raw)


def _parse_opt_str(raw: str):
    return None if raw.strip().lower() == "none" else raw.strip()


_SCHEMA = {
    "data": {
        "corpus": _parse_opt_str,
        "annotations": _parse_opt_str,
        "output_dir": str,
    },
    "preprocess": {
        "lowercase": _parse_bool,
        "normalize_hashtags": _parse_bool,
        "strip_emojis_mentions_duplicates": _parse_bool,
        "min_df": int,
        "max_len": int,
    },
    "model": {
        "architecture": str,
        "embedding_dim": int,
        "conv_filters": _parse_int_tuple,
        "kernel_size": int,
        "pool_size": int,
        "lstm_units": _parse_int_tuple,
        "dense_units": _parse_int_tuple,
        "dropout": float,
        "noise_std": float,
        "activation": str,
        "vocab_size": int,
        "embedding_path": _parse_opt_str,
    },
    "train": {
        "optimizer": str,
        "learning_rate": float,
        "epochs": int,
        "batch_size": int,
        "seed": int,
        "clip_norm": _parse_opt_float,
        "test_fraction": float,
    },
    "explain": {
        "method": str,
        "epsilon": float,
        "delta": float,
    },
    "faithfulness": {
        "p": float,
    },
    "ensemble": {
        "folds": int,
        "combine": str,
    },
}

_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def _cross_checks(cfg: RunConfig) -> list[str]:
    bad = []
    if cfg.min_df < 1:
        bad.append(f"preprocess.min_df must be >= 1, got {cfg.min_df}")
    if cfg.max_len < 1:
        bad.append(f"preprocess.max_len must be >= 1, got {cfg.max_len}")
    known = ARCHITECTURES + BASELINE_ARCHITECTURES
    if cfg.architecture not in known:
        bad.append(
            f"model.architecture must be one of {known}, got {cfg.architecture!r}"
        )
    if cfg.activation not in ("linear", "relu", "tanh"):
        bad.append(f"model.activation unknown: {cfg.activation!r}")
    if not 0.0 <= cfg.dropout < 1.0:
        bad.append(f"model.dropout must be in [0, 1), got {cfg.dropout}")
    if cfg.noise_std < 0:
        bad.append(f"model.noise_std must be >= 0, got {cfg.noise_std}")
    if cfg.kernel_size < 1:
        bad.append(f"model.kernel_size must be >= 1, got {cfg.kernel_size}")
    if cfg.pool_size < 1:
        bad.append(f"model.pool_size must be >= 1, got {cfg.pool_size}")
    if cfg.architecture in ("cnn", "conv-lstm"):
        length = cfg.max_len
        for _ in cfg.conv_filters:
            length //= cfg.pool_size
        if length < 1:
            bad.append(
                f"model: {len(cfg.conv_filters)} pooling stage(s) of size "
                f"{cfg.pool_size} reduce max_len={cfg.max_len} below 1"
            )
    if cfg.optimizer not in ("adagrad", "adam"):
        bad.append(f"train.optimizer must be adagrad or adam, got {cfg.optimizer!r}")
    if cfg.learning_rate < 0:
        bad.append(f"train.learning_rate must be >= 0, got {cfg.learning_rate}")
    if cfg.epochs < 1:
        bad.append(f"train.epochs must be >= 1, got {cfg.epochs}")
    if cfg.batch_size < 1:
        bad.append(f"train.batch_size must be >= 1, got {cfg.batch_size}")
    if cfg.clip_norm is not None and cfg.clip_norm <= 0:
        bad.append(f"train.clip_norm must be positive or none, got {cfg.clip_norm}")
    if not 0.0 < cfg.test_fraction < 1.0:
        bad.append(
            f"train.test_fraction must be in (0, 1), got {cfg.test_fraction}"
        )
    if cfg.method not in ("sa", "lrp", "loo"):
        bad.append(f"explain.method must be sa, lrp or loo, got {cfg.method!r}")
    if cfg.epsilon < 0:
        bad.append(f"explain.epsilon must be >= 0, got {cfg.epsilon}")
    if cfg.delta not in (0.0, 1.0):
        bad.append(f"explain.delta must be 0 or 1, got {cfg.delta}")
    if not 0.0 < cfg.p <= 1.0:
        bad.append(f"faithfulness.p must be in (0, 1], got {cfg.p}")
    if cfg.folds < 2:
        bad.append(f"ensemble.folds must be >= 2, got {cfg.folds}")
    if cfg.combine not in COMBINE_RULES:
        bad.append(f"ensemble.combine must be one of {COMBINE_RULES}, got {cfg.combine!r}")
    return bad


def validate_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config file plus flag overrides.

    All violations (unknown keys, type errors, cross-field failures)
    are collected and raised together as one :class:`ConfigError`.
    """
    cfg = RunConfig()
    violations: list[str] = []
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path, encoding="utf-8")
        if not read:
            raise ConfigError([f"config file not found: {path}"])
        for section in parser.sections():
            if section not in _SCHEMA:
                violations.append(f"unknown section [{section}]")
                continue
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    violations.append(f"unknown key {section}.{key}")
                    continue
                try:
                    setattr(cfg, key, _SCHEMA[section][key](raw))
                except ValueError as exc:
                    violations.append(f"{section}.{key}: {exc}")
    if overrides:
        for key, value in overrides.items():
            if key not in _FIELD_NAMES:
                violations.append(f"unknown override {key!r}")
            elif value is not None:
                setattr(cfg, key, value)
    if not violations:
        violations.extend(_cross_checks(cfg))
    if violations:
        raise ConfigError(violations)
    return cfg
