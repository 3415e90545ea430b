"""Run configuration.

A config file is line-oriented `section.key=value` (``#`` comments and blank
lines allowed).  Every key has a documented default; unknown keys are
rejected.  Command-line flags override file values.
"""

from __future__ import annotations

import hashlib

from .evaluation import EvalConfig
from .training import TrainConfig


class ConfigError(Exception):
    pass


# key -> (type, default)
SCHEMA: dict[str, tuple[type, object]] = {
    "seed": (int, 0),
    "data.train": (str, ""),
    "data.dev": (str, ""),
    "data.test": (str, ""),
    "data.punct_rule": (str, "upos"),          # upos (UD) | deprel (Stanford)
    "vocab.min_freq": (int, 2),
    "model.variant": (str, "sentence,graph"),
    "model.layers": (int, 2),
    "model.heads": (int, 4),
    "model.dim": (int, 64),
    "model.ff_dim": (int, 128),
    "model.max_positions": (int, 512),
    "model.dropout": (float, 0.05),
    "model.exist_hidden": (int, 64),
    "model.relation_hidden": (int, 32),
    "train.lr": (float, 1e-3),
    "train.beta1": (float, 0.9),
    "train.beta2": (float, 0.999),
    "train.eps": (float, 1e-6),
    "train.weight_decay": (float, 0.01),
    "train.clip": (float, 1.0),
    "train.warmup": (float, 0.01),
    "train.epochs": (int, 12),
    "train.patience": (int, 5),
    "eval.punctuation": (str, "include"),      # include (UD) | exclude (WSJ)
}


class RunConfig:
    def __init__(self):
        self.values = {key: default for key, (_, default) in SCHEMA.items()}

    def set(self, key: str, raw) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        typ, _ = SCHEMA[key]
        try:
            self.values[key] = typ(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} expects {typ.__name__}, got {raw!r}") from None

    def get(self, key: str):
        return self.values[key]

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        try:
            with open(path, encoding="utf-8") as handle:
                for line_no, raw in enumerate(handle, start=1):
                    line = raw.strip()
                    if not line or line.startswith("#"):
                        continue
                    if "=" not in line:
                        raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
                    key, _, value = line.partition("=")
                    cfg.set(key.strip(), value.strip())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cfg

    def canonical(self) -> str:
        return "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values)) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def model_kwargs(self) -> dict:
        return {
            "layers": self.get("model.layers"),
            "heads": self.get("model.heads"),
            "model_dim": self.get("model.dim"),
            "ff_dim": self.get("model.ff_dim"),
            "max_positions": self.get("model.max_positions"),
            "dropout": self.get("model.dropout"),
            "exist_hidden": self.get("model.exist_hidden"),
            "relation_hidden": self.get("model.relation_hidden"),
        }

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.get("train.lr"),
            beta1=self.get("train.beta1"),
            beta2=self.get("train.beta2"),
            epsilon=self.get("train.eps"),
            weight_decay=self.get("train.weight_decay"),
            clip_norm=self.get("train.clip"),
            warmup=self.get("train.warmup"),
            epochs=self.get("train.epochs"),
            patience=self.get("train.patience"),
            seed=self.get("seed"),
        )

    def eval_config(self) -> EvalConfig:
        mode = self.get("eval.punctuation")
        try:
            return EvalConfig(punctuation=mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def punct_rule(self) -> str:
        rule = self.get("data.punct_rule")
        if rule not in ("upos", "deprel"):
            raise ConfigError(f"data.punct_rule must be 'upos' or 'deprel', got {rule!r}")
        return rule
