# config/run_config.py
"""
Resolved run configuration: profile defaults, then a key = value file, then flags
"""
import logging
from dataclasses import dataclass

from dotenv import dotenv_values

from xdlm_pipeline.config.settings import Config
from xdlm_pipeline.diffusion.schedule import make_schedule
from xdlm_pipeline.exceptions import ConfigurationError
from xdlm_pipeline.model.denoiser import ModelConfig

TDLM_LOSS_SCOPES = ("noised", "full")


@dataclass
class TrainConfig:
    lr: float = 5e-4
    warmup_steps: int = 500
    weight_decay: float = 0.0005
    dropout: float = 0.1
    max_tokens_per_batch: int = 2048
    max_len: int = 64
    length_weight: float = 0.1
    T: int = 20
    seed: int = 1
    mask_ratio: float = 0.15
    tdlm_loss_scope: str = "noised"
    checkpoint_interval: int = 500

    def validate(self, model_max_len=None):
        numeric = ("lr", "warmup_steps", "weight_decay", "dropout", "max_tokens_per_batch",
                   "max_len", "length_weight", "T", "mask_ratio", "checkpoint_interval")
        for name in numeric:
            if getattr(self, name) < 0:
                raise ConfigurationError(f"TrainConfig.{name} must be nonnegative, got {getattr(self, name)}")
        if model_max_len is not None and self.max_len > model_max_len:
            raise ConfigurationError(f"TrainConfig.max_len {self.max_len} exceeds model max_len {model_max_len}")
        if self.tdlm_loss_scope not in TDLM_LOSS_SCOPES:
            raise ConfigurationError(f"Unknown tdlm_loss_scope {self.tdlm_loss_scope!r}")
        return self


@dataclass
class DecodeConfig:
    n_iterations: int = 20
    length_beam: int = 1
    routing: str = "topk"
    seed: int = 3
    sample_x0: bool = False
    temperature: float = 1.0

    def validate(self):
        if self.n_iterations < 1:
            raise ConfigurationError(f"n_iterations must be >= 1, got {self.n_iterations}")
        if self.length_beam < 1:
            raise ConfigurationError(f"length_beam must be >= 1, got {self.length_beam}")
        if self.routing not in ("stochastic", "topk"):
            raise ConfigurationError(f"Unknown routing mode {self.routing!r}")
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")
        return self


def _coerce(key, raw, default):
    if raw is None:
        raise ConfigurationError(f"Config key {key} has no value")
    if isinstance(default, bool):
        lowered = str(raw).strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"Config key {key} expects a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigurationError(f"Config key {key} expects {type(default).__name__}, got {raw!r}") from None
    return str(raw)


class RunConfig:
    """Flat resolved configuration shared by every subcommand."""

    def __init__(self, values, profile):
        self.values = values
        self.profile = profile

    @classmethod
    def resolve(cls, profile="toy", config_file=None, overrides=None):
        if profile not in Config.PROFILES:
            raise ConfigurationError(f"Unknown profile {profile!r}, expected one of {sorted(Config.PROFILES)}")
        defaults = Config.PROFILES[profile]
        values = dict(defaults)

        layers = []
        if config_file:
            # dotenv_values parses the file only; the process environment is not read
            layers.append((config_file, dotenv_values(config_file)))
        if overrides:
            layers.append(("flags", {k: v for k, v in overrides.items() if v is not None}))

        for origin, layer in layers:
            for key, raw in layer.items():
                if key == "profile":
                    continue
                if key.startswith("path_"):
                    values[key] = str(raw)
                elif key in defaults:
                    values[key] = _coerce(key, raw, defaults[key])
                else:
                    raise ConfigurationError(f"Unknown config key {key!r} in {origin}")
        logging.info(f"Resolved {profile} profile with {len(layers)} override layer(s)")
        return cls(values, profile)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def seed_for(self, purpose):
        return self.values['seed'] + Config.SEED_OFFSETS[purpose]

    def schedule(self):
        return make_schedule(self.values['schedule_kind'], self.values['diffusion_steps'])

    def model_config(self, vocab_size, n_langs):
        v = self.values
        return ModelConfig(
            n_layers_enc=v['model_layers_enc'], n_layers_dec=v['model_layers_dec'],
            hidden=v['model_hidden'], n_heads=v['model_heads'], ffn=v['model_ffn'],
            max_len=v['model_max_len'], n_timesteps=v['diffusion_steps'] + 1,
            dropout=v['train_dropout'], vocab_size=vocab_size, n_langs=n_langs,
        ).validate()

    def train_config(self, task="tdlm"):
        v = self.values
        return TrainConfig(
            lr=v['train_finetune_lr'] if task == "finetune" else v['train_lr'],
            warmup_steps=v['train_warmup_steps'], weight_decay=v['train_weight_decay'],
            dropout=v['train_dropout'], max_tokens_per_batch=v['train_max_tokens'],
            max_len=v['train_max_len'], length_weight=v['train_length_weight'],
            T=v['diffusion_steps'], seed=self.seed_for('batches'),
            mask_ratio=v['train_mask_ratio'], tdlm_loss_scope=v['train_tdlm_loss_scope'],
            checkpoint_interval=v['train_checkpoint_interval'],
        ).validate(v['model_max_len'])

    def decode_config(self):
        v = self.values
        return DecodeConfig(
            n_iterations=v['decode_iterations'], length_beam=v['decode_length_beam'],
            routing=v['decode_routing'], seed=self.seed_for('decode'),
            sample_x0=v['decode_sample_x0'], temperature=v['decode_temperature'],
        ).validate()

    def snapshot(self, path):
        """Write the resolved values in the same key = value format."""
        with open(path, 'w', encoding='utf-8', newline="\n") as f:
            f.write(f"profile = {self.profile}\n")
            for key in sorted(self.values):
                value = self.values[key]
                if isinstance(value, bool):
                    value = str(value).lower()
                f.write(f"{key} = {value!r}\n" if isinstance(value, float) else f"{key} = {value}\n")
        logging.info(f"Wrote resolved config snapshot to {path}")
        return path
