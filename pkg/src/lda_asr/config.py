"""Run configuration: a flat ``key=value`` text format with strict key checking."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    # features
    raw_dim: int = 32
    stack_factor: int = 4
    # encoder
    model_dim: int = 128
    num_heads: int = 4
    ffn_mult: int = 4
    conv_kernel: int = 7
    causal_layers: int = 2
    noncausal_layers: int = 2
    left_context: int = -1          # -1: unlimited
    max_frames: int = 256
    ln_eps: float = 1e-5
    # adapters
    num_languages: int = 4
    adapter_hidden: int = 8
    adapter_bias: bool = True
    adapter_after_last: bool = True
    # decoder
    vocab_size: int = 32
    embed_dim: int = 32
    joint_dim: int = 32
    # loss
    first_pass_weight: float = 0.5
    second_pass_weight: float = 0.5
    fastemit_lambda: float = 5e-3
    # optimiser
    peak_lr: float = 1.8e-3
    warmup_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    ema_decay: float = 0.999
    batch_size: int = 16
    language_sampling: str = "language"
    backbone_sampling: str = "utterance"
    # SpecAugment (desk-scale lengths)
    spec_augment: bool = True
    n_freq_masks: int = 2
    max_freq_len: int = 7
    n_time_masks: int = 2
    max_time_len: int = 5
    # decoding
    max_symbols_per_frame: int = 3
    # noisy student
    nst_iterations: int = 4
    keep_fraction: float = 0.6
    per_language_filter: bool = True
    lm_weight: float = 0.3
    beam_width: int = 4
    lm_order: int = 3
    lm_smoothing: float = 0.1
    # synthetic data
    head_languages: int = 2
    head_supervised: int = 200
    tail_supervised: int = 10
    unlabeled_count: int = 120
    test_count: int = 24
    noise_scale: float = 0.1
    remapped_fraction: float = 0.25
    accent_scale: float = 0.5
    # schedule lengths
    backbone_steps: int = 600
    finetune_steps: int = 300
    student_steps: int = 200
    eval_every: int = 50
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model_dim % self.num_heads:
            raise ConfigError("model_dim must be divisible by num_heads")
        if self.conv_kernel % 2 == 0:
            raise ConfigError("conv_kernel must be odd")
        if self.causal_layers < 1 or self.noncausal_layers < 1:
            raise ConfigError("each encoder pass needs at least one layer")
        if not 1 <= self.adapter_hidden < self.model_dim:
            raise ConfigError("adapter_hidden must satisfy 1 <= h < model_dim")
        if self.num_languages < 1 or self.vocab_size < 1:
            raise ConfigError("num_languages and vocab_size must be positive")
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError("keep_fraction must lie in (0, 1]")
        if self.nst_iterations < 1:
            raise ConfigError("nst_iterations must be >= 1")
        if self.max_symbols_per_frame < 1 or self.beam_width < 1:
            raise ConfigError("decoding limits must be >= 1")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")
        if self.stack_factor < 1:
            raise ConfigError("stack_factor must be >= 1")

    @property
    def input_dim(self):
        return self.raw_dim * self.stack_factor

    @property
    def total_layers(self):
        return self.causal_layers + self.noncausal_layers

    @property
    def blank(self):
        return self.vocab_size

    @classmethod
    def full_scale(cls, **overrides):
        """Production-sized architecture (not trainable on a desk)."""
        base = dict(raw_dim=128, stack_factor=4, model_dim=512, num_heads=8, conv_kernel=15,
                    causal_layers=10, noncausal_layers=7, num_languages=39, adapter_hidden=45,
                    vocab_size=4096, embed_dim=640, joint_dim=640, n_freq_masks=2,
                    max_freq_len=27, n_time_masks=2, max_time_len=50, batch_size=4096)
        base.update(overrides)
        return cls(**base)

    # -- text form ----------------------------------------------------------

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_text(cls, text, **overrides):
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            values[key] = _parse_value(known[key], value, lineno)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, **overrides)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _parse_value(field, value, lineno):
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    try:
        if kind == "bool":
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0"):
                raise ValueError(value)
            return lowered in ("true", "1")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value
    except ValueError:
        raise ConfigError(f"line {lineno}: bad {kind} value {value!r} for {field.name}") from None
