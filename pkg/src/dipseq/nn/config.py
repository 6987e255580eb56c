from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Encoder architecture. Defaults are the full-size production settings."""

    layers: int = 6
    dim: int = 512
    heads: int = 8
    head_dim: int = 64
    proj_k: int = 128
    max_len: int = 4096
    vocab_size: int = 32000
    dropout: float = 0.1
    share_kv: bool = False
    single_kv_head: bool = False
    ff_dim: int | None = None

    def __post_init__(self):
        if self.layers < 0 or self.dim < 1 or self.heads < 1 or self.head_dim < 1:
            raise ConfigError("layers, dim, heads and head_dim must be positive")
        if self.heads * self.head_dim != self.dim:
            raise ConfigError(f"heads x head_dim = {self.heads * self.head_dim} does not match dim = {self.dim}")
        if not 1 <= self.proj_k <= self.max_len:
            raise ConfigError(f"proj_k {self.proj_k} must be in [1, max_len={self.max_len}]")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.vocab_size < 5:
            raise ConfigError("vocab_size must leave room for the 4 special tokens")

    @property
    def ffn(self) -> int:
        return self.ff_dim if self.ff_dim is not None else 4 * self.dim

    @property
    def kv_heads(self) -> int:
        return 1 if self.single_kv_head else self.heads

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class MaskingPolicy:
    replace_rate: float = 0.15
    mask_frac: float = 0.8
    random_frac: float = 0.1
    keep_frac: float = 0.1

    def __post_init__(self):
        if abs(self.mask_frac + self.random_frac + self.keep_frac - 1.0) > 1e-9:
            raise ConfigError("mask, random and keep fractions must sum to 1")
        if not 0.0 <= self.replace_rate <= 1.0:
            raise ConfigError("replace_rate must lie in [0, 1]")


@dataclass(frozen=True)
class TrainSchedule:
    """Linear warmup to ``base_lr`` then per-step exponential decay."""

    base_lr: float = 1e-4
    warmup_steps: int = 1000
    decay: float = 0.999991
    total_steps: int = 200_000

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0, 1]")
        if self.warmup_steps < 0 or self.total_steps < 0:
            raise ConfigError("step counts must be non-negative")
