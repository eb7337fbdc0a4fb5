"""Model and training configuration."""

from __future__ import annotations

from dataclasses import dataclass

CONTINUOUS = "continuous"
SOFTMAX = "softmax"


@dataclass
class ModelConfig:
    """Transformer shape. Defaults are desk-scale (CPU-trainable); the
    full-scale setting is 512 d_model, 6+6 layers, 8 heads, dropout 0.1."""

    d_model: int = 128
    num_layers_enc: int = 2
    num_layers_dec: int = 2
    num_heads: int = 4
    ffn_dim: int = 256
    dropout_rate: float = 0.1
    embed_dim: int = 64
    head_kind: str = CONTINUOUS
    max_len: int = 256
    seed: int = 1

    def __post_init__(self):
        if self.head_kind not in (CONTINUOUS, SOFTMAX):
            raise ValueError(f"unknown head_kind {self.head_kind!r}")
        if min(self.d_model, self.num_layers_enc, self.num_layers_dec,
               self.num_heads, self.ffn_dim, self.embed_dim, self.max_len) <= 0:
            raise ValueError("all dimensions must be positive")
        if self.d_model % self.num_heads != 0:
            raise ValueError("d_model must be divisible by num_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class TrainConfig:
    """Optimization settings; the learning rate decays linearly to zero
    over max_steps."""

    batch_tokens: int = 4000
    lr_initial: float = 7e-4
    max_steps: int = 10_000
    validate_every: int = 2000
    patience: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    label_smoothing: float = 0.1
    vmf_lambda1: float = 0.02
    seed: int = 1

    def __post_init__(self):
        if self.batch_tokens <= 0 or self.validate_every <= 0 or self.patience <= 0:
            raise ValueError("counts must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.lr_initial <= 0:
            raise ValueError("lr_initial must be > 0")
