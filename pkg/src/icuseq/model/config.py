"""Model hyperparameters."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 8
    d: int = 128
    ff: int = 512
    heads: int = 8
    window: int = 128      # total span; half on each side
    dropout: float = 0.1
    tasks: int = 7
    discrete_only: bool = False
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.layers < 1 or self.d < 1 or self.ff < 1 or self.heads < 1 or self.tasks < 1:
            raise ValueError("layers, d, ff, heads and tasks must be positive")
        if self.d % self.heads:
            raise ValueError(f"hidden size {self.d} not divisible by {self.heads} heads")
        if self.window <= 0 or self.window % 2:
            raise ValueError(f"window must be even and positive, got {self.window}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def window_half(self) -> int:
        return self.window // 2

    @property
    def n_globals(self) -> int:
        """Task tokens plus the static token."""
        return self.tasks + 1

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


def discrete_only_switch(cfg: ModelConfig) -> ModelConfig:
    """Ablation: drop the continuous time/value path from the embedding."""
    return dataclasses.replace(cfg, discrete_only=True)
