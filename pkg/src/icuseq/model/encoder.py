"""Encoder stack: post-norm residual layers over the sliding+global
attention, per-layer capture of the task-token rows, and task heads that
read the concatenation of a task's row across all layers.
"""

from __future__ import annotations

import math

import numpy as np

from ..nn import Dropout, LayerNorm, Linear, Module, Parameter, Tensor, bce_with_logits, concat
from ..tokenizer import STATIC_ID, TASK_IDS
from .attention import SlidingGlobalAttention, build_layout
from .config import ModelConfig
from .embedding import SequenceEmbedder


class EncoderLayer(Module):
    """x <- LN(x + Attn(x)); x <- LN(x + FFN(x)); FFN is affine/GELU/affine."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        dt = cfg.np_dtype
        self.attn = SlidingGlobalAttention(cfg.d, cfg.heads, cfg.dropout, rng, dtype=dt)
        self.ln1 = LayerNorm(cfg.d, dtype=dt)
        self.ln2 = LayerNorm(cfg.d, dtype=dt)
        self.ff1 = Linear(cfg.d, cfg.ff, rng, dtype=dt)
        self.ff2 = Linear(cfg.ff, cfg.d, rng, dtype=dt)
        self.drop1 = Dropout(cfg.dropout, rng)
        self.drop2 = Dropout(cfg.dropout, rng)

    def forward(self, x: Tensor, layout, capture: dict = None) -> Tensor:
        x = self.ln1(x + self.drop1(self.attn(x, layout, capture)))
        return self.ln2(x + self.drop2(self.ff2(self.ff1(x).gelu())))


class TransformerClassifier(Module):
    """Full model: embed, run the encoder stack, read each task token's row
    at every layer, and map each task's concatenated rows to one logit."""

    def __init__(self, vocab_size: int, static_dim: int, cfg: ModelConfig):
        super().__init__()
        rng = np.random.default_rng(cfg.seed)
        dt = cfg.np_dtype
        self.cfg = cfg
        self.embedder = SequenceEmbedder(vocab_size, static_dim, cfg, rng)
        self.layers = [EncoderLayer(cfg, rng) for _ in range(cfg.layers)]
        feat_dim = cfg.layers * cfg.d
        bound = 1.0 / math.sqrt(feat_dim)
        self.head_weight = Parameter(
            rng.uniform(-bound, bound, size=(cfg.tasks, feat_dim)).astype(dt))
        self.head_bias = Parameter(np.zeros(cfg.tasks, dtype=dt))

    def _check_prefix(self, ids: np.ndarray) -> None:
        k = self.cfg.tasks
        expected = np.array(TASK_IDS[:k] + (STATIC_ID,))
        if len(ids) < k + 1 or not np.array_equal(ids[:k + 1], expected):
            raise ValueError("sequence lacks the task/static special-token prefix")

    def forward(self, ids: np.ndarray, pos: np.ndarray, cont: np.ndarray,
                static_vec: np.ndarray) -> Tensor:
        self._check_prefix(ids)
        k = self.cfg.tasks
        x = self.embedder(ids, pos, cont, static_vec, static_slot=k)
        layout = build_layout(len(ids), len(ids), self.cfg)
        task_rows = []
        for layer in self.layers:
            x = layer(x, layout)
            task_rows.append(x[0:k])
        feats = task_rows[0] if len(task_rows) == 1 else concat(task_rows, axis=1)
        return (feats * self.head_weight).sum(axis=1) + self.head_bias


def multi_task_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Unweighted mean over tasks (and stays) of BCE-with-logits."""
    labels = np.asarray(labels)
    if labels.shape != logits.shape:
        raise ValueError(f"labels shape {labels.shape} != logits shape {logits.shape}")
    return bce_with_logits(logits, labels).mean()
