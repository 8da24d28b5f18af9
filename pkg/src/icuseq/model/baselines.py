"""Comparison models: GRU over hourly-resampled tabular series, GRU with
additive attention, and the GRU-with-attention variant that consumes the
tokenized embeddings. All emit 7 logits and train under the same loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..nn import Linear, Module, Tensor, concat, masked_softmax, softmax
from ..tokenizer import STATIC_ID, TASK_IDS, Vocabulary
from .config import ModelConfig
from .embedding import SequenceEmbedder


@dataclass
class TabularSeries:
    """Hourly-resampled stay: standardized values plus the presence mask
    recording which (hour, variable) bins held real measurements."""

    values: np.ndarray    # (H, V)
    presence: np.ndarray  # (H, V) bool

    def __post_init__(self):
        if self.values.shape != self.presence.shape:
            raise ValueError("values and presence shapes differ")


def tabularize(stay, vocab: Vocabulary, dev_medians: dict) -> TabularSeries:
    """1-hour binning: in-bin mean, forward fill, dev-median backfill.

    Bin h covers hours [h, h+1). A variable's entry is the mean of its
    measurements in the bin; empty bins carry the most recent prior value
    forward; bins before a variable's first measurement take the dev-cohort
    median. Values are then standardized with the tokenizer's per-variable
    current-value statistics. Out-of-vocabulary events are dropped.
    """
    names = vocab.variable_names
    col = {name: i for i, name in enumerate(names)}
    H = max(1, math.ceil(stay.los_hours))
    V = len(names)
    sums = np.zeros((H, V))
    counts = np.zeros((H, V))
    for t, name, v in stay.events:
        j = col.get(name)
        if j is None:
            continue
        h = min(int(t), H - 1)
        sums[h, j] += v
        counts[h, j] += 1.0
    presence = counts > 0
    values = np.zeros((H, V))
    medians = np.array([dev_medians[name] for name in names])
    last = medians.copy()
    for h in range(H):
        row = presence[h]
        last[row] = sums[h, row] / counts[h, row]
        values[h] = last
    mean0 = np.array([vocab.value_mean[name][0] for name in names])
    sd0 = np.array([vocab.value_sd[name][0] for name in names])
    return TabularSeries(values=(values - mean0) / sd0, presence=presence)


class GruCell(Module):
    """Standard reset/update-gate cell; the update gate interpolates toward
    the previous state: h = (1 - z) * n + z * h_prev."""

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.n_hidden = n_hidden
        self.w = Linear(n_in, 3 * n_hidden, rng, dtype=dtype)
        self.u = Linear(n_hidden, 3 * n_hidden, rng, dtype=dtype)

    def forward(self, x_t: Tensor, h_prev: Tensor) -> Tensor:
        nh = self.n_hidden
        gx = self.w(x_t)
        gh = self.u(h_prev)
        r = (gx[:, :nh] + gh[:, :nh]).sigmoid()
        z = (gx[:, nh:2 * nh] + gh[:, nh:2 * nh]).sigmoid()
        n = (gx[:, 2 * nh:] + r * gh[:, 2 * nh:]).tanh()
        return (1.0 - z) * n + z * h_prev


class AdditiveAttention(Module):
    """Alignment scores from a learned vector over tanh-projected states;
    softmax weights over the valid steps; weighted sum as the readout."""

    def __init__(self, n_hidden: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.proj = Linear(n_hidden, n_hidden, rng, dtype=dtype)
        self.score = Linear(n_hidden, 1, rng, dtype=dtype)

    def forward(self, states: Tensor, valid_len: int = None):
        scores = self.score(self.proj(states).tanh())  # (H, 1)
        if valid_len is None or valid_len >= states.shape[0]:
            weights = softmax(scores, axis=0)
        else:
            mask = (np.arange(states.shape[0]) < valid_len)[:, None]
            weights = masked_softmax(scores, mask, axis=0)
        context = weights.transpose(1, 0) @ states  # (1, H) @ (H, d)
        return context, weights


class _StaticConcatHead(Module):
    """Sequence readout concatenated with the static vector, then two tanh
    affine layers and the task head."""

    def __init__(self, n_hidden: int, static_dim: int, tasks: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.fc1 = Linear(n_hidden + static_dim, n_hidden, rng, dtype=dtype)
        self.fc2 = Linear(n_hidden, n_hidden, rng, dtype=dtype)
        self.head = Linear(n_hidden, tasks, rng, dtype=dtype)
        self.dtype = dtype

    def forward(self, readout: Tensor, static_vec: np.ndarray) -> Tensor:
        s = Tensor(np.asarray(static_vec, dtype=self.dtype).reshape(1, -1))
        z = concat([readout, s], axis=1)
        z = self.fc2(self.fc1(z).tanh()).tanh()
        return self.head(z).reshape(-1)


class GruClassifier(Module):
    """GRU over the tabular series; predictions from the final hidden state."""

    use_attention = False

    def __init__(self, n_features: int, static_dim: int, cfg: ModelConfig):
        super().__init__()
        rng = np.random.default_rng(cfg.seed)
        dt = cfg.np_dtype
        self.cfg = cfg
        self.cell = GruCell(n_features, cfg.d, rng, dtype=dt)
        if self.use_attention:
            self.attn = AdditiveAttention(cfg.d, rng, dtype=dt)
        self.head = _StaticConcatHead(cfg.d, static_dim, cfg.tasks, rng, dtype=dt)
        self.dtype = dt

    def forward(self, series: np.ndarray, static_vec: np.ndarray) -> Tensor:
        series = np.asarray(series, dtype=self.dtype)
        h = Tensor(np.zeros((1, self.cfg.d), dtype=self.dtype))
        states = []
        for t in range(series.shape[0]):
            h = self.cell(Tensor(series[t:t + 1]), h)
            if self.use_attention:
                states.append(h)
        if self.use_attention:
            stack = states[0] if len(states) == 1 else concat(states, axis=0)
            readout, _ = self.attn(stack)
        else:
            readout = h
        return self.head(readout, static_vec)


class GruAttentionClassifier(GruClassifier):
    """Same pipeline, with the additive-attention readout over all hidden
    states replacing the final-state readout."""

    use_attention = True


class TokenizedGruClassifier(Module):
    """GRU-with-attention over the tokenized embedding rows.

    Consumes the assembled sequence, drops the task-token prefix (a
    Transformer readout device), and keeps the encoded static slot as the
    first input step.
    """

    def __init__(self, vocab_size: int, static_dim: int, cfg: ModelConfig):
        super().__init__()
        rng = np.random.default_rng(cfg.seed)
        dt = cfg.np_dtype
        self.cfg = cfg
        self.embedder = SequenceEmbedder(vocab_size, static_dim, cfg, rng)
        self.cell = GruCell(cfg.d, cfg.d, rng, dtype=dt)
        self.attn = AdditiveAttention(cfg.d, rng, dtype=dt)
        self.fc1 = Linear(cfg.d, cfg.d, rng, dtype=dt)
        self.fc2 = Linear(cfg.d, cfg.d, rng, dtype=dt)
        self.head = Linear(cfg.d, cfg.tasks, rng, dtype=dt)
        self.dtype = dt

    def forward(self, ids: np.ndarray, pos: np.ndarray, cont: np.ndarray,
                static_vec: np.ndarray) -> Tensor:
        k = self.cfg.tasks
        expected = np.array(TASK_IDS[:k] + (STATIC_ID,))
        if len(ids) < k + 1 or not np.array_equal(ids[:k + 1], expected):
            raise ValueError("sequence lacks the task/static special-token prefix")
        rows = self.embedder(ids, pos, cont, static_vec, static_slot=k)[k:]
        h = Tensor(np.zeros((1, self.cfg.d), dtype=self.dtype))
        states = []
        for t in range(rows.shape[0]):
            h = self.cell(rows[t:t + 1], h)
            states.append(h)
        stack = states[0] if len(states) == 1 else concat(states, axis=0)
        context, _ = self.attn(stack)
        z = self.fc2(self.fc1(context).tanh()).tanh()
        return self.head(z).reshape(-1)
