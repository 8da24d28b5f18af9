"""Sliding-window self-attention with designated global tokens.

A token pair (i, j) is allowed iff |i - j| <= window_half, or either side is
a global position, and j sits before the padding boundary. Non-global query
rows only ever score a band of 2*window_half+1 neighbors plus the global
columns, so cost grows as O(T * window) instead of O(T^2); no dense T x T
score matrix is materialized for those rows. Global rows attend densely.

Score-evaluation counters support the complexity measurements: the banded
counter tracks scores computed for non-global query rows, the dense counter
tracks the reference implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..nn import Dropout, Linear, Module, Tensor, concat, masked_softmax

_COUNTERS = {"banded": 0, "global_rows": 0, "dense": 0}


def reset_score_counters() -> None:
    for k in _COUNTERS:
        _COUNTERS[k] = 0


def score_counters() -> dict:
    return dict(_COUNTERS)


@dataclass(frozen=True)
class AttentionLayout:
    seq_len: int
    valid_len: int
    window_half: int
    global_positions: tuple

    def __post_init__(self):
        if not 0 < self.valid_len <= self.seq_len:
            raise ValueError("valid_len must be in (0, seq_len]")
        if self.window_half < 0:
            raise ValueError("window_half must be >= 0")
        if tuple(sorted(set(self.global_positions))) != self.global_positions:
            raise ValueError("global_positions must be sorted and unique")
        if self.global_positions and not (0 <= self.global_positions[0]
                                          and self.global_positions[-1] < self.valid_len):
            raise ValueError("global positions must lie before the padding boundary")

    def allows(self, i: int, j: int) -> bool:
        """May query i attend key j? Padded rows neither attend nor are attended."""
        if i >= self.valid_len or j >= self.valid_len:
            return False
        return (abs(i - j) <= self.window_half
                or i in self.global_positions
                or j in self.global_positions)

    def dense_mask(self) -> np.ndarray:
        """(T, T) boolean allowed-pair matrix (for the dense reference)."""
        t = np.arange(self.seq_len)
        band = np.abs(t[:, None] - t[None, :]) <= self.window_half
        is_global = np.zeros(self.seq_len, dtype=bool)
        if self.global_positions:
            is_global[list(self.global_positions)] = True
        allowed = band | is_global[:, None] | is_global[None, :]
        inside = t < self.valid_len
        return allowed & inside[:, None] & inside[None, :]


def build_layout(seq_len: int, valid_len: int, cfg) -> AttentionLayout:
    """Standard model layout: task tokens and the static slot are global."""
    return AttentionLayout(seq_len=seq_len, valid_len=valid_len,
                           window_half=cfg.window_half,
                           global_positions=tuple(range(cfg.n_globals)))


@lru_cache(maxsize=512)
def _band_geometry(layout: AttentionLayout):
    """Gather indices and validity mask for the non-global band rows.

    Returns (clipped_indices (T_ng, B), allowed (T_ng, B + G), B). Global
    columns are excluded from the band (they are scored separately); padded
    query rows keep a sentinel self-column so softmax stays defined, their
    output is zeroed afterwards.
    """
    T, V, wh = layout.seq_len, layout.valid_len, layout.window_half
    G = len(layout.global_positions)
    rows = np.arange(G, T)
    offs = np.arange(-wh, wh + 1)
    idx = rows[:, None] + offs[None, :]
    band_ok = (idx >= G) & (idx >= 0) & (idx < V)
    pad_rows = rows >= V
    if pad_rows.any():
        band_ok[pad_rows] = False
        band_ok[pad_rows, wh] = True
    clipped = np.clip(idx, 0, T - 1)
    if G:
        glob_ok = np.ones((T - G, G), dtype=bool)
        glob_ok[pad_rows] = False
        allowed = np.concatenate([band_ok, glob_ok], axis=1)
    else:
        allowed = band_ok
    allowed.setflags(write=False)
    clipped.setflags(write=False)
    return clipped, allowed, len(offs)


class SlidingGlobalAttention(Module):
    """Multi-head attention over the sliding+global layout.

    Shared q/k/v/output projections for global and banded tokens; attention
    dropout is applied to the normalized weights.
    """

    def __init__(self, d: int, heads: int, dropout: float,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if d % heads:
            raise ValueError("d must be divisible by heads")
        self.d = d
        self.heads = heads
        self.wq = Linear(d, d, rng, dtype=dtype)
        self.wk = Linear(d, d, rng, dtype=dtype)
        self.wv = Linear(d, d, rng, dtype=dtype)
        self.wo = Linear(d, d, rng, dtype=dtype)
        self.drop = Dropout(dropout, rng)

    def weight_arrays(self) -> dict:
        return {name: (lin.weight.data, lin.bias.data)
                for name, lin in (("wq", self.wq), ("wk", self.wk),
                                  ("wv", self.wv), ("wo", self.wo))}

    def forward(self, x: Tensor, layout: AttentionLayout, capture: dict = None) -> Tensor:
        T = layout.seq_len
        if x.shape[0] != T:
            raise ValueError(f"sequence length {x.shape[0]} does not match layout {T}")
        G = len(layout.global_positions)
        if layout.global_positions != tuple(range(G)):
            raise ValueError("sparse path requires global positions to be a contiguous prefix")
        H = self.heads
        dh = self.d // H
        scale = 1.0 / math.sqrt(dh)
        V = layout.valid_len

        q3 = self.wq(x).reshape(T, H, dh).transpose(1, 0, 2)
        k3 = self.wk(x).reshape(T, H, dh).transpose(1, 0, 2)
        v3 = self.wv(x).reshape(T, H, dh).transpose(1, 0, 2)

        parts = []
        if G:
            key_ok = (np.arange(T) < V)[None, None, :]
            s_glob_rows = (q3[:, :G, :] @ k3.transpose(0, 2, 1)) * scale
            w_glob_rows = self.drop(masked_softmax(s_glob_rows, key_ok, axis=-1))
            parts.append(w_glob_rows @ v3)
            _COUNTERS["global_rows"] += G * T
        if G < T:
            clipped, allowed, B = _band_geometry(layout)
            n_band = T - G
            q_ng = q3[:, G:, :]
            k_band = k3[:, clipped, :]
            s_band = (q_ng.reshape(H, n_band, 1, dh)
                      @ k_band.transpose(0, 1, 3, 2)).reshape(H, n_band, B) * scale
            if G:
                s_gcols = (q_ng @ k3[:, :G, :].transpose(0, 2, 1)) * scale
                scores = concat([s_band, s_gcols], axis=2)
            else:
                scores = s_band
            w = self.drop(masked_softmax(scores, allowed[None, :, :], axis=-1))
            v_band = v3[:, clipped, :]
            out_ng = (w[:, :, :B].reshape(H, n_band, 1, B) @ v_band).reshape(H, n_band, dh)
            if G:
                out_ng = out_ng + w[:, :, B:] @ v3[:, :G, :]
            parts.append(out_ng)
            _COUNTERS["banded"] += n_band * (B + G)

        out3 = parts[0] if len(parts) == 1 else concat(parts, axis=1)
        out = out3.transpose(1, 0, 2).reshape(T, self.d)
        if V < T:
            row_ok = (np.arange(T) < V).astype(out.data.dtype)[:, None]
            out = out * Tensor(row_ok)
        if capture is not None:
            capture["G"] = G
            capture["B"] = None if G >= T else B
            capture["clipped"] = None if G >= T else clipped
            capture["w_global_rows"] = w_glob_rows.data.copy() if G else None
            capture["w_band"] = w.data.copy() if G < T else None
        return self.wo(out)


def scatter_weights(capture: dict, layout: AttentionLayout) -> np.ndarray:
    """Reassemble the (heads, T, T) attention-weight matrix actually used by
    the sparse path; pairs never scored stay exactly zero."""
    T, V = layout.seq_len, layout.valid_len
    G = capture["G"]
    some = capture["w_global_rows"] if G else capture["w_band"]
    H = some.shape[0]
    full = np.zeros((H, T, T), dtype=some.dtype)
    if G:
        full[:, :G, :] = capture["w_global_rows"]
    if G < T:
        w = capture["w_band"]
        B = capture["B"]
        clipped = capture["clipped"]
        rows = np.arange(G, T)
        np.add.at(full, (slice(None), rows[:, None], clipped), w[:, :, :B])
        if G:
            full[:, G:, :G] = w[:, :, B:]
    full[:, V:, :] = 0.0
    return full


def dense_attention_reference(x: np.ndarray, layout: AttentionLayout,
                              weights: dict) -> np.ndarray:
    """Straightforward O(T^2) multi-head attention used as the equivalence
    oracle. Materializes the full score matrix; numpy only, no autodiff."""
    T = layout.seq_len
    V = layout.valid_len
    wq, bq = weights["wq"]
    wk, bk = weights["wk"]
    wv, bv = weights["wv"]
    wo, bo = weights["wo"]
    d = wq.shape[0]
    H = weights["heads"]
    dh = d // H
    q = (x @ wq + bq).reshape(T, H, dh).transpose(1, 0, 2)
    k = (x @ wk + bk).reshape(T, H, dh).transpose(1, 0, 2)
    v = (x @ wv + bv).reshape(T, H, dh).transpose(1, 0, 2)
    scores = (q @ k.transpose(0, 2, 1)) / math.sqrt(dh)
    _COUNTERS["dense"] += T * T
    mask = layout.dense_mask()
    neg = np.array(-np.inf, dtype=scores.dtype)
    scores = np.where(mask[None, :, :], scores, neg)
    out = np.zeros((H, T, dh), dtype=scores.dtype)
    live = mask.any(axis=1)
    m = scores[:, live, :].max(axis=-1, keepdims=True)
    e = np.exp(scores[:, live, :] - m)
    w = e / e.sum(axis=-1, keepdims=True)
    out[:, live, :] = w @ v
    out[:, V:, :] = 0.0
    return out.transpose(1, 0, 2).reshape(T, d) @ wo + bo
