"""Token embedding: id lookup + sinusoidal position + projected time/values,
summed; the static slot is replaced by an encoded static vector.
"""

from __future__ import annotations

import numpy as np

from ..nn import EmbeddingTable, Linear, Module, Tensor, concat
from .config import ModelConfig


def sinusoidal_table(positions, d: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal encodings for an array of (possibly repeated) positions.

    Even columns carry sin(pos / 10000^(2i/d)), odd columns the matching cos.
    Equal positions produce identical rows.
    """
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    half = (d + 1) // 2
    i = np.arange(half, dtype=np.float64)
    angles = pos / np.power(10000.0, 2.0 * i / d)
    out = np.empty((pos.shape[0], 2 * half), dtype=np.float64)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out[:, :d].astype(dtype)


def sinusoidal_encoding(pos: int, d: int) -> np.ndarray:
    """Encoding of a single positional index."""
    return sinusoidal_table([pos], d).ravel()


class SequenceEmbedder(Module):
    """Three-path token embedding plus the static-vector encoder.

    Event and task tokens embed as table[var_id] + sinusoidal(pos) +
    affine([t_abs ++ values]); the time/value path is one affine map with no
    nonlinearity. The static slot bypasses all token paths: its row is a
    two-layer projection of the static feature vector plus sinusoidal(0).
    With ``discrete_only`` set, the time/value path is zeroed out and only
    id + position survive.
    """

    def __init__(self, vocab_size: int, static_dim: int, cfg: ModelConfig,
                 rng: np.random.Generator):
        super().__init__()
        dt = cfg.np_dtype
        self.d = cfg.d
        self.discrete_only = cfg.discrete_only
        self.dtype = dt
        self.id_table = EmbeddingTable(vocab_size, cfg.d, rng, dtype=dt)
        self.time_value = Linear(10, cfg.d, rng, dtype=dt)
        self.static_fc1 = Linear(static_dim, cfg.d, rng, dtype=dt)
        self.static_fc2 = Linear(cfg.d, cfg.d, rng, dtype=dt)

    def event_rows(self, ids: np.ndarray, pos: np.ndarray, cont: np.ndarray) -> Tensor:
        """Embed tokens that carry an id (events and task tokens)."""
        rows = self.id_table(ids) + Tensor(sinusoidal_table(pos, self.d, self.dtype))
        if not self.discrete_only:
            rows = rows + self.time_value(Tensor(np.asarray(cont, dtype=self.dtype)))
        return rows

    def encode_static(self, static_vec: np.ndarray) -> Tensor:
        """Two affine layers with a nonlinearity between; output width d."""
        s = Tensor(np.asarray(static_vec, dtype=self.dtype).reshape(1, -1))
        return self.static_fc2(self.static_fc1(s).gelu())

    def forward(self, ids: np.ndarray, pos: np.ndarray, cont: np.ndarray,
                static_vec: np.ndarray, static_slot: int) -> Tensor:
        """Embed a full assembled sequence; row ``static_slot`` is replaced
        by the encoded static vector (plus sinusoidal position 0)."""
        static_row = self.encode_static(static_vec) + Tensor(
            sinusoidal_table([0], self.d, self.dtype))
        parts = []
        if static_slot > 0:
            parts.append(self.event_rows(ids[:static_slot], pos[:static_slot],
                                         cont[:static_slot]))
        parts.append(static_row)
        if static_slot + 1 < len(ids):
            parts.append(self.event_rows(ids[static_slot + 1:], pos[static_slot + 1:],
                                         cont[static_slot + 1:]))
        return concat(parts, axis=0)
