from .config import ModelConfig, discrete_only_switch
from .embedding import SequenceEmbedder, sinusoidal_encoding, sinusoidal_table
from .attention import (
    AttentionLayout,
    SlidingGlobalAttention,
    build_layout,
    dense_attention_reference,
    reset_score_counters,
    scatter_weights,
    score_counters,
)
from .encoder import EncoderLayer, TransformerClassifier, multi_task_loss
from .baselines import (
    AdditiveAttention,
    GruAttentionClassifier,
    GruCell,
    GruClassifier,
    TabularSeries,
    TokenizedGruClassifier,
    tabularize,
)

__all__ = [
    "AdditiveAttention",
    "AttentionLayout",
    "EncoderLayer",
    "GruAttentionClassifier",
    "GruCell",
    "GruClassifier",
    "ModelConfig",
    "SequenceEmbedder",
    "SlidingGlobalAttention",
    "TabularSeries",
    "TokenizedGruClassifier",
    "TransformerClassifier",
    "build_layout",
    "dense_attention_reference",
    "discrete_only_switch",
    "multi_task_loss",
    "reset_score_counters",
    "scatter_weights",
    "score_counters",
    "sinusoidal_encoding",
    "sinusoidal_table",
    "tabularize",
]
