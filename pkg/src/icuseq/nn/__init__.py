from .tensor import (
    Parameter,
    Tensor,
    bce_with_logits,
    concat,
    layer_norm,
    masked_softmax,
    no_grad,
    softmax,
)
from .layers import Dropout, EmbeddingTable, LayerNorm, Linear, Module
from .optim import Adam
from .gradcheck import grad_check
from .checkpoint import CheckpointError, load_params, save_params

__all__ = [
    "Adam",
    "CheckpointError",
    "Dropout",
    "EmbeddingTable",
    "LayerNorm",
    "Linear",
    "Module",
    "Parameter",
    "Tensor",
    "bce_with_logits",
    "concat",
    "grad_check",
    "layer_norm",
    "load_params",
    "masked_softmax",
    "no_grad",
    "save_params",
    "softmax",
]
