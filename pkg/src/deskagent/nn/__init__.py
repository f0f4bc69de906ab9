from .autodiff import (
    ShapeError,
    Tensor,
    concat,
    gather_rows,
    mse,
    softmax,
    softmax_cross_entropy,
    stack,
    where_mask,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import (
    CausalSelfAttention,
    Embedding,
    GRUCell,
    LayerNorm,
    Linear,
    TransformerBlock,
)
from .optim import AdamW, OptimConfig
from .params import ParamStore

__all__ = [
    "AdamW", "CausalSelfAttention", "CheckpointError", "Embedding", "GRUCell",
    "LayerNorm", "Linear", "OptimConfig", "ParamStore", "ShapeError", "Tensor",
    "TransformerBlock", "concat", "gather_rows", "grad_check",
    "load_checkpoint", "mse", "save_checkpoint", "softmax",
    "softmax_cross_entropy", "stack", "where_mask",
]
