from .tensor import (
    Graph,
    NonScalarLoss,
    ShapeError,
    Tensor,
    add,
    backprop,
    bce_with_logits,
    concat,
    conv2d,
    conv_transpose2d,
    embedding,
    group_norm,
    matmul,
    mse,
    mul,
    no_grad,
    parameter,
    relu,
    reshape,
    scale,
    sigmoid,
    silu,
    tmean,
    tsum,
)
from .layers import Conv2d, ConvTranspose2d, Dense, Embedding, GroupNorm, Module, sinusoidal_embedding
from .optim import AdamW, NonFiniteGradient, clip_gradients, cosine_lr, lr_schedule, multistep_lr
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "AdamW", "CheckpointError", "Conv2d", "ConvTranspose2d", "Dense", "Embedding",
    "Graph", "GroupNorm", "Module", "NonFiniteGradient", "NonScalarLoss", "ShapeError",
    "Tensor", "add", "backprop", "bce_with_logits", "clip_gradients", "concat", "conv2d",
    "conv_transpose2d", "cosine_lr", "embedding", "group_norm", "load_checkpoint",
    "lr_schedule", "matmul", "mse", "mul", "multistep_lr", "no_grad", "parameter", "relu", "reshape",
    "save_checkpoint", "scale", "sigmoid", "silu", "sinusoidal_embedding", "tmean", "tsum",
]
