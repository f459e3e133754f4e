"""Minimal differentiable compute: numpy layers with manual reverse-mode
gradients, an Adam optimizer, and a deterministic checkpoint format.

Everything runs in float64. A layer caches whatever its backward pass needs
during forward(train=True); backward() must follow the forward it pairs with.
"""

from .layers import (
    BatchNorm1d,
    Conv1d,
    ConvBlock,
    Dense,
    Dropout,
    EncoderBlock,
    GlobalAvgPool,
    LayerNorm,
    MaxPool1d,
    MultiHeadSelfAttention,
    PositionalEncodingAdd,
    ReLU,
    Sequential,
    positional_encoding,
)
from .optim import Adam
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import central_difference_grad, relative_error

__all__ = [
    "Adam",
    "BatchNorm1d",
    "Conv1d",
    "ConvBlock",
    "Dense",
    "Dropout",
    "EncoderBlock",
    "GlobalAvgPool",
    "LayerNorm",
    "MaxPool1d",
    "MultiHeadSelfAttention",
    "PositionalEncodingAdd",
    "ReLU",
    "Sequential",
    "central_difference_grad",
    "load_checkpoint",
    "positional_encoding",
    "relative_error",
    "save_checkpoint",
]
