from .layers import (
    ChannelAttention,
    Conv2d,
    Dense,
    Flatten,
    Fusion,
    Module,
    ReLU,
    RNNCell,
    Sequential,
    Sigmoid,
    SpatialAttention,
    Tanh,
    Tensor,
    mlp,
    rnn_step,
    sigmoid,
)
from .optim import Adam, AdamState, adam_update, soft_update

__all__ = [
    "Adam",
    "AdamState",
    "ChannelAttention",
    "Conv2d",
    "Dense",
    "Flatten",
    "Fusion",
    "Module",
    "ReLU",
    "RNNCell",
    "Sequential",
    "Sigmoid",
    "SpatialAttention",
    "Tanh",
    "Tensor",
    "adam_update",
    "mlp",
    "rnn_step",
    "sigmoid",
    "soft_update",
]
