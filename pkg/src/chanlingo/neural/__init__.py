"""Minimal numpy neural-network core: layers with explicit backward passes, Adam, checkpoints."""

from .checkpoint import FORMAT_VERSION, read_checkpoint, write_checkpoint
from .gradcheck import max_relative_error, numerical_gradients
from .layers import (
    CELL_KINDS,
    RecurrentStack,
    attention_backward,
    attention_forward,
    cell_forward,
    embed,
    embed_backward,
    linear,
    linear_backward,
    project_logits,
    sigmoid,
    softmax,
    softmax_xent,
)
from .optim import Adam, OptimizerState, annealed_lr, clip_gradients, global_norm

__all__ = [
    "CELL_KINDS",
    "FORMAT_VERSION",
    "Adam",
    "OptimizerState",
    "RecurrentStack",
    "annealed_lr",
    "attention_backward",
    "attention_forward",
    "cell_forward",
    "clip_gradients",
    "embed",
    "embed_backward",
    "global_norm",
    "linear",
    "linear_backward",
    "max_relative_error",
    "numerical_gradients",
    "project_logits",
    "read_checkpoint",
    "sigmoid",
    "softmax",
    "softmax_xent",
    "write_checkpoint",
]
