from . import ops
from .optim import Adam, OptimizerState, adam_step, ema_decay_at, lr_at_step
from .tensor import Tensor, as_tensor, backward, is_grad_enabled, no_grad

layer_norm = ops.layer_norm

__all__ = [
    "Adam",
    "OptimizerState",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "ema_decay_at",
    "is_grad_enabled",
    "layer_norm",
    "lr_at_step",
    "no_grad",
    "ops",
]
