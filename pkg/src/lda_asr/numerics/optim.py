"""Adam with a warmup / inverse-square-root schedule and weight averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DimensionError, TrainingError


def lr_at_step(step, peak_lr, warmup):
    """Linear ramp to ``peak_lr`` over ``warmup`` steps, then ``1/sqrt(step)`` decay."""
    if step < 1:
        raise ContractError(f"learning-rate step must be >= 1, got {step}")
    if warmup < 1:
        raise ContractError(f"warmup must be >= 1, got {warmup}")
    return peak_lr * min(step / warmup, math.sqrt(warmup / step))


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    peak_lr: float = 1.8e-3
    warmup_steps: int = 1000
    ema_decay: float | None = 0.999
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    ema_shadow: dict | None = None

    def __post_init__(self):
        if self.warmup_steps < 1:
            raise ContractError("warmup_steps must be positive")
        if self.ema_decay is not None and self.ema_shadow is None:
            self.ema_shadow = {}


def ema_decay_at(decay, num_updates):
    """Averaging constant that starts small so early averages are not stuck at init."""
    return min(decay, (1.0 + num_updates) / (10.0 + num_updates))


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update in place.

    ``params`` maps names to float arrays (updated in place), ``grads`` maps
    the same names to gradients. Returns the learning rate used.
    """
    for name, g in grads.items():
        if name not in params:
            raise ContractError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise DimensionError(
                f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name!r}"
            )
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}", parameter=name)

    step = state.step + 1
    lr = lr_at_step(step, state.peak_lr, state.warmup_steps)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    for name, g in grads.items():
        p = params[name]
        g = g.astype(np.float64)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros(p.shape, dtype=np.float64)
            v = np.zeros(p.shape, dtype=np.float64)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        p -= update.astype(p.dtype)
    state.step = step

    if state.ema_shadow is not None:
        decay = ema_decay_at(state.ema_decay, step)
        for name in grads:
            p = params[name]
            shadow = state.ema_shadow.get(name)
            if shadow is None:
                state.ema_shadow[name] = p.copy()
            else:
                # incremental form keeps the shadow bit-exact where p is unchanged
                shadow += ((1.0 - decay) * (p - shadow)).astype(shadow.dtype)
    return lr


class Adam:
    """Stateful wrapper around :func:`adam_step` for a dict of Tensors."""

    def __init__(self, tensors, peak_lr=1.8e-3, warmup_steps=1000, beta1=0.9,
                 beta2=0.999, epsilon=1e-8, ema_decay=0.999):
        self.tensors = dict(tensors)
        self.state = OptimizerState(
            beta1=beta1, beta2=beta2, epsilon=epsilon, peak_lr=peak_lr,
            warmup_steps=warmup_steps, ema_decay=ema_decay,
        )

    def step(self):
        grads = {}
        for name, t in self.tensors.items():
            grads[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        return adam_step({n: t.data for n, t in self.tensors.items()}, grads, self.state)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def averaged(self):
        """Evaluation weights: the EMA shadow when enabled, else the raw parameters."""
        if self.state.ema_shadow is None or not self.state.ema_shadow:
            return {n: t.data.copy() for n, t in self.tensors.items()}
        return {n: self.state.ema_shadow[n].copy() for n in self.tensors}
