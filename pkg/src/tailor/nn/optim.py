"""AdamW with decoupled weight decay, gradient value clipping, LR schedules."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .tensor import Tensor


class NonFiniteGradient(RuntimeError):
    """A gradient contained NaN/Inf; the optimizer step was rejected."""


class AdamW:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.betas = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float | None = None) -> None:
        """Apply one update from the gradients stored on the parameters."""
        grads = []
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient in parameter {i}")
            grads.append(g)
        lr = self.lr if lr is None else float(lr)
        b1, b2 = self.betas
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - b1 ** t
        bc2 = 1.0 - b2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay:
                p.data *= (1.0 - lr * self.weight_decay)  # decoupled decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def clip_gradients(params: Sequence[Tensor], max_value: float) -> None:
    """Clamp every gradient component to [-max_value, +max_value] in place."""
    if max_value <= 0:
        raise ValueError(f"max_value must be positive, got {max_value}")
    for p in params:
        if p.grad is not None:
            np.clip(p.grad, -max_value, max_value, out=p.grad)


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def multistep_lr(step: int, base_lr: float, milestones: Sequence[int], factor: float = 0.1) -> float:
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    passed = sum(1 for m in milestones if step >= m)
    return base_lr * factor ** passed


def lr_schedule(step: int, total_steps: int, base_lr: float, kind: str = "cosine",
                milestones: Sequence[int] = (), factor: float = 0.1) -> float:
    if kind == "cosine":
        return cosine_lr(step, total_steps, base_lr)
    if kind == "multistep":
        return multistep_lr(step, base_lr, milestones, factor)
    raise ValueError(f"unknown schedule kind {kind!r}")
