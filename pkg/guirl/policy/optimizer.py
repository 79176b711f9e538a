from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from guirl.policy.network import PolicyParams


@dataclass
class OptimizerState:
    """AdamW moments plus a linearly decaying learning rate."""

    base_lr: float
    total_steps: int
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    exp_avg: Optional[PolicyParams] = field(default=None, repr=False)
    exp_avg_sq: Optional[PolicyParams] = field(default=None, repr=False)

    def __post_init__(self):
        if self.base_lr < 0:
            raise ValueError(f"base_lr must be non-negative, got {self.base_lr}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")

    @property
    def effective_lr(self) -> float:
        return self.base_lr * max(0.0, 1.0 - self.step / self.total_steps)


def optimizer_step(
    params: PolicyParams, grads: PolicyParams, state: OptimizerState
) -> PolicyParams:
    """
    One AdamW update; returns new params and advances `state` in place.

    Decay is applied to the weights before the moment update, as in torch.optim.AdamW.
    """
    for p, g in zip(params.arrays(), grads.arrays()):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    if state.exp_avg is None or state.exp_avg_sq is None:
        state.exp_avg = params.map(np.zeros_like)
        state.exp_avg_sq = params.map(np.zeros_like)
    for p, m in zip(params.arrays(), state.exp_avg.arrays()):
        if p.shape != m.shape:
            raise ValueError(f"moment shape {m.shape} does not match parameter {p.shape}")

    lr = state.effective_lr
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    state.exp_avg = state.exp_avg.zip_map(grads, lambda m, g: b1 * m + (1 - b1) * g)
    state.exp_avg_sq = state.exp_avg_sq.zip_map(grads, lambda v, g: b2 * v + (1 - b2) * g * g)
    bias1 = 1 - b1**t
    bias2 = 1 - b2**t

    updated = []
    for p, m, v in zip(params.arrays(), state.exp_avg.arrays(), state.exp_avg_sq.arrays()):
        p = p * (1 - lr * state.weight_decay)
        p = p - lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        updated.append(p)
    state.step = t
    return PolicyParams(*updated)
