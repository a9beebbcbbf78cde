"""Full-batch Adam with continuous exponential learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LrSchedule:
    initial_lr: float = 0.01
    decay_rate: float = 0.9
    decay_steps: int = 1000

    def __post_init__(self):
        if self.initial_lr <= 0 or not 0 < self.decay_rate <= 1 or self.decay_steps < 1:
            raise ValueError(f"invalid schedule {self}")

    def __call__(self, epoch: int) -> float:
        return lr_at(self, epoch)


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return schedule.initial_lr * schedule.decay_rate ** (epoch / schedule.decay_steps)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update.  Inputs are left untouched."""
    if set(grads) != set(params):
        raise ValueError(f"gradient keys {sorted(grads)} do not match parameters {sorted(params)}")
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient for {name!r}")

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - b1) * grad if m is None else b1 * m + (1.0 - b1) * grad
        v = (1.0 - b2) * grad * grad if v is None else b2 * v + (1.0 - b2) * grad * grad
        step = lr * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
        new_params[name] = theta - step
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(new_m, new_v, t, b1, b2, state.epsilon)
