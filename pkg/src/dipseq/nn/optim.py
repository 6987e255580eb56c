from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TrainSchedule


class OptimizerError(FloatingPointError):
    pass


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def for_params(cls, tensors: dict[str, np.ndarray], **hparams) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(t) for k, t in tensors.items()},
            v={k: np.zeros_like(t) for k, t in tensors.items()},
            **hparams,
        )


def adamw_step(tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState, lr: float):
    """One AdamW update, in place. Weight decay is decoupled from the gradient.

    A non-finite gradient rejects the whole step before anything is modified.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient in {name!r}; step {state.step + 1} rejected")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in tensors.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if state.weight_decay:
            p *= p.dtype.type(1.0 - lr * state.weight_decay)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return tensors, state


def lr_at_step(schedule: TrainSchedule, step: int) -> float:
    if step < 0:
        raise ValueError("step must be non-negative")
    if schedule.warmup_steps and step <= schedule.warmup_steps:
        return schedule.base_lr * step / schedule.warmup_steps
    return schedule.base_lr * schedule.decay ** (step - schedule.warmup_steps)
