"""Adam with global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParameterSet


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.name = name


@dataclass
class AdamConfig:
    lr: float = 0.003
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip: float = 5.0

    def __post_init__(self):
        if self.lr <= 0 or self.clip <= 0:
            raise ValueError("lr and clip must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def clip_gradients(params: ParameterSet, clip: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most ``clip``; returns the norm before."""
    sq = 0.0
    for p in params:
        if not p.trainable:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient(p.name)
        sq += float(np.vdot(p.grad, p.grad))
    norm = float(np.sqrt(sq))
    if norm > clip:
        factor = clip / norm
        for p in params:
            if p.trainable:
                p.grad *= factor
    return norm


def adam_step(params: ParameterSet, state: AdamState, config: AdamConfig) -> float:
    """Clip, then apply one bias-corrected Adam update from the stored gradients."""
    norm = clip_gradients(params, config.clip)
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    lr_t = config.lr * np.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
    for p in params:
        if not p.trainable:
            continue
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * p.grad * p.grad
        p.data -= lr_t * m / (np.sqrt(v) + config.eps)
    return norm
