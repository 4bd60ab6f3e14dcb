"""Adam with bias correction, plus the piecewise learning-rate schedules used in training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place.

    Moments are created lazily (zeros) for names seen for the first time. A
    parameter whose shape differs from its stored moments raises ``ValueError``.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise ValueError(f"parameter {name!r} changed shape from {m.shape} to {p.shape}")
        dt = p.dtype.type
        m = dt(beta1) * m + dt(1 - beta1) * g
        v = dt(beta2) * v + dt(1 - beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / dt(c1)
        v_hat = v / dt(c2)
        p.data -= dt(lr) * m_hat / (np.sqrt(v_hat) + dt(eps))
    return state


class Adam:
    """Optimizer over the trainable tensors of a named weight table."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = {k: p for k, p in params.items() if p.requires_grad}
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state, self.lr if lr is None else lr,
                  self.beta1, self.beta2, self.eps)


@dataclass(frozen=True)
class LRSchedule:
    """Piecewise-constant learning rate.

    ``drop_at`` > 0: ``base`` until that update, then ``base * drop_factor``.
    ``decay_every`` > 0: multiply by ``decay_factor`` every ``decay_every`` updates.
    """

    base: float = 1e-4
    drop_at: int = 0
    drop_factor: float = 0.1
    decay_every: int = 0
    decay_factor: float = 0.5

    def __call__(self, step: int) -> float:
        lr = self.base
        if self.drop_at > 0 and step >= self.drop_at:
            lr *= self.drop_factor
        if self.decay_every > 0:
            lr *= self.decay_factor ** (step // self.decay_every)
        return lr
