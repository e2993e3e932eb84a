"""Adam and target-network tracking rules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Tensor


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Tensor], **kw) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.value) for p in params],
            v=[np.zeros_like(p.value) for p in params],
            **kw,
        )


def adam_update(params: list[Tensor], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam step, in place on ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_update: params, grads and state disagree in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.value.shape:
            raise ValueError(f"adam_update: grad shape {g.shape} != param shape {p.value.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class Adam:
    """Thin stateful wrapper: reads ``.grad`` off each parameter."""

    params: list[Tensor]
    lr: float
    state: AdamState = field(init=False)

    def __post_init__(self):
        self.state = AdamState.for_params(self.params)

    def step(self) -> None:
        adam_update(self.params, [p.grad for p in self.params], self.state, self.lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def soft_update(target: list[Tensor], online: list[Tensor], tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target`` elementwise."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if len(target) != len(online):
        raise ValueError("soft_update: parameter lists differ in length")
    for t, o in zip(target, online):
        if tau == 1.0:
            t.value[...] = o.value
        else:
            t.value[...] = tau * o.value + (1.0 - tau) * t.value
