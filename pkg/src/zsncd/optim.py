"""Adam with bias correction and post-step bound reprojection."""

from __future__ import annotations

import numpy as np

from .nn import Parameter


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8).

    After every update, parameters carrying a lower bound are clamped back
    onto it, which keeps the GDN constraints feasible throughout training.
    """

    def __init__(self, params: list[Parameter], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def zero_grads(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if p.lower is not None:
                np.maximum(p.value, p.lower, out=p.value)


def lr_schedule(step: int, cfg) -> float:
    """Learning rate at a global step for the given training config.

    Conv models: 5e-3, dropping to 5e-4 from step 16000 on.
    MLP models: constant 1e-3.
    """
    if cfg.variant == "mlp":
        return 1e-3
    return 5e-3 if step < 16000 else 5e-4
