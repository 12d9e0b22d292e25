"""Optimizers over autodiff leaf tensors: Adam, SGD, RMSprop.

Fixed learning rates only. ``step`` consumes the gradients accumulated by
``backward`` and clears them; a non-finite gradient aborts with the name of
the offending parameter.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class OptimizerError(RuntimeError):
    pass


class Optimizer:
    def __init__(self, parameters: list[Tensor], lr: float):
        self.parameters = list(parameters)
        self.lr = lr

    def _gradients(self):
        for p in self.parameters:
            g = p.grad
            if g is None:
                g = np.zeros_like(p.values)
            elif not np.all(np.isfinite(g)):
                raise OptimizerError(f"non-finite gradient for parameter {p.name or '<unnamed>'}")
            yield p, g

    def zero_grad(self):
        for p in self.parameters:
            p.grad = None

    def state_dict(self) -> dict:
        return {"lr": self.lr, "buffers": {}}

    def load_state_dict(self, state: dict) -> None:
        self.lr = state["lr"]


class Sgd(Optimizer):
    def step(self):
        for p, g in self._gradients():
            p.values -= self.lr * g
        self.zero_grad()


class Adam(Optimizer):
    def __init__(self, parameters, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        super().__init__(parameters, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.parameters]
        self.v = [np.zeros_like(p.values) for p in self.parameters]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for i, (p, g) in enumerate(self._gradients()):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g**2
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.zero_grad()

    def state_dict(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "t": self.t,
            "m": [a.copy() for a in self.m],
            "v": [a.copy() for a in self.v],
        }

    def load_state_dict(self, state: dict) -> None:
        self.lr = state["lr"]
        self.beta1, self.beta2, self.eps = state["beta1"], state["beta2"], state["eps"]
        self.t = state["t"]
        self.m = [np.array(a, dtype=np.float64) for a in state["m"]]
        self.v = [np.array(a, dtype=np.float64) for a in state["v"]]


class RmsProp(Optimizer):
    def __init__(self, parameters, lr: float, alpha: float = 0.99, eps: float = 1e-8):
        super().__init__(parameters, lr)
        self.alpha, self.eps = alpha, eps
        self.sq = [np.zeros_like(p.values) for p in self.parameters]

    def step(self):
        for i, (p, g) in enumerate(self._gradients()):
            self.sq[i] = self.alpha * self.sq[i] + (1 - self.alpha) * g**2
            p.values -= self.lr * g / (np.sqrt(self.sq[i]) + self.eps)
        self.zero_grad()

    def state_dict(self) -> dict:
        return {"lr": self.lr, "alpha": self.alpha, "eps": self.eps,
                "sq": [a.copy() for a in self.sq]}

    def load_state_dict(self, state: dict) -> None:
        self.lr = state["lr"]
        self.alpha, self.eps = state["alpha"], state["eps"]
        self.sq = [np.array(a, dtype=np.float64) for a in state["sq"]]


def make_optimizer(kind: str, parameters, lr: float) -> Optimizer:
    kinds = {"adam": Adam, "sgd": Sgd, "rmsprop": RmsProp}
    if kind not in kinds:
        raise OptimizerError(f"unknown optimizer {kind!r}")
    return kinds[kind](parameters, lr)
