"""Adam with decoupled weight decay over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class TrainingDivergenceError(RuntimeError):
    """A gradient or loss became non-finite during training."""


class AdamW:
    """Bias-corrected Adam moments plus weight decay applied directly to
    parameters (not folded into the gradient)."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        weight_decay: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        max_steps: int = 10**12,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if weight_decay < 0:
            raise ValueError(f"weight decay must be non-negative, got {weight_decay}")
        self.params = dict(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_steps = max_steps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in self.params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in self.params.items()}

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def step(self) -> None:
        if self.step_count >= self.max_steps:
            raise RuntimeError(f"optimizer exceeded max_steps={self.max_steps}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, param in self.params.items():
            grad = param.grad
            if grad is None:
                grad = np.zeros_like(param.data)
            if not np.all(np.isfinite(grad)):
                raise TrainingDivergenceError(
                    f"non-finite gradient for parameter '{name}' at step {t}"
                )
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            param.data = param.data - self.lr * update
            if self.weight_decay:
                param.data = param.data - self.lr * self.weight_decay * param.data

    def state(self) -> dict:
        return {
            "step": self.step_count,
            "m": {name: arr.tolist() for name, arr in self.m.items()},
            "v": {name: arr.tolist() for name, arr in self.v.items()},
        }

    def load_state(self, state: dict) -> None:
        self.step_count = int(state["step"])
        for name in self.params:
            self.m[name] = np.array(state["m"][name], dtype=np.float64)
            self.v[name] = np.array(state["v"][name], dtype=np.float64)
