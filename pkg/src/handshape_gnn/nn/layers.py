"""Trainable layers built on the autodiff tensor: linear maps, batch
normalization, and inverted dropout."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, batch_norm_train


class DegenerateBatchError(ValueError):
    """Batch normalization was asked to normalize a batch of fewer than 2 rows."""


class Linear:
    """Dense map y = x @ W (+ b). Glorot-uniform init from the caller's rng."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = False):
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        self.weight = Tensor(rng.uniform(-limit, limit, (in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros((1, out_dim)), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out

    def parameters(self) -> dict[str, Tensor]:
        params = {"weight": self.weight}
        if self.bias is not None:
            params["bias"] = self.bias
        return params

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.parameters().items():
            t.data = np.array(state[name], dtype=np.float64)


class BatchNorm:
    """Per-feature batch normalization with learnable scale/shift.

    Train mode normalizes with the batch statistics (biased variance) and
    updates running statistics with momentum; eval mode normalizes with the
    running statistics. Gradients flow through the batch statistics.
    """

    def __init__(self, dim: int, eps: float = 1e-5, momentum: float = 0.1):
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones((1, dim)), requires_grad=True)
        self.beta = Tensor(np.zeros((1, dim)), requires_grad=True)
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        if train:
            n = x.data.shape[0]
            if n < 2:
                raise DegenerateBatchError(
                    f"batch norm needs at least 2 rows in train mode, got {n}"
                )
            out, mu, var = batch_norm_train(x, self.gamma, self.beta, self.eps)
            m = self.momentum
            self.running_mean = (1.0 - m) * self.running_mean + m * mu
            self.running_var = (1.0 - m) * self.running_var + m * var * n / (n - 1)
            return out
        xhat = (x - Tensor(self.running_mean)) / Tensor(np.sqrt(self.running_var + self.eps))
        return self.gamma * xhat + self.beta

    def parameters(self) -> dict[str, Tensor]:
        return {"gamma": self.gamma, "beta": self.beta}

    def state(self) -> dict[str, np.ndarray]:
        return {
            "gamma": self.gamma.data,
            "beta": self.beta.data,
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.gamma.data = np.array(state["gamma"], dtype=np.float64)
        self.beta.data = np.array(state["beta"], dtype=np.float64)
        self.running_mean = np.array(state["running_mean"], dtype=np.float64)
        self.running_var = np.array(state["running_var"], dtype=np.float64)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero entries with probability p and rescale survivors.

    Identity in eval mode or at p = 0; the caller owns the rng in train mode.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode requires an rng")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    return x * Tensor(mask)
