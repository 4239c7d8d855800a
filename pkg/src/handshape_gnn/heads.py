"""Classification heads: the raw-landmark MLP baseline, per-stream residual
heads over 32-d embeddings, and the combined triple-stream head.

All heads train with softmax cross-entropy on a single label per sample;
graph models stay frozen (heads consume cached embeddings).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn import AdamW, BatchNorm, Linear, Tensor, TrainingDivergenceError
from .rng import make_rng

RAW_DIM = 63
EMBED_DIM = 32
STREAMS = ("sign", "handshape", "raw")


class _Composite:
    """Parameter/state plumbing shared by the heads, keyed by _modules()."""

    def _modules(self) -> list[tuple[str, object]]:
        raise NotImplementedError

    def parameters(self) -> dict[str, Tensor]:
        return {
            f"{name}.{key}": t
            for name, mod in self._modules()
            for key, t in mod.parameters().items()
        }

    def state(self) -> dict[str, np.ndarray]:
        return {
            f"{name}.{key}": val
            for name, mod in self._modules()
            for key, val in mod.state().items()
        }

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, mod in self._modules():
            prefix = name + "."
            mod.load_state(
                {key[len(prefix) :]: val for key, val in arrays.items() if key.startswith(prefix)}
            )


class BaselineMlp(_Composite):
    """63 -> 256 -> 256 -> K with batch norm and dropout p = 0.3."""

    dropout = 0.3

    def __init__(self, n_classes: int, rng: np.random.Generator):
        self.fc1 = Linear(RAW_DIM, 256, rng)
        self.bn1 = BatchNorm(256)
        self.fc2 = Linear(256, 256, rng)
        self.bn2 = BatchNorm(256)
        self.out = Linear(256, n_classes, rng, bias=True)

    def forward(self, x: Tensor, train: bool, rng: np.random.Generator | None = None) -> Tensor:
        h = nn.dropout(nn.leaky_relu(self.bn1(self.fc1(x), train)), self.dropout, train, rng)
        h = nn.dropout(nn.leaky_relu(self.bn2(self.fc2(h), train)), self.dropout, train, rng)
        return self.out(h)

    def _modules(self):
        return [
            ("fc1", self.fc1),
            ("bn1", self.bn1),
            ("fc2", self.fc2),
            ("bn2", self.bn2),
            ("out", self.out),
        ]


class _ResidualBlock:
    def __init__(self, dim: int, rng: np.random.Generator, dropout: float):
        self.linear = Linear(dim, dim, rng)
        self.bn = BatchNorm(dim)
        self.dropout = dropout

    def __call__(self, x: Tensor, train: bool, rng) -> Tensor:
        h = nn.dropout(nn.leaky_relu(self.bn(self.linear(x), train)), self.dropout, train, rng)
        return x + h


class ResidualHead(_Composite):
    """Embedding classifier: a 32 -> 64 stem, two residual blocks, linear out."""

    dropout = 0.2
    width = 64

    def __init__(self, n_classes: int, rng: np.random.Generator, in_dim: int = EMBED_DIM):
        self.stem = Linear(in_dim, self.width, rng)
        self.stem_bn = BatchNorm(self.width)
        self.blocks = [_ResidualBlock(self.width, rng, self.dropout) for _ in range(2)]
        self.out = Linear(self.width, n_classes, rng, bias=True)

    def forward(self, x: Tensor, train: bool, rng: np.random.Generator | None = None) -> Tensor:
        h = nn.leaky_relu(self.stem_bn(self.stem(x), train))
        for block in self.blocks:
            h = block(h, train, rng)
        return self.out(h)

    def _modules(self):
        mods = [("stem", self.stem), ("stem_bn", self.stem_bn)]
        for i, block in enumerate(self.blocks):
            mods.append((f"blocks.{i}.linear", block.linear))
            mods.append((f"blocks.{i}.bn", block.bn))
        mods.append(("out", self.out))
        return mods


class TripleStreamHead(_Composite):
    """Per-stream 32/32/63 -> 64 projections, concatenation, linear to K logits.

    Stream order is fixed (sign, handshape, raw); `zero_streams` zeroes a
    stream's projection output, which reduces the head to a two-stream
    function for ablations.
    """

    dropout = 0.2
    width = 64

    def __init__(self, n_classes: int, rng: np.random.Generator):
        dims = {"sign": EMBED_DIM, "handshape": EMBED_DIM, "raw": RAW_DIM}
        self.projections = {
            name: (Linear(dims[name], self.width, rng), BatchNorm(self.width))
            for name in STREAMS
        }
        self.out = Linear(self.width * len(STREAMS), n_classes, rng, bias=True)

    def forward(
        self,
        inputs: tuple[Tensor, Tensor, Tensor],
        train: bool,
        rng: np.random.Generator | None = None,
        zero_streams: tuple[str, ...] = (),
    ) -> Tensor:
        parts = []
        for name, x in zip(STREAMS, inputs):
            linear, bn = self.projections[name]
            h = nn.dropout(nn.leaky_relu(bn(linear(x), train)), self.dropout, train, rng)
            if name in zero_streams:
                h = h * Tensor(0.0)
            parts.append(h)
        return self.out(nn.concat_cols(parts))

    def _modules(self):
        mods = []
        for name in STREAMS:
            linear, bn = self.projections[name]
            mods.append((f"{name}.linear", linear))
            mods.append((f"{name}.bn", bn))
        mods.append(("out", self.out))
        return mods


def _as_inputs(head, features: np.ndarray | tuple) -> Tensor | tuple[Tensor, ...]:
    if isinstance(head, TripleStreamHead):
        return tuple(Tensor(part) for part in features)
    return Tensor(features)


def slice_features(features, idx):
    if isinstance(features, tuple):
        return tuple(part[idx] for part in features)
    return features[idx]


def predict(head, features) -> np.ndarray:
    """Class ids from eval-mode logits."""
    logits = head.forward(_as_inputs(head, features), train=False)
    return np.argmax(logits.data, axis=1)


def predict_proba(head, features) -> np.ndarray:
    logits = head.forward(_as_inputs(head, features), train=False)
    return nn.softmax(logits.data)


def accuracy(head, features, labels) -> float:
    return float(np.mean(predict(head, features) == np.asarray(labels)))


@dataclass
class HeadTrainingConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    patience: int = 50
    max_epochs: int = 200
    batch_size: int = 32


@dataclass
class HeadTrainResult:
    head: object
    history: list[dict] = field(repr=False)
    best_epoch: int
    best_val_loss: float


def make_head(kind: str, n_classes: int, rng: np.random.Generator):
    if kind == "baseline":
        return BaselineMlp(n_classes, rng)
    if kind in ("sign", "handshape"):
        return ResidualHead(n_classes, rng)
    if kind == "dual":
        return TripleStreamHead(n_classes, rng)
    raise ValueError(f"unknown head kind '{kind}'")


def train_head(
    head,
    train_features,
    train_labels: np.ndarray,
    val_features,
    val_labels: np.ndarray,
    config: HeadTrainingConfig,
    seed: int,
) -> HeadTrainResult:
    """Cross-entropy training with early stopping; the best-validation-loss
    state is restored before returning."""
    rng = make_rng(seed)
    optimizer = AdamW(head.parameters(), lr=config.learning_rate,
                      weight_decay=config.weight_decay)
    n = len(train_labels)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    val_labels = np.asarray(val_labels, dtype=np.int64)
    best_val = np.inf
    best_state = copy.deepcopy(head.state())
    best_epoch = 0
    stale = 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            if len(idx) < 2:
                continue
            optimizer.zero_grad()
            logits = head.forward(
                _as_inputs(head, slice_features(train_features, idx)), train=True, rng=rng
            )
            loss = nn.softmax_cross_entropy(logits, train_labels[idx])
            if not np.isfinite(loss.data):
                raise TrainingDivergenceError(f"non-finite head loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        val_logits = head.forward(_as_inputs(head, val_features), train=False)
        val_loss = nn.softmax_cross_entropy(val_logits, val_labels).item()
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val_loss}
        )
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(head.state())
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    head.load_state(best_state)
    return HeadTrainResult(head=head, history=history, best_epoch=best_epoch,
                           best_val_loss=best_val)
