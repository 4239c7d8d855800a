"""The two graph sub-models and their contrastive training.

Both share a three-layer graph-convolution stack (3 -> 64 -> 64 -> 32): each
layer aggregates node features through the normalized adjacency, applies a
bias-free linear map and LeakyReLU, with batch normalization and dropout
between layers. Graph embeddings are the mean over node features of the last
layer.

The temporal model runs on the spatio-temporal sequence graph with sign
labels; the static model runs on the enriched single-frame graph with
handshape labels. Training pulls same-label embeddings together and pushes
different-label embeddings apart through a sigmoid binary cross-entropy on
temperature-scaled cosine similarity.

Node features are the 3-D keypoint coordinates, wrist-centered per frame.
Batch statistics are computed over all nodes of all graphs in a batch;
ragged batches are handled without padding via segment ops.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import SignSequence
from .frames import select_frame
from .graphs import (
    MEDIAPIPE,
    NormalizedAdjacency,
    build_handshape_edges,
    build_sequence_graph,
    normalize,
)
from .nn import AdamW, Tensor, TrainingDivergenceError
from .rng import make_rng

log = logging.getLogger(__name__)

GCN_DIMS = (3, 64, 64, 32)
EMBED_DIM = GCN_DIMS[-1]


class _GcnLayer:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, with_bn: bool):
        self.linear = nn.Linear(in_dim, out_dim, rng, bias=False)
        self.bn = nn.BatchNorm(out_dim) if with_bn else None


class GcnModel:
    """Stacked graph-convolution layers with fixed 3->64->64->32 dimensions."""

    def __init__(
        self,
        rng: np.random.Generator,
        dropout: float = 0.2,
        negative_slope: float = 0.01,
    ):
        self.dropout = dropout
        self.negative_slope = negative_slope
        dims = GCN_DIMS
        self.layers = [
            _GcnLayer(dims[i], dims[i + 1], rng, with_bn=i < len(dims) - 2)
            for i in range(len(dims) - 1)
        ]

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"layers.{i}.weight"] = layer.linear.weight
            if layer.bn is not None:
                params[f"layers.{i}.bn.gamma"] = layer.bn.gamma
                params[f"layers.{i}.bn.beta"] = layer.bn.beta
        return params

    def state(self) -> dict[str, np.ndarray]:
        arrays = {}
        for i, layer in enumerate(self.layers):
            arrays[f"layers.{i}.weight"] = layer.linear.weight.data
            if layer.bn is not None:
                for key, val in layer.bn.state().items():
                    arrays[f"layers.{i}.bn.{key}"] = val
        return arrays

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for i, layer in enumerate(self.layers):
            layer.linear.weight.data = np.array(arrays[f"layers.{i}.weight"], dtype=np.float64)
            if layer.bn is not None:
                layer.bn.load_state(
                    {
                        key: arrays[f"layers.{i}.bn.{key}"]
                        for key in ("gamma", "beta", "running_mean", "running_var")
                    }
                )


def gcn_forward_batch(
    model: GcnModel,
    adjacencies: list[np.ndarray],
    features: list[np.ndarray],
    train: bool,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, list[int]]:
    """Forward a batch of graphs; returns concatenated node features and sizes."""
    sizes = []
    for adj, feat in zip(adjacencies, features):
        if feat.shape[0] != adj.shape[0] or feat.shape[1] != GCN_DIMS[0]:
            raise nn.ShapeError(
                f"features {feat.shape} incompatible with adjacency {adj.shape}"
            )
        sizes.append(feat.shape[0])
    h = Tensor(np.concatenate(features, axis=0))
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        h = nn.segment_matmul(adjacencies, h, sizes)
        h = layer.linear(h)
        if layer.bn is not None:
            h = layer.bn(h, train)
        h = nn.leaky_relu(h, model.negative_slope)
        if i < last:
            h = nn.dropout(h, model.dropout, train, rng)
    return h, sizes


def gcn_forward(
    model: GcnModel,
    adjacency: NormalizedAdjacency | np.ndarray,
    features: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Node features after the full stack for a single graph."""
    adj = adjacency.matrix if isinstance(adjacency, NormalizedAdjacency) else adjacency
    out, _ = gcn_forward_batch(model, [adj], [np.asarray(features, dtype=np.float64)], train, rng)
    return out


def pool(node_features: Tensor | np.ndarray) -> np.ndarray:
    """Mean over nodes: the graph-level embedding."""
    data = node_features.data if isinstance(node_features, Tensor) else np.asarray(node_features)
    if data.shape[0] < 1:
        raise ValueError("cannot pool an empty graph")
    return data.mean(axis=0)


def embed(
    model: GcnModel, adjacency: NormalizedAdjacency | np.ndarray, features: np.ndarray
) -> np.ndarray:
    """Deterministic 32-d embedding of one graph (eval mode)."""
    return pool(gcn_forward(model, adjacency, features, train=False))


def pair_sets(labels) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Unordered index pairs split into same-label and different-label sets."""
    labels = list(labels)
    if len(labels) < 2:
        raise ValueError(f"need at least 2 labels, got {len(labels)}")
    positives, negatives = [], []
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            (positives if labels[i] == labels[j] else negatives).append((i, j))
    if not negatives:
        log.debug("batch has a single label; negative term will be skipped")
    return positives, negatives


@dataclass
class ContrastiveConfig:
    temperature: float = 10.0
    batch_size: int = 32
    max_pairs: int | None = None  # per-side cap; None = use every pair

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


def contrastive_loss(
    embeddings: Tensor,
    labels,
    cfg: ContrastiveConfig,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Sigmoid BCE over temperature-scaled pairwise cosine similarities.

    Same-label pairs are scored with -log(sigmoid(s)), different-label pairs
    with -log(1 - sigmoid(s)); each side is averaged and an empty side drops
    out. Gradients flow through the cosine normalization.
    """
    b = embeddings.data.shape[0]
    norms_sq = (embeddings * embeddings).sum(axis=1, keepdims=True)
    if np.any(norms_sq.data <= 0):
        raise ValueError("contrastive loss requires non-zero embeddings")
    unit = embeddings / nn.sqrt(norms_sq)
    scores = cfg.temperature * (unit @ unit.T)
    positives, negatives = pair_sets(labels)
    if cfg.max_pairs is not None:
        if rng is None:
            raise ValueError("pair capping requires an rng")
        if len(positives) > cfg.max_pairs:
            keep = rng.choice(len(positives), size=cfg.max_pairs, replace=False)
            positives = [positives[i] for i in sorted(keep)]
        if len(negatives) > cfg.max_pairs:
            keep = rng.choice(len(negatives), size=cfg.max_pairs, replace=False)
            negatives = [negatives[i] for i in sorted(keep)]
    total = None
    for pairs, sign in ((positives, 1.0), (negatives, -1.0)):
        if not pairs:
            continue
        mask = np.zeros((b, b))
        for i, j in pairs:
            mask[i, j] = 1.0
        term = -(Tensor(mask) * nn.log_sigmoid(sign * scores)).sum() / len(pairs)
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no pairs to score")
    return total


def sequence_node_features(seq: SignSequence) -> np.ndarray:
    """(21*T, 3) node features for the sequence graph, wrist-centered per frame."""
    centered = seq.frames - seq.frames[:, :1, :]
    return centered.reshape(-1, 3)


def frame_node_features(frame: np.ndarray) -> np.ndarray:
    """(21, 3) node features for a single-frame graph, wrist-centered."""
    frame = np.asarray(frame, dtype=np.float64)
    return frame - frame[:1, :]


@dataclass
class GnnTrainingConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    patience: int = 50
    max_epochs: int = 200
    batch_size: int = 32
    temperature: float = 10.0
    dropout: float = 0.2
    negative_slope: float = 0.01
    val_fraction: float = 0.2
    max_pairs: int | None = None

    def contrastive(self) -> ContrastiveConfig:
        return ContrastiveConfig(
            temperature=self.temperature,
            batch_size=self.batch_size,
            max_pairs=self.max_pairs,
        )


@dataclass
class TrainResult:
    model: GcnModel
    history: list[dict] = field(repr=False)
    best_epoch: int
    best_val_loss: float


def _epoch_loss(
    model: GcnModel,
    adjacencies: list[np.ndarray],
    features: list[np.ndarray],
    labels: np.ndarray,
    idx: np.ndarray,
    cfg: GnnTrainingConfig,
) -> float:
    """Mean eval-mode contrastive loss over fixed consecutive batches."""
    losses = []
    for start in range(0, len(idx), cfg.batch_size):
        batch = idx[start : start + cfg.batch_size]
        if len(batch) < 2:
            continue
        out, sizes = gcn_forward_batch(
            model, [adjacencies[i] for i in batch], [features[i] for i in batch], train=False
        )
        z = nn.segment_mean(out, sizes)
        losses.append(contrastive_loss(z, labels[batch], cfg.contrastive()).item())
    return float(np.mean(losses))


def train_contrastive(
    adjacencies: list[np.ndarray],
    features: list[np.ndarray],
    labels: np.ndarray,
    config: GnnTrainingConfig,
    seed: int,
) -> TrainResult:
    """Mini-batch contrastive training with early stopping on validation loss.

    Deterministic given the seed: initialization, the train/val partition,
    batch order, dropout masks and pair capping all come from one stream.
    """
    n = len(features)
    if n < 4:
        raise ValueError(f"need at least 4 items to train, got {n}")
    if len(set(labels.tolist())) < 2:
        raise ValueError("training requires at least 2 distinct labels")
    rng = make_rng(seed)
    model = GcnModel(rng, dropout=config.dropout, negative_slope=config.negative_slope)
    optimizer = AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    order = rng.permutation(n)
    n_val = int(round(n * config.val_fraction))
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    if len(train_idx) < 2:
        raise ValueError("training split has fewer than 2 items")

    best_val = np.inf
    best_state = copy.deepcopy(model.state())
    best_epoch = 0
    stale = 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(train_idx))
        epoch_losses = []
        for start in range(0, len(perm), config.batch_size):
            batch = train_idx[perm[start : start + config.batch_size]]
            if len(batch) < 2:
                continue
            optimizer.zero_grad()
            out, sizes = gcn_forward_batch(
                model,
                [adjacencies[i] for i in batch],
                [features[i] for i in batch],
                train=True,
                rng=rng,
            )
            z = nn.segment_mean(out, sizes)
            loss = contrastive_loss(z, labels[batch], config.contrastive(), rng=rng)
            if not np.isfinite(loss.data):
                raise TrainingDivergenceError(
                    f"non-finite training loss at epoch {epoch} "
                    f"(lr={config.learning_rate}, wd={config.weight_decay})"
                )
            loss.backward()
            optimizer.step()
            epoch_losses.append(loss.item())
        train_loss = float(np.mean(epoch_losses))
        if len(val_idx) >= 2:
            val_loss = _epoch_loss(model, adjacencies, features, labels, val_idx, config)
        else:
            val_loss = train_loss
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(model.state())
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state(best_state)
    return TrainResult(model=model, history=history, best_epoch=best_epoch, best_val_loss=best_val)


_SEQUENCE_ADJ_CACHE: dict[int, object] = {}


def sequence_adjacency(n_frames: int):
    """Normalized adjacency of the T-frame sequence graph (cached per T).

    Returned as scipy CSR: sequence graphs are ~2% dense and the aggregation
    dominates training time.
    """
    if n_frames not in _SEQUENCE_ADJ_CACHE:
        from scipy import sparse

        edges = build_sequence_graph(MEDIAPIPE, n_frames)
        dense = normalize(edges, 21 * n_frames).matrix
        _SEQUENCE_ADJ_CACHE[n_frames] = sparse.csr_matrix(dense)
    return _SEQUENCE_ADJ_CACHE[n_frames]


def handshape_adjacency() -> np.ndarray:
    """Normalized adjacency of the enriched single-frame graph."""
    return normalize(build_handshape_edges(MEDIAPIPE), 21).matrix


def train_sign_gnn(
    sequences: list[SignSequence], config: GnnTrainingConfig, seed: int
) -> TrainResult:
    """Train the temporal model: full sequence graphs, sign-label pairs."""
    signs = sorted({seq.sign for seq in sequences})
    sign_ids = {name: i for i, name in enumerate(signs)}
    adjacencies = [sequence_adjacency(seq.n_frames) for seq in sequences]
    features = [sequence_node_features(seq) for seq in sequences]
    labels = np.array([sign_ids[seq.sign] for seq in sequences])
    return train_contrastive(adjacencies, features, labels, config, seed)


def train_handshape_gnn(
    frames_with_labels: list[tuple[np.ndarray, int]],
    config: GnnTrainingConfig,
    seed: int,
) -> TrainResult:
    """Train the static model: enriched single-frame graphs, handshape labels."""
    adj = handshape_adjacency()
    adjacencies = [adj] * len(frames_with_labels)
    features = [frame_node_features(frame) for frame, _ in frames_with_labels]
    labels = np.array([label for _, label in frames_with_labels])
    return train_contrastive(adjacencies, features, labels, config, seed)


def embed_sequence(model: GcnModel, seq: SignSequence) -> np.ndarray:
    return embed(model, sequence_adjacency(seq.n_frames), sequence_node_features(seq))


def embed_frame(model: GcnModel, frame: np.ndarray) -> np.ndarray:
    return embed(model, handshape_adjacency(), frame_node_features(frame))


def raw_features(seq: SignSequence) -> np.ndarray:
    """63-d wrist-centered flattened representative frame (keypoint-major)."""
    frame = seq.frames[select_frame(seq.frames)]
    return frame_node_features(frame).reshape(-1)


def save_gnn_checkpoint(
    path: str | Path,
    result: TrainResult,
    kind: str,
    config: GnnTrainingConfig,
    optimizer_state: dict | None = None,
) -> None:
    header = {
        "kind": kind,
        "graph": "sequence" if kind == "sign" else "handshape",
        "config": asdict(config),
    }
    nn.save_checkpoint(path, result.model.state(), header=header, optimizer=optimizer_state)


def load_gnn_checkpoint(path: str | Path) -> tuple[GcnModel, dict]:
    arrays, header, _ = nn.load_checkpoint(path)
    cfg = header.get("config", {})
    model = GcnModel(
        make_rng(0),
        dropout=cfg.get("dropout", 0.2),
        negative_slope=cfg.get("negative_slope", 0.01),
    )
    model.load_state(arrays)
    return model, header
