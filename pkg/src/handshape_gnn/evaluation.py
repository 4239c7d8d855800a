"""Classification metrics, grid search, k-means clustering and
cluster-stability analysis.

Macro-F1 convention: classes that never occur in the truths and are never
predicted are excluded from the macro average; a zero-support class that was
predicted at least once contributes F1 = 0.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .data import LabelVocab
from .nn import TrainingDivergenceError
from .rng import make_rng


@dataclass
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    per_class: list[ClassMetrics]
    confusion: np.ndarray = field(repr=False)  # rows = true, cols = predicted
    total: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "total": self.total,
            "per_class": [
                {
                    "handshape": c.name,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "support": c.support,
                }
                for c in self.per_class
            ],
            "confusion": self.confusion.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        return cls(
            accuracy=doc["accuracy"],
            macro_f1=doc["macro_f1"],
            per_class=[
                ClassMetrics(
                    name=row["handshape"],
                    precision=row["precision"],
                    recall=row["recall"],
                    f1=row["f1"],
                    support=row["support"],
                )
                for row in doc["per_class"]
            ],
            confusion=np.array(doc["confusion"]),
            total=doc["total"],
        )


def evaluate(predictions, truths, vocab: LabelVocab) -> MetricsReport:
    """Accuracy, macro-F1, per-class precision/recall/F1/support and the
    confusion matrix for integer class ids."""
    predictions = np.asarray(predictions, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if predictions.shape != truths.shape or predictions.ndim != 1:
        raise ValueError(
            f"predictions and truths must be equal-length 1-D, got "
            f"{predictions.shape} and {truths.shape}"
        )
    if predictions.size == 0:
        raise ValueError("cannot evaluate empty prediction lists")
    k = len(vocab)
    for arr, what in ((predictions, "prediction"), (truths, "truth")):
        bad = (arr < 0) | (arr >= k)
        if np.any(bad):
            raise ValueError(f"{what} id {arr[bad][0]} outside the {k}-class vocabulary")
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (truths, predictions), 1)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    diag = np.diag(confusion)
    per_class = []
    f1_pool = []
    for c in range(k):
        precision = diag[c] / predicted[c] if predicted[c] else 0.0
        recall = diag[c] / support[c] if support[c] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(
            ClassMetrics(
                name=vocab.names[c],
                precision=float(precision),
                recall=float(recall),
                f1=float(f1),
                support=int(support[c]),
            )
        )
        if support[c] > 0 or predicted[c] > 0:
            f1_pool.append(f1)
    return MetricsReport(
        accuracy=float(diag.sum() / truths.size),
        macro_f1=float(np.mean(f1_pool)),
        per_class=per_class,
        confusion=confusion,
        total=int(truths.size),
    )


REPORT_COLUMNS = ("Handshape", "Precision", "Recall", "F1-Score", "Support")


def format_report_table(report: MetricsReport) -> str:
    """Plain-text per-class table, one row per class, sorted by F1 descending."""
    rows = sorted(report.per_class, key=lambda c: (-c.f1, c.name))
    width = max(len(REPORT_COLUMNS[0]), max(len(c.name) for c in rows))
    lines = [
        f"{REPORT_COLUMNS[0]:<{width}}  {REPORT_COLUMNS[1]:>9}  {REPORT_COLUMNS[2]:>9}  "
        f"{REPORT_COLUMNS[3]:>9}  {REPORT_COLUMNS[4]:>7}"
    ]
    for c in rows:
        lines.append(
            f"{c.name:<{width}}  {c.precision:>9.3f}  {c.recall:>9.3f}  "
            f"{c.f1:>9.3f}  {c.support:>7d}"
        )
    lines.append(f"Macro Avg F1: {report.macro_f1:.3f}")
    lines.append(f"Accuracy: {report.accuracy * 100:.2f}%")
    return "\n".join(lines) + "\n"


def parse_report_table(text: str) -> list[dict]:
    """Parse the per-class rows back out of a formatted table."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    if tuple(header) != REPORT_COLUMNS:
        raise ValueError(f"unexpected table header {header}")
    rows = []
    for ln in lines[1:]:
        if ln.startswith(("Macro", "Accuracy")):
            break
        name, precision, recall, f1, support = ln.split()
        rows.append(
            {
                "handshape": name,
                "precision": float(precision),
                "recall": float(recall),
                "f1": float(f1),
                "support": int(support),
            }
        )
    return rows


def write_confusion_csv(report: MetricsReport, vocab: LabelVocab, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + vocab.names)
        for name, row in zip(vocab.names, report.confusion):
            writer.writerow([name] + [int(v) for v in row])


# -- grid search --------------------------------------------------------------


@dataclass
class GridSearchPlan:
    learning_rates: tuple[float, ...] = (1e-6, 1e-5, 1e-4, 1e-3)
    weight_decays: tuple[float, ...] = (1e-5, 1e-4)
    patiences: tuple[int, ...] = (2, 10, 50, 75)
    seeds: tuple[int, ...] = (0, 1, 2, 3)

    def __post_init__(self):
        if not (self.learning_rates and self.weight_decays and self.patiences and self.seeds):
            raise ValueError("grid search plan sets must be non-empty")


@dataclass
class GridRunRecord:
    learning_rate: float
    weight_decay: float
    patience: int
    seed: int
    accuracy: float | None
    error: str | None = None


@dataclass
class GridSearchResult:
    best: tuple[float, float, int]
    config_means: dict[tuple[float, float, int], float]
    records: list[GridRunRecord]


def grid_search(plan: GridSearchPlan, train_fn, eval_fn) -> GridSearchResult:
    """Exhaustive search over the (lr, weight decay, patience) grid.

    train_fn(learning_rate, weight_decay, patience, seed) returns a trained
    model; eval_fn(model) returns validation accuracy. A diverged run is
    recorded as failed rather than aborting the search; a config scores the
    mean accuracy of its successful runs. Ties break toward lower learning
    rate, then lower weight decay, then lower patience.
    """
    records = []
    config_means = {}
    for lr, wd, patience in product(plan.learning_rates, plan.weight_decays, plan.patiences):
        accs = []
        for seed in plan.seeds:
            try:
                model = train_fn(learning_rate=lr, weight_decay=wd, patience=patience, seed=seed)
                acc = float(eval_fn(model))
                records.append(GridRunRecord(lr, wd, patience, seed, acc))
                accs.append(acc)
            except TrainingDivergenceError as exc:
                records.append(GridRunRecord(lr, wd, patience, seed, None, error=str(exc)))
        if accs:
            config_means[(lr, wd, patience)] = float(np.mean(accs))
    if not config_means:
        raise TrainingDivergenceError("every grid-search run diverged")
    best = min(config_means, key=lambda cfg: (-config_means[cfg], cfg[0], cfg[1], cfg[2]))
    return GridSearchResult(best=best, config_means=config_means, records=records)


# -- clustering ---------------------------------------------------------------


@dataclass
class KmeansResult:
    assignments: np.ndarray
    centroids: np.ndarray = field(repr=False)
    inertia_history: list[float]

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _weighted_pick(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw proportional to weights (uniform when all zero)."""
    total = weights.sum()
    u = rng.random()
    if total <= 0:
        return min(int(u * len(weights)), len(weights) - 1)
    return int(np.searchsorted(np.cumsum(weights), u * total, side="right"))


def kmeans(
    points: np.ndarray,
    k: int,
    metric: str = "euclidean",
    seed: int = 0,
    max_iter: int = 300,
) -> KmeansResult:
    """Lloyd iterations from a k-means++ seeding until the assignment fixes.

    Cosine mode normalizes points and centroids to unit length (spherical
    k-means); inertia is then squared distance on the sphere. An emptied
    cluster is re-seeded from the point farthest from its nearest centroid.

    Internally the points are collapsed to unique rows with multiplicity
    weights and the seeding draws by inverse CDF, so the result depends only
    on the multiset of points: duplicating every point (or reordering) leaves
    cluster contents identical, which the stability analysis relies on.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be 2-D, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain non-finite values")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    if metric not in ("euclidean", "cosine"):
        raise ValueError(f"unknown metric '{metric}'")
    if metric == "cosine":
        norms = np.linalg.norm(points, axis=1)
        if np.any(norms == 0):
            raise ValueError("cosine metric requires non-zero vectors")
        points = points / norms[:, None]

    unique, inverse, counts = np.unique(points, axis=0, return_inverse=True, return_counts=True)
    weights = counts.astype(np.float64)
    rng = make_rng(seed)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = unique[_weighted_pick(weights, rng)]
    d2 = ((unique - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        centroids[c] = unique[_weighted_pick(weights * d2, rng)]
        d2 = np.minimum(d2, ((unique - centroids[c]) ** 2).sum(axis=1))

    sq_norms = (unique**2).sum(axis=1, keepdims=True)
    assigned = np.full(len(unique), -1)
    history = []
    for _ in range(max_iter):
        dist = sq_norms - 2.0 * unique @ centroids.T + (centroids**2).sum(axis=1)
        new_assigned = np.argmin(dist, axis=1)
        mins = dist[np.arange(len(unique)), new_assigned]
        for c in range(k):
            if not np.any(new_assigned == c):
                centroids[c] = unique[int(np.argmax(mins))]
                dist[:, c] = ((unique - centroids[c]) ** 2).sum(axis=1)
                new_assigned = np.argmin(dist, axis=1)
                mins = dist[np.arange(len(unique)), new_assigned]
        history.append(float((weights * np.maximum(mins, 0.0)).sum()))
        if np.array_equal(new_assigned, assigned):
            break
        assigned = new_assigned
        for c in range(k):
            mask = assigned == c
            if not np.any(mask):
                continue
            total = (weights[mask, None] * unique[mask]).sum(axis=0)
            if metric == "cosine":
                norm = np.linalg.norm(total)
                if norm > 0:
                    centroids[c] = total / norm
            else:
                centroids[c] = total / weights[mask].sum()
    return KmeansResult(
        assignments=assigned[inverse], centroids=centroids, inertia_history=history
    )


def jaccard_stability(assignments_a: np.ndarray, assignments_b: np.ndarray) -> np.ndarray:
    """Matrix of |A_i intersect B_j| / |A_i union B_j| over cluster pairs."""
    a = np.asarray(assignments_a, dtype=np.int64)
    b = np.asarray(assignments_b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("clusterings must be equal-length non-empty 1-D arrays")
    k1 = int(a.max()) + 1
    k2 = int(b.max()) + 1
    inter = np.zeros((k1, k2))
    np.add.at(inter, (a, b), 1.0)
    size_a = inter.sum(axis=1, keepdims=True)
    size_b = inter.sum(axis=0, keepdims=True)
    union = size_a + size_b - inter
    with np.errstate(invalid="ignore"):
        matrix = np.where(union > 0, inter / union, 0.0)
    return matrix


def stability_report(
    points: np.ndarray,
    k_small: int = 30,
    k_large: int = 50,
    metrics: tuple[str, ...] = ("euclidean", "cosine"),
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Cluster at both k for both metrics and compare the four adjacent pairs:
    each metric across k, and each k across metrics."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < k_large:
        raise ValueError(f"need at least {k_large} points, got {points.shape[0]}")
    runs = {
        (metric, k): kmeans(points, k, metric=metric, seed=seed).assignments
        for metric in metrics
        for k in (k_small, k_large)
    }
    matrices = {}
    for metric in metrics:
        matrices[f"{metric}_k{k_small}_vs_k{k_large}"] = jaccard_stability(
            runs[(metric, k_small)], runs[(metric, k_large)]
        )
    if len(metrics) == 2:
        for k in (k_small, k_large):
            matrices[f"k{k}_{metrics[0]}_vs_{metrics[1]}"] = jaccard_stability(
                runs[(metrics[0], k)], runs[(metrics[1], k)]
            )
    return matrices


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster"] + [str(j) for j in range(matrix.shape[1])])
        for i, row in enumerate(matrix):
            writer.writerow([str(i)] + [repr(float(v)) for v in row])


def seed_aggregate(reports: list[MetricsReport]) -> dict[str, float]:
    """Mean and sample std of accuracy and macro-F1 across per-seed reports."""
    if not reports:
        raise ValueError("seed_aggregate needs at least one report")
    acc = np.array([r.accuracy for r in reports])
    f1 = np.array([r.macro_f1 for r in reports])
    std = lambda v: float(v.std(ddof=1)) if len(v) > 1 else 0.0  # noqa: E731
    return {
        "accuracy_mean": float(acc.mean()),
        "accuracy_std": std(acc),
        "macro_f1_mean": float(f1.mean()),
        "macro_f1_std": std(f1),
    }


def report_to_json(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), sort_keys=True))


def report_from_json(path: str | Path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text()))
