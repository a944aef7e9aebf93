"""Early-fusion linear probe: concatenated image+text features, affine model,
momentum SGD with early stopping, macro AUC evaluation.

The probe has no hidden layers or activations. Weights start at zero: the
objective is convex, so the seed only affects shuffling and val carving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedstore import (
    MULTICLASS,
    MULTILABEL,
    SPLIT_TRAIN,
    SPLIT_VAL,
    PairedEmbeddingDataset,
)
from .errors import ConfigurationError, EvaluationError, NumericError, ParameterError


@dataclass
class ProbeModel:
    weights: np.ndarray  # C x 2d
    bias: np.ndarray     # C
    task_kind: str


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    momentum: float = 0.9
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    val_fraction: float = 0.1  # used only when the dataset has no val split
    class_weighted: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ParameterError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass
class TrainHistory:
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    best_epoch: int = -1  # 0-based index into val_losses
    epochs_run: int = 0


def fuse(v_aligned: np.ndarray, t_aligned: np.ndarray) -> np.ndarray:
    """Concatenate image then text features along the last axis."""
    v_aligned = np.asarray(v_aligned)
    t_aligned = np.asarray(t_aligned)
    if v_aligned.shape != t_aligned.shape:
        raise ParameterError(
            f"fuse: shapes differ, {v_aligned.shape} vs {t_aligned.shape}"
        )
    return np.concatenate([v_aligned, t_aligned], axis=-1)


def forward(model: ProbeModel, x: np.ndarray) -> np.ndarray:
    """Affine logits W x + b; accepts a single vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.weights.shape[1]:
        raise ParameterError(
            f"forward: feature dim {x.shape[-1]} != weight columns {model.weights.shape[1]}"
        )
    return x @ model.weights.T + model.bias


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def loss_and_grad(
    model: ProbeModel,
    features: np.ndarray,
    labels: np.ndarray,
    class_weights: np.ndarray,
):
    """Weighted cross-entropy loss and its exact gradients.

    multilabel: mean over samples and labels of w_c * BCE(sigmoid(z), y)
    multiclass: mean over samples of w_y * CE(softmax(z), y)
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    n = x.shape[0]
    if n == 0:
        raise ParameterError("loss_and_grad: empty batch")
    w = np.asarray(class_weights, dtype=np.float64)
    if (w <= 0).any():
        raise ParameterError("class_weights must be positive")
    z = forward(model, x)
    if not np.isfinite(z).all():
        bad = int(np.flatnonzero(~np.isfinite(z).all(axis=1))[0])
        raise NumericError(f"non-finite logits at batch index {bad}")

    if model.task_kind == MULTICLASS:
        y = np.asarray(labels, dtype=np.int64).reshape(n)
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        log_p = z - lse[:, None]
        wy = w[y]
        loss = float(np.mean(-wy * log_p[np.arange(n), y]))
        g = np.exp(log_p)
        g[np.arange(n), y] -= 1.0
        g *= (wy / n)[:, None]
    else:
        y = np.asarray(labels, dtype=np.float64).reshape(n, -1)
        c = z.shape[1]
        # BCE via softplus keeps large |z| finite: softplus(z) - y*z
        per_term = w[None, :] * (_softplus(z) - y * z)
        loss = float(per_term.sum() / (n * c))
        sig = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
        g = w[None, :] * (sig - y) / (n * c)

    grad_w = g.T @ x
    grad_b = g.sum(axis=0)
    return loss, grad_w, grad_b


def compute_class_weights(
    labels: np.ndarray, task_kind: str, class_count: int, n_train: int
) -> np.ndarray:
    """Inverse-frequency weights N/(C * count_c), clamped to [0.1, 10]."""
    if task_kind == MULTICLASS:
        counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=class_count)
    else:
        counts = np.asarray(labels).reshape(len(labels), class_count).sum(axis=0)
    counts = counts.astype(np.float64)
    with np.errstate(divide="ignore"):
        w = np.where(counts > 0, n_train / (class_count * np.maximum(counts, 1e-300)), np.inf)
    return np.clip(w, 0.1, 10.0)


def _carve_val(train_idx: np.ndarray, fraction: float, rng: np.random.Generator):
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(
            f"dataset has no val split and val_fraction={fraction} cannot carve one"
        )
    perm = rng.permutation(len(train_idx))
    n_val = max(1, int(round(fraction * len(train_idx))))
    if n_val >= len(train_idx):
        raise ConfigurationError("val carving would leave the train split empty")
    return train_idx[perm[n_val:]], train_idx[perm[:n_val]]


def train_probe(dataset: PairedEmbeddingDataset, config: TrainConfig):
    """Momentum SGD on the early-fusion probe with val-loss early stopping.

    Returns the best-val-loss snapshot and the per-epoch history.
    Deterministic given (dataset, config): zero init, seeded shuffling.
    """
    features = fuse(dataset.image_embeddings, dataset.text_embeddings)
    labels = dataset.labels
    rng = np.random.default_rng(config.seed)

    train_idx = np.flatnonzero(dataset.splits == SPLIT_TRAIN)
    val_idx = np.flatnonzero(dataset.splits == SPLIT_VAL)
    if val_idx.size == 0:
        train_idx, val_idx = _carve_val(train_idx, config.val_fraction, rng)
    if val_idx.size == 0:
        raise ConfigurationError("effective validation set is empty")

    c = dataset.class_count
    if config.class_weighted:
        weights = compute_class_weights(
            labels[train_idx], dataset.task_kind, c, len(train_idx)
        )
    else:
        weights = np.ones(c)

    two_d = 2 * dataset.dim
    model = ProbeModel(
        weights=np.zeros((c, two_d)), bias=np.zeros(c), task_kind=dataset.task_kind
    )
    vel_w = np.zeros_like(model.weights)
    vel_b = np.zeros_like(model.bias)

    x_val, y_val = features[val_idx], labels[val_idx]
    history = TrainHistory()
    best_val = np.inf
    best_w, best_b = model.weights.copy(), model.bias.copy()
    stale = 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(train_idx.size)
        batch_losses = []
        for start in range(0, train_idx.size, config.batch_size):
            idx = train_idx[order[start:start + config.batch_size]]
            loss, gw, gb = loss_and_grad(model, features[idx], labels[idx], weights)
            vel_w = config.momentum * vel_w - config.learning_rate * gw
            vel_b = config.momentum * vel_b - config.learning_rate * gb
            model.weights += vel_w
            model.bias += vel_b
            batch_losses.append(loss)
        val_loss, _, _ = loss_and_grad(model, x_val, y_val, weights)
        history.train_losses.append(float(np.mean(batch_losses)))
        history.val_losses.append(val_loss)
        history.epochs_run = epoch + 1
        if val_loss < best_val:
            best_val = val_loss
            best_w, best_b = model.weights.copy(), model.bias.copy()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    return ProbeModel(weights=best_w, bias=best_b, task_kind=dataset.task_kind), history


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the group average."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    n = len(values)
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores: np.ndarray, targets: np.ndarray) -> float:
    """Rank-based ROC AUC with tie correction (Mann-Whitney U statistic)."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets).astype(bool)
    n_pos = int(targets.sum())
    n_neg = len(targets) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("roc_auc needs both positive and negative examples")
    ranks = _average_ranks(scores)
    return float(
        (ranks[targets].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    return e / e.sum(axis=1, keepdims=True)


def evaluate_auc(model: ProbeModel, dataset: PairedEmbeddingDataset, split: str = "test"):
    """Per-class one-vs-rest AUC and their unweighted (macro) mean.

    Classes without both positives and negatives in the split are excluded
    and reported; their per-class entry is NaN.
    """
    mask = dataset.split_mask(split)
    if not mask.any():
        raise EvaluationError(f"split {split!r} is empty")
    features = fuse(
        dataset.image_embeddings[mask], dataset.text_embeddings[mask]
    )
    z = forward(model, features)
    c = dataset.class_count
    if model.task_kind == MULTICLASS:
        scores = _softmax(z)
        y = np.asarray(dataset.labels[mask], dtype=np.int64)
        targets = np.zeros((len(y), c), dtype=bool)
        targets[np.arange(len(y)), y] = True
    else:
        scores = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
        targets = np.asarray(dataset.labels[mask]).astype(bool).reshape(-1, c)

    per_class = np.full(c, np.nan)
    excluded = []
    for cls in range(c):
        t = targets[:, cls]
        if t.all() or not t.any():
            excluded.append(cls)
            continue
        per_class[cls] = roc_auc(scores[:, cls], t)
    scored = ~np.isnan(per_class)
    if not scored.any():
        raise EvaluationError("every class lacks positives or negatives")
    overall = float(per_class[scored].mean())
    return overall, per_class, excluded
