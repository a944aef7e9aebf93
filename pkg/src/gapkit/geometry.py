"""Embedding-space geometry: centroid gap, lambda-alignment, concentration, PCA.

The gap between modalities is summarized by the difference of the per-modality
centroids of unit-normalized rows; its Euclidean norm is the scalar gap.
The alignment intervention shifts text rows by +lambda/2 * gap_vector and
image rows by -lambda/2 * gap_vector, then renormalizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedstore import PairedEmbeddingDataset, l2_normalize
from .errors import DataValidationError, DegenerateEmbeddingError, ParameterError

UNIT_TOL = 1e-6


def _require_unit_rows(rows: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(rows, axis=1)
    off = np.abs(norms - 1.0)
    if off.size and off.max() > UNIT_TOL:
        idx = int(off.argmax())
        raise ParameterError(
            f"{what}: row {idx} has norm {norms[idx]:.8f}, expected 1 within {UNIT_TOL}"
        )


@dataclass(frozen=True)
class GapGeometry:
    mu_image: np.ndarray
    mu_text: np.ndarray
    delta: np.ndarray       # mu_image - mu_text
    gap_norm: float
    r_image: float
    r_text: float
    n_samples: int
    split: str


@dataclass(frozen=True)
class AlignmentConfig:
    lam: float
    delta: np.ndarray  # gap vector estimated on the train split

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must be in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class PcaProjection:
    components: np.ndarray          # k x d, orthonormal rows
    explained_variance: np.ndarray  # k, non-increasing
    projected_image: np.ndarray     # N x k
    projected_text: np.ndarray      # N x k
    mean_used: np.ndarray           # d, pooled mean


def mean_resultant_length(rows: np.ndarray) -> float:
    """Norm of the average of unit rows: 0 for isotropy, 1 for identical rows."""
    rows = np.asarray(rows, dtype=np.float64)
    _require_unit_rows(rows, "mean_resultant_length")
    return float(np.linalg.norm(rows.mean(axis=0)))


def compute_gap(dataset: PairedEmbeddingDataset, split: str = "train") -> GapGeometry:
    """Centroids, gap vector and per-modality concentration over one split."""
    mask = dataset.split_mask(split)
    if not mask.any():
        raise DataValidationError(f"splits: split {split!r} is empty")
    img = dataset.image_embeddings[mask]
    txt = dataset.text_embeddings[mask]
    mu_v = img.mean(axis=0)
    mu_t = txt.mean(axis=0)
    delta = mu_v - mu_t
    return GapGeometry(
        mu_image=mu_v,
        mu_text=mu_t,
        delta=delta,
        gap_norm=float(np.linalg.norm(delta)),
        r_image=mean_resultant_length(img),
        r_text=mean_resultant_length(txt),
        n_samples=int(mask.sum()),
        split=split,
    )


def _shift(dataset: PairedEmbeddingDataset, config: AlignmentConfig):
    delta = np.asarray(config.delta, dtype=np.float64)
    if delta.shape != (dataset.dim,):
        raise ParameterError(
            f"delta has shape {delta.shape}, dataset dimension is {dataset.dim}"
        )
    half = 0.5 * config.lam * delta
    return dataset.image_embeddings - half, dataset.text_embeddings + half


def align(dataset: PairedEmbeddingDataset, config: AlignmentConfig) -> PairedEmbeddingDataset:
    """Shift both modalities along the gap vector and renormalize.

    The gap vector in `config` is applied to every split; callers estimate it
    on the train split only (no test-time re-estimation).
    """
    img_shifted, txt_shifted = _shift(dataset, config)
    for name, rows in (("image", img_shifted), ("text", txt_shifted)):
        norms = np.linalg.norm(rows, axis=1)
        bad = np.flatnonzero(norms < 1e-9)
        if bad.size:
            raise DegenerateEmbeddingError(
                f"{name} row {bad[0]} collapses to norm {norms[bad[0]]:.3e} "
                f"at lambda={config.lam}"
            )
    return PairedEmbeddingDataset(
        image_embeddings=l2_normalize(img_shifted),
        text_embeddings=l2_normalize(txt_shifted),
        labels=dataset.labels,
        splits=dataset.splits,
        task_kind=dataset.task_kind,
        class_count=dataset.class_count,
    )


def pre_normalization_gap(
    dataset: PairedEmbeddingDataset, config: AlignmentConfig, split: str = "train"
) -> float:
    """Centroid gap of the shifted-but-not-renormalized rows on one split.

    On the split the gap vector was estimated from, this equals
    (1 - lambda) * gap_norm up to rounding.
    """
    mask = dataset.split_mask(split)
    if not mask.any():
        raise DataValidationError(f"splits: split {split!r} is empty")
    img_shifted, txt_shifted = _shift(dataset, config)
    diff = img_shifted[mask].mean(axis=0) - txt_shifted[mask].mean(axis=0)
    return float(np.linalg.norm(diff))


def _fix_signs(components: np.ndarray) -> np.ndarray:
    # Deterministic orientation: largest-magnitude entry of each component positive.
    out = components.copy()
    for i in range(out.shape[0]):
        j = int(np.abs(out[i]).argmax())
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def pca_project(dataset: PairedEmbeddingDataset, k: int) -> PcaProjection:
    """Top-k PCA of the pooled (image plus text) rows, centered by the pooled mean.

    Uses the d x d covariance when feasible, the 2N x 2N Gram matrix otherwise.
    Sample covariance convention (divisor 2N - 1).
    """
    n, d = dataset.n_samples, dataset.dim
    if not 1 <= k <= min(2 * n, d):
        raise ParameterError(f"k={k} outside [1, {min(2 * n, d)}]")
    pooled = np.vstack([dataset.image_embeddings, dataset.text_embeddings])
    mean = pooled.mean(axis=0)
    centered = pooled - mean
    m = centered.shape[0]
    denom = max(m - 1, 1)
    if d <= m:
        cov = centered.T @ centered / denom
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:k]
        components = evecs[:, order].T
        variances = evals[order]
    else:
        gram = centered @ centered.T / denom
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:k]
        variances = evals[order]
        components = np.empty((k, d))
        for i, idx in enumerate(order):
            direction = centered.T @ evecs[:, idx]
            nrm = np.linalg.norm(direction)
            if nrm < 1e-12:
                raise ParameterError(
                    f"k={k} exceeds the effective rank of the pooled data"
                )
            components[i] = direction / nrm
    components = _fix_signs(np.ascontiguousarray(components))
    variances = np.clip(variances, 0.0, None)
    centered_img = dataset.image_embeddings - mean
    centered_txt = dataset.text_embeddings - mean
    return PcaProjection(
        components=components,
        explained_variance=variances,
        projected_image=centered_img @ components.T,
        projected_text=centered_txt @ components.T,
        mean_used=mean,
    )


def participation_ratio(eigenvalues: np.ndarray) -> float:
    """Effective rank of a spectrum: (sum(l))^2 / sum(l^2)."""
    ev = np.clip(np.asarray(eigenvalues, dtype=np.float64), 0.0, None)
    total_sq = float(np.sum(ev)) ** 2
    denom = float(np.sum(ev**2))
    if denom == 0.0:
        raise ParameterError("all eigenvalues are zero")
    return total_sq / denom
