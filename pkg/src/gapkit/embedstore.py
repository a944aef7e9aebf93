"""GAPEMB v1 container: paired image/text embeddings, labels and splits.

Layout (little-endian throughout):

    bytes 0-7   ASCII magic "GAPEMB01"
    u32 version (=1), u32 d, u64 N
    u8  dtype (0 = float32), u8 task_kind (0 = multiclass, 1 = multilabel)
    u16 reserved (=0), u32 C
    N*d f32 image embeddings (row-major)
    N*d f32 text embeddings (row-major)
    labels: multiclass -> N * u32 ; multilabel -> N*C * u8
    splits: N * u8 (0 = train, 1 = val, 2 = test)

A `<path>.manifest.json` sidecar carries human-readable metadata.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataValidationError,
    DegenerateEmbeddingError,
    FormatError,
    TruncatedFileError,
)

MAGIC = b"GAPEMB01"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sIIQBBHI")
HEADER_SIZE = HEADER.size  # 32 bytes

SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = 0, 1, 2
SPLIT_NAMES = {"train": SPLIT_TRAIN, "val": SPLIT_VAL, "test": SPLIT_TEST}
SPLIT_CODES = {v: k for k, v in SPLIT_NAMES.items()}

MULTICLASS, MULTILABEL = "multiclass", "multilabel"
_TASK_CODES = {MULTICLASS: 0, MULTILABEL: 1}
_TASK_NAMES = {0: MULTICLASS, 1: MULTILABEL}


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    """Scale every row to unit Euclidean norm, preserving direction.

    Raises DegenerateEmbeddingError naming the first row whose norm
    is below 1e-12.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise DegenerateEmbeddingError(
            f"row {bad[0]} has norm {norms[bad[0]]:.3e} (< 1e-12); cannot normalize"
        )
    return matrix / norms[:, None]


@dataclass
class DatasetManifest:
    dataset: str = "unknown"
    backbone: str = "unknown"
    created_by: str = "gapkit"
    dim: int = 0
    n_samples: int = 0
    class_count: int = 0
    task_kind: str = MULTICLASS
    split_counts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "backbone": self.backbone,
            "created_by": self.created_by,
            "dim": self.dim,
            "n_samples": self.n_samples,
            "class_count": self.class_count,
            "task_kind": self.task_kind,
            "split_counts": self.split_counts,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class PairedEmbeddingDataset:
    """N aligned (image, text) embedding rows with labels and split codes.

    Instances are treated as immutable once validated; operations that
    transform embeddings return new datasets.
    """

    image_embeddings: np.ndarray  # N x d, float
    text_embeddings: np.ndarray   # N x d, float
    labels: np.ndarray            # multiclass: (N,) ints; multilabel: N x C in {0,1}
    splits: np.ndarray            # (N,) uint8 split codes
    task_kind: str
    class_count: int

    @property
    def n_samples(self) -> int:
        return self.image_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.image_embeddings.shape[1]

    def split_mask(self, split: str) -> np.ndarray:
        if split == "all":
            return np.ones(self.n_samples, dtype=bool)
        if split not in SPLIT_NAMES:
            raise DataValidationError(f"splits: unknown split selector {split!r}")
        return self.splits == SPLIT_NAMES[split]

    def validate(self) -> None:
        img, txt = self.image_embeddings, self.text_embeddings
        if img.ndim != 2 or txt.ndim != 2:
            raise DataValidationError("image_embeddings/text_embeddings: expected 2-D matrices")
        if img.shape != txt.shape:
            raise DataValidationError(
                f"text_embeddings: shape {txt.shape} differs from image_embeddings {img.shape}"
            )
        n, d = img.shape
        if n < 1:
            raise DataValidationError("image_embeddings: need at least one row")
        if d < 2:
            raise DataValidationError(f"image_embeddings: dimension {d} < 2")
        if self.task_kind not in _TASK_CODES:
            raise DataValidationError(f"task_kind: unknown value {self.task_kind!r}")
        c = self.class_count
        if c < 1:
            raise DataValidationError(f"class_count: {c} < 1")
        if self.task_kind == MULTICLASS:
            if self.labels.shape != (n,):
                raise DataValidationError(
                    f"labels: expected shape ({n},) for multiclass, got {self.labels.shape}"
                )
            if self.labels.min(initial=0) < 0 or (n and self.labels.max() >= c):
                raise DataValidationError(
                    f"labels: multiclass values must lie in [0, {c}); "
                    f"found range [{self.labels.min()}, {self.labels.max()}]"
                )
        else:
            if self.labels.shape != (n, c):
                raise DataValidationError(
                    f"labels: expected shape ({n}, {c}) for multilabel, got {self.labels.shape}"
                )
            vals = np.unique(self.labels)
            if not np.isin(vals, (0, 1)).all():
                raise DataValidationError("labels: multilabel entries must be 0 or 1")
        if self.splits.shape != (n,):
            raise DataValidationError(f"splits: expected shape ({n},), got {self.splits.shape}")
        if not np.isin(self.splits, (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST)).all():
            raise DataValidationError("splits: values must be 0 (train), 1 (val) or 2 (test)")
        if not (self.splits == SPLIT_TRAIN).any():
            raise DataValidationError("splits: train split is empty")

    def normalized(self) -> "PairedEmbeddingDataset":
        return PairedEmbeddingDataset(
            image_embeddings=l2_normalize(self.image_embeddings),
            text_embeddings=l2_normalize(self.text_embeddings),
            labels=self.labels,
            splits=self.splits,
            task_kind=self.task_kind,
            class_count=self.class_count,
        )

    def split_counts(self) -> dict:
        return {
            name: int((self.splits == code).sum())
            for name, code in SPLIT_NAMES.items()
        }


def manifest_path(path: str) -> str:
    return str(path) + ".manifest.json"


def write_dataset(
    dataset: PairedEmbeddingDataset,
    path: str,
    manifest: DatasetManifest | None = None,
) -> None:
    """Serialize a dataset to GAPEMB v1; byte-identical for identical input."""
    dataset.validate()
    n, d = dataset.n_samples, dataset.dim
    c = dataset.class_count
    header = HEADER.pack(
        MAGIC, FORMAT_VERSION, d, n,
        0, _TASK_CODES[dataset.task_kind], 0, c,
    )
    img = np.ascontiguousarray(dataset.image_embeddings, dtype="<f4")
    txt = np.ascontiguousarray(dataset.text_embeddings, dtype="<f4")
    if dataset.task_kind == MULTICLASS:
        labels = np.ascontiguousarray(dataset.labels, dtype="<u4")
    else:
        labels = np.ascontiguousarray(dataset.labels, dtype=np.uint8)
    splits = np.ascontiguousarray(dataset.splits, dtype=np.uint8)

    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(img.tobytes())
        fh.write(txt.tobytes())
        fh.write(labels.tobytes())
        fh.write(splits.tobytes())
    os.replace(tmp, path)

    if manifest is None:
        manifest = DatasetManifest()
    manifest.dim = d
    manifest.n_samples = n
    manifest.class_count = c
    manifest.task_kind = dataset.task_kind
    manifest.split_counts = dataset.split_counts()
    with open(manifest_path(path), "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str) -> DatasetManifest | None:
    mpath = manifest_path(path)
    if not os.path.exists(mpath):
        return None
    with open(mpath, encoding="utf-8") as fh:
        return DatasetManifest.from_dict(json.load(fh))


def read_dataset(path: str, normalize: bool = True) -> PairedEmbeddingDataset:
    """Load and validate a GAPEMB v1 file.

    Rows are l2-normalized on load (normalize=True, the default), so all
    downstream geometry can assume unit rows.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes is smaller than the header")
    magic, version, d, n, dtype, task_code, reserved, c = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != 0:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if task_code not in _TASK_NAMES:
        raise FormatError(f"{path}: unknown task_kind code {task_code}")

    emb_bytes = n * d * 4
    label_bytes = n * 4 if task_code == 0 else n * c
    expected = HEADER_SIZE + 2 * emb_bytes + label_bytes + n
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} bytes, found {len(raw)} (truncated payload)"
        )

    off = HEADER_SIZE
    img = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    off += emb_bytes
    txt = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    off += emb_bytes
    if task_code == 0:
        labels = np.frombuffer(raw, dtype="<u4", count=n, offset=off).astype(np.int64)
        off += n * 4
    else:
        labels = np.frombuffer(raw, dtype=np.uint8, count=n * c, offset=off).reshape(n, c).copy()
        off += n * c
    splits = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off).copy()

    ds = PairedEmbeddingDataset(
        image_embeddings=img.astype(np.float64),
        text_embeddings=txt.astype(np.float64),
        labels=labels,
        splits=splits,
        task_kind=_TASK_NAMES[task_code],
        class_count=int(c),
    )
    ds.validate()
    if normalize:
        ds = ds.normalized()
    return ds
