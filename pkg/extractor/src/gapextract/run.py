"""Drive one extraction job end to end: load samples, encode both
modalities in batches, assign splits, and write a GAPEMB v1 file."""

import logging

import numpy as np

from gapkit.embedstore import DatasetManifest, PairedEmbeddingDataset, write_dataset
from gapkit.embedstore import l2_normalize

from gapextract import __version__
from gapextract.backbones import make_backbone
from gapextract.datasets import SPLIT_CODES, load_dataset
from gapextract.errors import DatasetError, DimensionMismatchError
from gapextract.job import ExtractionJob
from gapextract.text import template_fields

logger = logging.getLogger(__name__)


def assign_splits(samples, seed: int, fractions) -> np.ndarray:
    """Honor per-sample splits when every sample declares one; otherwise
    draw a seeded assignment at the given fractions."""
    declared = [s.split for s in samples]
    if all(d is not None for d in declared):
        return np.array([SPLIT_CODES[d] for d in declared], dtype=np.uint8)
    if any(d is not None for d in declared):
        partial = [s.sample_id for s in samples if s.split is None]
        raise DatasetError(
            f"samples {partial[:5]} have no split while others do; "
            "declare splits for all samples or none"
        )
    n = len(samples)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    codes = np.full(n, 2, dtype=np.uint8)
    order = np.random.default_rng(seed).permutation(n)
    codes[order[:n_train]] = 0
    codes[order[n_train:n_train + n_val]] = 1
    return codes


def _encode_in_batches(encode, samples, batch_size: int) -> np.ndarray:
    chunks = [
        encode(samples[i:i + batch_size])
        for i in range(0, len(samples), batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def run_extraction(job: ExtractionJob) -> DatasetManifest:
    data = load_dataset(job.dataset, job.data_root, job.template)
    backbone = make_backbone(job.backbone, device=job.device, **job.backbone_options)

    img = _encode_in_batches(backbone.encode_images, data.samples, job.batch_size)
    txt = _encode_in_batches(backbone.encode_texts, data.samples, job.batch_size)
    if img.shape[1] != txt.shape[1]:
        raise DimensionMismatchError(
            f"image encoder emits d={img.shape[1]} but text encoder "
            f"emits d={txt.shape[1]}"
        )
    img = l2_normalize(img.astype(np.float32))
    txt = l2_normalize(txt.astype(np.float32))

    if data.task_kind == "multiclass":
        labels = np.array([s.label for s in data.samples], dtype=np.int64)
    else:
        labels = np.array([s.label for s in data.samples], dtype=np.uint8)
    splits = assign_splits(data.samples, job.split_seed, job.split_fractions)

    dataset = PairedEmbeddingDataset(
        img, txt, labels, splits, data.task_kind, data.class_count
    )
    manifest = DatasetManifest(
        dataset=job.dataset,
        backbone=job.backbone,
        created_by=f"gapextract {__version__}",
        extra={
            "backbone_info": backbone.manifest_info(),
            "template": job.template,
            "template_fields": template_fields(job.template),
            "skipped_ids": data.skipped_ids,
            "skip_count": len(data.skipped_ids),
            "split_seed": job.split_seed,
            "split_fractions": list(job.split_fractions),
            "sample_ids": [s.sample_id for s in data.samples],
        },
    )
    write_dataset(dataset, job.out_path, manifest)
    logger.info(
        "wrote %d samples (d=%d, %d skipped) to %s",
        dataset.n_samples, dataset.dim, len(data.skipped_ids), job.out_path,
    )
    return manifest
