import numpy as np
import pytest

from gapkit.embedstore import PairedEmbeddingDataset


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def make_dataset(
    n=60,
    d=8,
    c=3,
    task_kind="multiclass",
    seed=0,
    fractions=(0.6, 0.2, 0.2),
) -> PairedEmbeddingDataset:
    rng = np.random.default_rng(seed)
    img = unit_rows(rng, n, d)
    txt = unit_rows(rng, n, d)
    if task_kind == "multiclass":
        labels = rng.integers(0, c, size=n)
    else:
        labels = rng.integers(0, 2, size=(n, c)).astype(np.uint8)
    n_train = max(1, int(round(fractions[0] * n)))
    n_val = int(round(fractions[1] * n))
    splits = np.full(n, 2, dtype=np.uint8)
    splits[:n_train] = 0
    splits[n_train:n_train + n_val] = 1
    ds = PairedEmbeddingDataset(img, txt, labels, splits, task_kind, c)
    ds.validate()
    return ds


@pytest.fixture
def small_multiclass():
    return make_dataset(n=60, d=8, c=3, task_kind="multiclass", seed=1)


@pytest.fixture
def small_multilabel():
    return make_dataset(n=60, d=8, c=4, task_kind="multilabel", seed=2)
