"""Dataset adapters: turn an on-disk folder into an ordered sample stream.

The built-in "jsonl" adapter reads `<data_root>/metadata.jsonl`, one JSON
object per line:

    {"id": "...", "image": <path or feature list>, "text": "..." | "meta": {...},
     "label": int | "labels": [0/1,...], "split": "train"|"val"|"test"}

`text` takes priority over `meta`; with only `meta`, the text is rendered
through the job's template. Samples missing either modality are skipped and
logged with their id.
"""

import json
import logging
import os
from dataclasses import dataclass

from gapextract.errors import DatasetError
from gapextract.text import build_text

logger = logging.getLogger(__name__)

SPLIT_CODES = {"train": 0, "val": 1, "test": 2}


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image_source: object     # path string or fixed feature list
    text: str
    label: object            # int (multiclass) or list of 0/1 (multilabel)
    split: str | None


@dataclass(frozen=True)
class LoadedDataset:
    samples: list            # kept samples, sorted by id
    skipped_ids: list        # ids dropped for a missing modality
    task_kind: str           # "multiclass" or "multilabel"
    class_count: int


def _parse_record(record: dict, template: str, line_no: int) -> Sample | None:
    if "id" not in record:
        raise DatasetError(f"metadata.jsonl line {line_no}: sample has no id")
    sample_id = str(record["id"])
    image = record.get("image")
    text = record.get("text")
    if text is None and isinstance(record.get("meta"), dict):
        text = build_text(record["meta"], template)
    if image is None or text is None:
        logger.warning("skipping sample %s: missing modality", sample_id)
        return None
    if "label" in record:
        label = int(record["label"])
    elif "labels" in record:
        label = [int(v) for v in record["labels"]]
    else:
        raise DatasetError(f"sample {sample_id}: no label or labels field")
    split = record.get("split")
    if split is not None and split not in SPLIT_CODES:
        raise DatasetError(f"sample {sample_id}: unknown split {split!r}")
    return Sample(sample_id, image, str(text), label, split)


def load_jsonl(data_root: str, template: str = "kv") -> LoadedDataset:
    path = os.path.join(data_root, "metadata.jsonl")
    if not os.path.exists(path):
        raise DatasetError(f"no metadata.jsonl under {data_root}")
    samples, skipped = [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(
                    f"metadata.jsonl line {line_no}: invalid JSON ({exc})"
                ) from exc
            sample = _parse_record(record, template, line_no)
            if sample is None:
                skipped.append(str(record["id"]))
            else:
                samples.append(sample)
    if not samples:
        raise DatasetError(f"{path}: no usable samples")
    samples.sort(key=lambda s: s.sample_id)
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DatasetError(f"duplicate sample ids: {dupes}")

    multilabel = isinstance(samples[0].label, list)
    for s in samples:
        if isinstance(s.label, list) != multilabel:
            raise DatasetError(
                f"sample {s.sample_id}: mixed multiclass/multilabel labels"
            )
    if multilabel:
        widths = {len(s.label) for s in samples}
        if len(widths) != 1:
            raise DatasetError(f"inconsistent multilabel widths: {sorted(widths)}")
        class_count = widths.pop()
        task_kind = "multilabel"
    else:
        class_count = max(s.label for s in samples) + 1
        task_kind = "multiclass"
    return LoadedDataset(samples, skipped, task_kind, class_count)


ADAPTERS = {"jsonl": load_jsonl}


def load_dataset(adapter: str, data_root: str, template: str) -> LoadedDataset:
    if adapter not in ADAPTERS:
        raise DatasetError(
            f"unknown dataset adapter {adapter!r}; available: {sorted(ADAPTERS)}"
        )
    return ADAPTERS[adapter](data_root, template)
