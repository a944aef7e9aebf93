import json

import pytest


def write_jsonl(path, records):
    with open(path / "metadata.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


@pytest.fixture
def toy_root(tmp_path):
    """3-sample stub-encoder fixture: fixed 8-d image features, metadata-
    templated text, no declared splits."""
    records = [
        {"id": "c", "image": [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
         "meta": {"age": 54, "camera": "Canon"}, "label": 1},
        {"id": "a", "image": [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
         "text": "a small dog", "label": 0},
        {"id": "b", "image": [0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
         "text": "a large cat", "label": 1},
    ]
    root = tmp_path / "toy"
    root.mkdir()
    write_jsonl(root, records)
    return root
