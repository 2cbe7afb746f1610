import csv
import json

import numpy as np
import pytest

from embedspace.core import EmbeddingSet, save_embeddings


def write_zoo(
    root,
    n_classes=5,
    per_class=30,
    dim=12,
    noise_clean=0.05,
    noise_noisy=0.6,
    seed=0,
):
    """Synthetic three-model dataset with a known difficulty ordering.

    clean: one-hot class features plus small noise; noisy: clean plus strong
    noise; shuffled: clean embeddings re-assigned to a label permutation.
    Returns (embedding paths, annotations path, registry path).
    """
    rng = np.random.default_rng(seed)
    n = n_classes * per_class
    labels = np.repeat(np.arange(n_classes), per_class)
    event_ids = [f"ev{i:05d}" for i in range(n)]

    onehot = np.zeros((n, dim), dtype=np.float64)
    onehot[np.arange(n), labels % dim] = 1.0
    clean = onehot + rng.normal(0.0, noise_clean, size=(n, dim))
    noisy = clean + rng.normal(0.0, noise_noisy, size=(n, dim))
    perm = rng.permutation(n)
    shuffled = clean[perm]

    paths = []
    for name, data in (("clean", clean), ("noisy", noisy), ("shuffled", shuffled)):
        es = EmbeddingSet(
            model_name=name, data=data.astype(np.float32), event_ids=tuple(event_ids)
        )
        path = root / f"{name}.bemb"
        save_embeddings(es, path)
        paths.append(str(path))

    ann_path = root / "annotations.csv"
    with open(ann_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_id", "file", "start_s", "end_s", "label"])
        for i, eid in enumerate(event_ids):
            writer.writerow([eid, f"rec{i % 7}.wav", float(i), float(i) + 0.5,
                             f"species_{labels[i]}"])

    reg_path = root / "registry.json"
    reg_path.write_text(json.dumps([
        {"name": "clean", "abbrev": "cln", "training": "supl",
         "dimension": dim, "domains": ["birds"]},
        {"name": "noisy", "abbrev": "nsy", "training": "ssl",
         "dimension": dim, "domains": ["general"]},
        {"name": "shuffled", "abbrev": "shf", "training": "supl",
         "dimension": dim, "domains": ["insects"]},
    ]))
    return paths, str(ann_path), str(reg_path)


@pytest.fixture
def zoo(tmp_path):
    return write_zoo(tmp_path)
