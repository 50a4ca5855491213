import json
import random

import pytest
import yaml


def write_reviews_file(path, n_users=20, n_items=15, seed=0):
    """Synthetic review corpus: every user gets 6-12 items from a shared pool,
    so the frequency filters keep most of it."""
    rng = random.Random(seed)
    items = [(f"item{j:03d}", f"Product {j} {'Deluxe' if j % 2 else 'Classic'}")
             for j in range(n_items)]
    lines = []
    for u in range(n_users):
        count = rng.randint(6, min(12, n_items))
        picks = rng.sample(range(n_items), count)
        for t, j in enumerate(picks):
            lines.append(json.dumps({
                "user_id": f"user{u:03d}",
                "item_id": items[j][0],
                "title": items[j][1],
                "timestamp": 10_000 * u + t + 1,
            }))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_config_file(path, workdir, reviews=None, **overrides):
    cfg = {
        "workdir": str(workdir),
        "dataset": {"sample_size": 10_000, "sample_seed": 1021},
        "embedding": {"source": "stub", "dim": 16},
        "gateway": {"backend": "mock"},
        "strategy": {"name": "got", "n_items": 5, "seed": 0},
        "evaluation": {"cutoffs": [5, 10, 20], "ground_k": 10},
    }
    if reviews is not None:
        cfg["dataset"]["reviews"] = str(reviews)
    for section, values in overrides.items():
        cfg.setdefault(section, {}).update(values)
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


@pytest.fixture
def make_reviews(tmp_path):
    def _make(name="reviews.jsonl", **kwargs):
        return write_reviews_file(tmp_path / name, **kwargs)
    return _make


@pytest.fixture
def make_config(tmp_path):
    def _make(name="config.yaml", workdir=None, **kwargs):
        return write_config_file(tmp_path / name,
                                 workdir or tmp_path / "work", **kwargs)
    return _make
