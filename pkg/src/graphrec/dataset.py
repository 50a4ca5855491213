"""Interaction ingestion, corpus filtering, user sampling, leave-one-out split.

Input is line-delimited JSON review records with a configurable field
mapping. Filtering is single-pass: items with fewer than five interactions
are dropped first, then users whose remaining sequence length falls outside
the configured bounds. Timestamp ties within a user are broken by ascending
item id so every downstream artifact is deterministic.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .prompts import normalize_title

log = logging.getLogger(__name__)

DEFAULT_FIELD_MAP = {
    "user": "user_id",
    "item": "item_id",
    "title": "title",
    "timestamp": "timestamp",
}

# Canonical seed presets for repeated-sampling experiment protocols.
SAMPLE_SEED_PRESETS = (1021, 2063, 4127)


class DatasetError(Exception):
    """Unreadable input, empty corpus, or violated split precondition."""


@dataclass(frozen=True, order=True)
class Interaction:
    user: str
    item: str
    title: str
    timestamp: int

    def __post_init__(self) -> None:
        if self.timestamp <= 0:
            raise DatasetError(f"timestamp must be positive: {self.timestamp}")
        if not self.title:
            raise DatasetError("title must be non-empty after normalization")


@dataclass
class UserSequence:
    """One user's interactions, ascending by (timestamp, item id)."""

    user: str
    interactions: list[Interaction]

    def titles(self) -> list[str]:
        return [i.title for i in self.interactions]


@dataclass
class UserSplit:
    user: str
    train: list[Interaction]
    validation: Interaction
    test: Interaction

    def input_interactions(self) -> list[Interaction]:
        """Train plus validation, the model input at test time."""
        return self.train + [self.validation]


@dataclass
class SplitDataset:
    users: dict[str, UserSplit] = field(default_factory=dict)


@dataclass
class IngestResult:
    interactions: list[Interaction]
    skipped: int


def _sort_key(i: Interaction) -> tuple[int, str]:
    return (i.timestamp, i.item)


def ingest(path: Path, field_map: Mapping[str, str] | None = None) -> IngestResult:
    """Read line-delimited review records; malformed lines are counted and skipped."""
    path = Path(path)
    fields = dict(DEFAULT_FIELD_MAP)
    if field_map:
        fields.update(field_map)
    try:
        raw_lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read input file {path}: {exc}") from exc

    interactions: list[Interaction] = []
    seen: set[tuple[str, str, int]] = set()
    skipped = 0
    for line in raw_lines:
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            user = str(rec[fields["user"]])
            item = str(rec[fields["item"]])
            title = normalize_title(str(rec[fields["title"]]))
            timestamp = int(rec[fields["timestamp"]])
            interaction = Interaction(user=user, item=item, title=title,
                                      timestamp=timestamp)
        except (json.JSONDecodeError, KeyError, ValueError, TypeError, DatasetError):
            skipped += 1
            continue
        key = (user, item, timestamp)
        if key in seen:
            continue
        seen.add(key)
        interactions.append(interaction)
    if skipped:
        log.warning("skipped %d malformed lines in %s", skipped, path)
    if not interactions:
        raise DatasetError(f"no valid records in {path}")
    return IngestResult(interactions=interactions, skipped=skipped)


def filter_corpus(interactions: Sequence[Interaction], min_item_freq: int = 5,
                  min_user_len: int = 6, max_user_len: int = 20) -> list[Interaction]:
    """Single pass: drop rare items first, then users outside the length bounds."""
    item_counts = Counter(i.item for i in interactions)
    kept_items = [i for i in interactions if item_counts[i.item] >= min_item_freq]
    user_counts = Counter(i.user for i in kept_items)
    result = [i for i in kept_items
              if min_user_len <= user_counts[i.user] <= max_user_len]
    if not result:
        raise DatasetError("filtering removed every interaction")
    return result


def build_sequences(interactions: Sequence[Interaction]) -> dict[str, UserSequence]:
    by_user: dict[str, list[Interaction]] = {}
    for i in interactions:
        by_user.setdefault(i.user, []).append(i)
    return {
        user: UserSequence(user=user, interactions=sorted(items, key=_sort_key))
        for user, items in sorted(by_user.items())
    }


def sample_users(interactions: Sequence[Interaction], n: int = 3000,
                 seed: int = SAMPLE_SEED_PRESETS[0]) -> set[str]:
    """Uniform sample of user ids without replacement, reproducible from seed."""
    users = sorted({i.user for i in interactions})
    if n >= len(users):
        if n > len(users):
            log.warning("requested %d users but corpus has %d; taking all",
                        n, len(users))
        return set(users)
    rng = random.Random(seed)
    return set(rng.sample(users, n))


def split(interactions: Sequence[Interaction]) -> SplitDataset:
    """Leave-one-out: last interaction is test, second-to-last validation."""
    dataset = SplitDataset()
    for user, seq in build_sequences(interactions).items():
        if len(seq.interactions) < 3:
            raise DatasetError(
                f"user {user} has {len(seq.interactions)} interactions; "
                "split requires >= 3 (filter bug)")
        dataset.users[user] = UserSplit(
            user=user,
            train=seq.interactions[:-2],
            validation=seq.interactions[-2],
            test=seq.interactions[-1],
        )
    return dataset


def corpus_stats(interactions: Sequence[Interaction]) -> dict[str, int]:
    return {
        "users": len({i.user for i in interactions}),
        "items": len({i.item for i in interactions}),
        "actions": len(interactions),
    }


def train_popularity(dataset: SplitDataset) -> Counter:
    """Per-item interaction counts over the training segments."""
    counts: Counter = Counter()
    for user_split in dataset.users.values():
        for i in user_split.train:
            counts[i.item] += 1
    return counts


def _interaction_to_json(i: Interaction) -> dict:
    return {"user": i.user, "item": i.item, "title": i.title,
            "timestamp": i.timestamp}


def save_manifest(dataset: SplitDataset, path: Path) -> None:
    """Write the split manifest: one JSON record per user, sorted by user id."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for user in sorted(dataset.users):
            s = dataset.users[user]
            fh.write(json.dumps({
                "user": user,
                "train": [_interaction_to_json(i) for i in s.train],
                "validation": _interaction_to_json(s.validation),
                "test": _interaction_to_json(s.test),
            }, sort_keys=True) + "\n")


def load_manifest(path: Path) -> SplitDataset:
    path = Path(path)
    dataset = SplitDataset()
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            dataset.users[rec["user"]] = UserSplit(
                user=rec["user"],
                train=[Interaction(**i) for i in rec["train"]],
                validation=Interaction(**rec["validation"]),
                test=Interaction(**rec["test"]),
            )
    if not dataset.users:
        raise DatasetError(f"empty split manifest: {path}")
    return dataset


def all_interactions(dataset: SplitDataset) -> Iterable[Interaction]:
    for s in dataset.users.values():
        yield from s.train
        yield s.validation
        yield s.test
