"""Ranking and novelty metrics over grounded recommendation lists.

Hit rate and NDCG use the single-relevant-item leave-one-out form. The
novelty pair is computed over relevant hits in the top 10: expected free
discovery averages -log2 of an item's share of training interactions, and
expected popularity complement averages the probability the item was unseen
(1 - interacting-user share). Users without a hit are excluded from both
novelty means. Items missing from the training counts are smoothed with a
pseudo-count of 0.5.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .retrieval import ItemIndex, ground_titles

DEFAULT_CUTOFFS = (5, 10, 20)
NOVELTY_CUTOFF = 10
ZERO_COUNT_SMOOTHING = 0.5


class EvaluationError(Exception):
    """Empty run directory or inconsistent metric inputs."""


@dataclass
class RankedList:
    user: str
    item_ids: list[str]

    def __post_init__(self) -> None:
        if not self.item_ids:
            raise EvaluationError(f"empty ranked list for user {self.user}")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise EvaluationError(f"duplicate items in ranked list for {self.user}")


@dataclass
class MetricsReport:
    hr: dict[int, float] = field(default_factory=dict)
    ndcg: dict[int, float] = field(default_factory=dict)
    efd_at_10: Optional[float] = None
    epc_at_10: Optional[float] = None
    user_count: int = 0
    failed_runs: int = 0
    novelty_user_count: int = 0


def ground(final_titles: Sequence[str], index: ItemIndex,
           embed: Callable[[str], "object"], user: str, k: int = 10) -> RankedList:
    """Ground a final recommendation set to catalog ids, best rank kept."""
    return RankedList(user=user, item_ids=ground_titles(index, embed,
                                                        final_titles, k))


def hr_at_k(ranked: RankedList, test_item: str, k: int) -> float:
    return 1.0 if test_item in ranked.item_ids[:k] else 0.0


def ndcg_at_k(ranked: RankedList, test_item: str, k: int) -> float:
    """1/log2(rank+1) inside the cutoff, else 0; ideal DCG is 1."""
    try:
        rank = ranked.item_ids.index(test_item) + 1
    except ValueError:
        return 0.0
    if rank > k:
        return 0.0
    return 1.0 / math.log2(rank + 1)


def _item_probability(item: str, popularity: Mapping[str, int],
                      total: float) -> float:
    count = popularity.get(item, 0) or ZERO_COUNT_SMOOTHING
    return count / total


def efd_at_10(ranked: RankedList, test_item: str,
              popularity: Mapping[str, int]) -> Optional[float]:
    """-log2 of the hit's collection frequency; None when there is no hit."""
    if test_item not in ranked.item_ids[:NOVELTY_CUTOFF]:
        return None
    total = float(sum(popularity.values()))
    if total <= 0:
        raise EvaluationError("popularity table is empty")
    return -math.log2(_item_probability(test_item, popularity, total))


def epc_at_10(ranked: RankedList, test_item: str,
              popularity: Mapping[str, int], user_count: int) -> Optional[float]:
    """1 - share of users who interacted with the hit; None when no hit."""
    if test_item not in ranked.item_ids[:NOVELTY_CUTOFF]:
        return None
    if user_count <= 0:
        raise EvaluationError("user_count must be positive")
    count = popularity.get(test_item, 0) or ZERO_COUNT_SMOOTHING
    return 1.0 - count / user_count


def evaluate(ranked_lists: Sequence[RankedList], test_items: Mapping[str, str],
             popularity: Mapping[str, int], user_count: int,
             cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
             failed_runs: int = 0) -> MetricsReport:
    """Mean metrics over users; order of the input lists does not matter."""
    if not ranked_lists:
        raise EvaluationError("no ranked lists to evaluate")
    report = MetricsReport(user_count=len(ranked_lists), failed_runs=failed_runs)
    for k in cutoffs:
        report.hr[k] = sum(hr_at_k(r, test_items[r.user], k)
                           for r in ranked_lists) / len(ranked_lists)
        report.ndcg[k] = sum(ndcg_at_k(r, test_items[r.user], k)
                             for r in ranked_lists) / len(ranked_lists)
    efd_values = []
    epc_values = []
    for r in ranked_lists:
        efd = efd_at_10(r, test_items[r.user], popularity)
        if efd is not None:
            efd_values.append(efd)
            epc = epc_at_10(r, test_items[r.user], popularity, user_count)
            epc_values.append(epc)
    report.novelty_user_count = len(efd_values)
    if efd_values:
        report.efd_at_10 = sum(efd_values) / len(efd_values)
        report.epc_at_10 = sum(epc_values) / len(epc_values)
    return report


def average_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Average per-metric means across repeated sampling runs."""
    if not reports:
        raise EvaluationError("no reports to average")
    merged = MetricsReport(
        user_count=sum(r.user_count for r in reports),
        failed_runs=sum(r.failed_runs for r in reports),
        novelty_user_count=sum(r.novelty_user_count for r in reports),
    )
    for k in reports[0].hr:
        merged.hr[k] = sum(r.hr[k] for r in reports) / len(reports)
        merged.ndcg[k] = sum(r.ndcg[k] for r in reports) / len(reports)
    efd = [r.efd_at_10 for r in reports if r.efd_at_10 is not None]
    epc = [r.epc_at_10 for r in reports if r.epc_at_10 is not None]
    if efd:
        merged.efd_at_10 = sum(efd) / len(efd)
        merged.epc_at_10 = sum(epc) / len(epc)
    return merged


def popularity_report(ranked_lists: Sequence[RankedList],
                      popularity: Mapping[str, int]) -> list[dict]:
    """Per-item recommendation frequency vs training frequency, sorted by
    descending training frequency then item id."""
    rec_counts: Counter = Counter()
    for r in ranked_lists:
        for item in r.item_ids:
            rec_counts[item] += 1
    items = set(popularity) | set(rec_counts)
    rows = [{"item": item,
             "train_frequency": int(popularity.get(item, 0)),
             "recommended_frequency": int(rec_counts.get(item, 0))}
            for item in items]
    rows.sort(key=lambda r: (-r["train_frequency"], r["item"]))
    return rows


def report_to_json(report: MetricsReport) -> str:
    payload = {
        "hr": {str(k): v for k, v in sorted(report.hr.items())},
        "ndcg": {str(k): v for k, v in sorted(report.ndcg.items())},
        "efd_at_10": report.efd_at_10,
        "epc_at_10": report.epc_at_10,
        "user_count": report.user_count,
        "failed_runs": report.failed_runs,
        "novelty_user_count": report.novelty_user_count,
    }
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def report_table(report: MetricsReport) -> str:
    """Fixed-width console table, one metric per row."""
    lines = [f"{'Metric':<10} {'Value':>10}"]
    for k in sorted(report.hr):
        lines.append(f"{f'HR@{k}':<10} {report.hr[k]:>10.4f}")
    for k in sorted(report.ndcg):
        lines.append(f"{f'NDCG@{k}':<10} {report.ndcg[k]:>10.4f}")
    if report.efd_at_10 is not None:
        lines.append(f"{'EFD@10':<10} {report.efd_at_10:>10.4f}")
        lines.append(f"{'EPC@10':<10} {report.epc_at_10:>10.4f}")
    lines.append(f"{'users':<10} {report.user_count:>10d}")
    lines.append(f"{'failed':<10} {report.failed_runs:>10d}")
    return "\n".join(lines)


def save_popularity_report(rows: Sequence[dict], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
