"""Reasoning strategies executed on the thought graph.

The main pipeline runs up to three branches over a user's history — recent
interactions, the full sequence, and retrieved similar users — then merges
their candidate sets with a final LLM vote. Chain, sampled-chain, and tree
baselines build their graphs through the same vertex operations so latency
and volume are directly comparable.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import gateway, prompts
from .gateway import Backend, GenerationParams, ParseError, PromptCall
from .graph import ThoughtGraph
from .prompts import PromptTemplate
from .retrieval import SequenceIndex

log = logging.getLogger(__name__)

BRANCHES = ("short", "long", "collab")


class StrategyError(Exception):
    """Run-level failure: every branch degraded or bad configuration."""


class BranchDegraded(Exception):
    """A branch produced nothing parseable and is excluded from the run."""


@dataclass
class StrategyConfig:
    n_items: int = 20           # items per recommendation set
    s_short: int = 3            # most recent interactions for the short branch
    repetitions: int = 3        # generations per category / collab branch
    categories: int = 3         # category count requested from summaries
    collab_k: int = 3           # similar sequences retrieved
    enabled_branches: tuple[str, ...] = BRANCHES
    strategy: str = "got"       # got | cot | cot_sc | tot
    cot_sc_k: int = 3
    tot_breadth: int = 2
    tot_depth: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_items < 1 or self.repetitions < 1:
            raise StrategyError("n_items and repetitions must be >= 1")
        unknown = set(self.enabled_branches) - set(BRANCHES)
        if unknown:
            raise StrategyError(f"unknown branches: {sorted(unknown)}")
        if self.strategy == "got" and not self.enabled_branches:
            raise StrategyError("at least one branch must be enabled")


@dataclass
class RecommendationSet:
    branch: str
    titles: list[str]
    provenance: int  # producing thought id


@dataclass
class RunRecord:
    user: str
    strategy: str
    final: Optional[RecommendationSet]
    branch_sets: dict[str, RecommendationSet]
    graph: ThoughtGraph
    latency: int
    volume: int
    llm_calls: int
    wall_clock: float
    failed: bool = False
    failure_reason: str = ""


def _norm(title: str) -> str:
    return prompts.normalize_title(title).lower()


class StrategyEngine:
    """Executes reasoning strategies against one backend and template set."""

    def __init__(self, backend: Backend, templates: dict[str, PromptTemplate],
                 params: Optional[GenerationParams] = None,
                 config: Optional[StrategyConfig] = None):
        self.backend = backend
        self.templates = templates
        self.params = params or GenerationParams()
        self.config = config or StrategyConfig()
        self.llm_calls = 0

    # ---- low-level helpers -------------------------------------------------

    def _complete(self, template: str, binding: dict[str, str]) -> str:
        text = prompts.render(self.templates[template], binding)
        call = PromptCall(text=text, template=template, bindings=binding)
        self.llm_calls += 1
        return gateway.complete(self.backend, call, self.params, self.config.seed)

    def _complete_parsed(self, template: str, binding: dict[str, str], parser):
        """One call plus a single automatic re-prompt on parse failure."""
        reply = self._complete(template, binding)
        try:
            return reply, parser(reply)
        except ParseError as exc:
            log.warning("parse failure on %s (%s); re-prompting once", template, exc)
        reply = self._complete(template, binding)
        return reply, parser(reply)

    def _vote(self, graph: ThoughtGraph, parent_ids: Sequence[int], branch: str,
              n: int) -> int:
        """Aggregate parent item lists through the voting prompt.

        Titles the vote invents are discarded; short results are backfilled
        round-robin over parent lists in rank order, so the output is always
        a subset of the candidate union.
        """
        parent_lists = [graph.vertices[p].items or [] for p in parent_ids]
        candidate_union = {_norm(t): t for lst in parent_lists for t in lst}
        binding = {
            "candidates": prompts.candidate_lists_to_text(parent_lists),
            "N": str(n),
        }
        try:
            reply, voted = self._complete_parsed(
                "vote", binding, lambda r: gateway.parse_item_list(r, n))
        except ParseError:
            reply, voted = "", []
        kept: list[str] = []
        seen: set[str] = set()
        for title in voted:
            key = _norm(title)
            if key in candidate_union and key not in seen:
                seen.add(key)
                kept.append(candidate_union[key])
        # Backfill: rank position major, parent order minor.
        if len(kept) < n:
            max_len = max((len(lst) for lst in parent_lists), default=0)
            for rank in range(max_len):
                for lst in parent_lists:
                    if rank < len(lst):
                        key = _norm(lst[rank])
                        if key not in seen:
                            seen.add(key)
                            kept.append(lst[rank])
                            if len(kept) == n:
                                break
                if len(kept) == n:
                    break
        if not kept:
            raise BranchDegraded("vote produced no usable titles")
        if len(parent_ids) >= 2:
            return graph.aggregate(parent_ids, reply, kind="vote-result",
                                   branch=branch, items=kept, prompt_used="vote")
        # Single candidate set: a re-vote is a fanout-1 generation.
        return graph.generate(parent_ids[0], [reply], kind="vote-result",
                              branch=branch, items_per_child=[kept],
                              prompt_used="vote")[0]

    def _lenient_categories(self, reply: str) -> list[str]:
        try:
            return gateway.parse_categories(reply)
        except ParseError:
            pass
        # Degrade to whatever list entries are present.
        try:
            return gateway.parse_item_list(reply, self.config.categories)
        except ParseError:
            return []

    # ---- branch pipelines --------------------------------------------------

    def _summarize_branch(self, graph: ThoughtGraph, branch: str,
                          template: str, titles: Sequence[str]) -> int:
        """Shared short/long pipeline: summarize, recommend per category, vote."""
        cfg = self.config
        root = graph.add_root(prompts.sequence_to_text(titles), kind="raw",
                              branch=branch)
        binding = {"sequence": prompts.history_slot_value(titles)}
        try:
            reply, categories = self._complete_parsed(
                template, binding, gateway.parse_categories)
        except ParseError:
            reply = self._complete(template, binding)
            categories = self._lenient_categories(reply)
        if not categories:
            raise BranchDegraded(f"{branch}: no categories parsed")
        summary = graph.generate(root, [reply], kind="summary", branch=branch,
                                 prompt_used=template)[0]

        category_votes: list[int] = []
        for category in categories[:cfg.categories]:
            rep_ids: list[int] = []
            for _ in range(cfg.repetitions):
                rec_binding = {
                    "preferences": reply,
                    "category": category,
                    "N": str(cfg.n_items),
                }
                try:
                    rec_reply, items = self._complete_parsed(
                        "recommend-category", rec_binding,
                        lambda r: gateway.parse_item_list(r, cfg.n_items))
                except ParseError:
                    log.warning("%s: degraded recommendation for %r", branch, category)
                    continue
                rep_ids.extend(graph.generate(
                    summary, [rec_reply], kind="item-list", branch=branch,
                    items_per_child=[items], prompt_used="recommend-category"))
            if not rep_ids:
                continue
            category_votes.append(self._vote(graph, rep_ids, branch, cfg.n_items))
        if not category_votes:
            raise BranchDegraded(f"{branch}: every category degraded")
        return self._vote(graph, category_votes, branch, cfg.n_items)

    def short_term_branch(self, graph: ThoughtGraph,
                          sequence_titles: Sequence[str]) -> int:
        recent = list(sequence_titles[-self.config.s_short:])
        return self._summarize_branch(graph, "short", "summarize-short", recent)

    def long_term_branch(self, graph: ThoughtGraph,
                         sequence_titles: Sequence[str]) -> int:
        return self._summarize_branch(graph, "long", "summarize-long",
                                      list(sequence_titles))

    def collab_branch(self, graph: ThoughtGraph, user: str,
                      sequence_titles: Sequence[str],
                      sequence_index: SequenceIndex, query_vector,
                      neighbor_titles: dict[str, list[str]]) -> int:
        """Recommend from similar users' sequences, constrained to their items."""
        cfg = self.config
        neighbors = sequence_index.retrieve_similar_sequences(
            query_vector, cfg.collab_k, exclude_user=user)
        if not neighbors:
            raise BranchDegraded("collab: no other user sequences available")
        blocks = []
        allowed: dict[str, str] = {}
        for neighbor_id, _ in neighbors:
            titles = neighbor_titles[neighbor_id]
            blocks.append(prompts.sequence_to_text(titles))
            for t in titles:
                allowed.setdefault(_norm(t), t)
        neighbors_text = "\n\n".join(
            f"User {i}:\n{block}" for i, block in enumerate(blocks, 1))
        root = graph.add_root(neighbors_text, kind="raw", branch="collab")
        binding = {
            "sequence": prompts.history_slot_value(list(sequence_titles)),
            "neighbors": neighbors_text,
            "N": str(cfg.n_items),
        }
        rep_ids: list[int] = []
        for _ in range(cfg.repetitions):
            try:
                reply, items = self._complete_parsed(
                    "collaborate", binding,
                    lambda r: gateway.parse_item_list(r, cfg.n_items))
            except ParseError:
                log.warning("collab: degraded generation for user %s", user)
                continue
            # Constraint: only items actually present in the neighbor sequences.
            kept, seen = [], set()
            for t in items:
                key = _norm(t)
                if key in allowed and key not in seen:
                    seen.add(key)
                    kept.append(allowed[key])
            if not kept:
                continue
            rep_ids.extend(graph.generate(
                root, [reply], kind="item-list", branch="collab",
                items_per_child=[kept], prompt_used="collaborate"))
        if not rep_ids:
            raise BranchDegraded("collab: every generation degraded")
        return self._vote(graph, rep_ids, "collab", cfg.n_items)

    # ---- full strategies ---------------------------------------------------

    def run_got(self, user: str, sequence_titles: Sequence[str],
                sequence_index: Optional[SequenceIndex] = None,
                query_vector=None,
                neighbor_titles: Optional[dict[str, list[str]]] = None) -> RunRecord:
        cfg = self.config
        start = time.monotonic()
        calls_before = self.llm_calls
        graph = ThoughtGraph()
        branch_votes: dict[str, int] = {}
        for branch in cfg.enabled_branches:
            try:
                if branch == "short":
                    branch_votes[branch] = self.short_term_branch(graph, sequence_titles)
                elif branch == "long":
                    branch_votes[branch] = self.long_term_branch(graph, sequence_titles)
                elif branch == "collab":
                    if sequence_index is None or query_vector is None \
                            or neighbor_titles is None:
                        raise BranchDegraded("collab: no sequence index supplied")
                    branch_votes[branch] = self.collab_branch(
                        graph, user, sequence_titles, sequence_index,
                        query_vector, neighbor_titles)
            except BranchDegraded as exc:
                log.warning("user %s: branch %s degraded: %s", user, branch, exc)
        if not branch_votes:
            return self._failed_record(user, "got", graph, start, calls_before,
                                       "all branches degraded")
        try:
            final_id = self._vote(graph, list(branch_votes.values()), "final",
                                  cfg.n_items)
        except BranchDegraded as exc:
            return self._failed_record(user, "got", graph, start, calls_before,
                                       str(exc))
        graph.final = final_id
        return self._record(user, "got", graph, final_id, branch_votes,
                            start, calls_before)

    def run_cot(self, user: str, sequence_titles: Sequence[str]) -> RunRecord:
        """Single summarize-then-recommend chain."""
        start = time.monotonic()
        calls_before = self.llm_calls
        graph = ThoughtGraph()
        root = graph.add_root(prompts.sequence_to_text(list(sequence_titles)))
        try:
            leaf = self._cot_chain(graph, root, list(sequence_titles))
        except BranchDegraded as exc:
            return self._failed_record(user, "cot", graph, start, calls_before,
                                       str(exc))
        graph.final = leaf
        return self._record(user, "cot", graph, leaf, {}, start, calls_before)

    def run_cot_sc(self, user: str, sequence_titles: Sequence[str],
                   k: Optional[int] = None) -> RunRecord:
        """k independent chains merged by one vote."""
        k = k or self.config.cot_sc_k
        start = time.monotonic()
        calls_before = self.llm_calls
        graph = ThoughtGraph()
        root = graph.add_root(prompts.sequence_to_text(list(sequence_titles)))
        leaves = []
        for _ in range(k):
            try:
                leaves.append(self._cot_chain(graph, root, list(sequence_titles)))
            except BranchDegraded:
                continue
        if not leaves:
            return self._failed_record(user, "cot_sc", graph, start, calls_before,
                                       "all chains degraded")
        final_id = self._vote(graph, leaves, "final", self.config.n_items)
        graph.final = final_id
        return self._record(user, "cot_sc", graph, final_id, {}, start, calls_before)

    def run_tot(self, user: str, sequence_titles: Sequence[str],
                breadth: Optional[int] = None,
                depth: Optional[int] = None) -> RunRecord:
        """Breadth-b, depth-d category-refinement tree with per-level voting."""
        b = breadth or self.config.tot_breadth
        d = depth or self.config.tot_depth
        start = time.monotonic()
        calls_before = self.llm_calls
        graph = ThoughtGraph()
        root = graph.add_root(prompts.sequence_to_text(list(sequence_titles)))
        try:
            vote_ids = self._tot_subtree(graph, root,
                                         prompts.history_slot_value(sequence_titles),
                                         b, d)
            final_id = vote_ids[0] if len(vote_ids) == 1 else \
                self._vote(graph, vote_ids, "final", self.config.n_items)
        except BranchDegraded as exc:
            return self._failed_record(user, "tot", graph, start, calls_before,
                                       str(exc))
        graph.final = final_id
        return self._record(user, "tot", graph, final_id, {}, start, calls_before)

    def run(self, user: str, sequence_titles: Sequence[str], **collab_kwargs) -> RunRecord:
        name = self.config.strategy
        if name == "got":
            return self.run_got(user, sequence_titles, **collab_kwargs)
        if name == "cot":
            return self.run_cot(user, sequence_titles)
        if name == "cot_sc":
            return self.run_cot_sc(user, sequence_titles)
        if name == "tot":
            return self.run_tot(user, sequence_titles)
        raise StrategyError(f"unknown strategy: {name!r}")

    # ---- internals ---------------------------------------------------------

    def _cot_chain(self, graph: ThoughtGraph, root: int,
                   titles: list[str]) -> int:
        binding = {"sequence": prompts.history_slot_value(titles)}
        try:
            reply, categories = self._complete_parsed(
                "summarize-long", binding, gateway.parse_categories)
        except ParseError as exc:
            raise BranchDegraded(f"cot summary unparseable: {exc}") from exc
        summary = graph.generate(root, [reply], kind="summary",
                                 prompt_used="summarize-long")[0]
        rec_binding = {
            "preferences": reply,
            "category": categories[0],
            "N": str(self.config.n_items),
        }
        try:
            rec_reply, items = self._complete_parsed(
                "recommend-category", rec_binding,
                lambda r: gateway.parse_item_list(r, self.config.n_items))
        except ParseError as exc:
            raise BranchDegraded(f"cot recommendation unparseable: {exc}") from exc
        return graph.generate(summary, [rec_reply], kind="item-list",
                              items_per_child=[items],
                              prompt_used="recommend-category")[0]

    def _tot_subtree(self, graph: ThoughtGraph, node: int, context: str,
                     breadth: int, depth: int) -> list[int]:
        """Expand one node; returns the vote vertices summarizing its leaves."""
        cfg = self.config
        if depth == 1:
            # Leaves recommend items for this node's category context.
            leaves = []
            binding = {"preferences": context, "category": context[:200],
                       "N": str(cfg.n_items)}
            for _ in range(breadth):
                try:
                    reply, items = self._complete_parsed(
                        "recommend-category", binding,
                        lambda r: gateway.parse_item_list(r, cfg.n_items))
                except ParseError:
                    continue
                leaves.extend(graph.generate(
                    node, [reply], kind="item-list", items_per_child=[items],
                    prompt_used="recommend-category"))
            if not leaves:
                raise BranchDegraded("tot: every leaf degraded")
            if len(leaves) == 1:
                return leaves
            return [self._vote(graph, leaves, "final", cfg.n_items)]
        binding = {"sequence": context}
        try:
            reply, categories = self._complete_parsed(
                "summarize-short", binding, gateway.parse_categories)
        except ParseError as exc:
            raise BranchDegraded(f"tot refinement unparseable: {exc}") from exc
        children = graph.generate(node, categories[:breadth], kind="category-list",
                                  prompt_used="summarize-short")
        votes: list[int] = []
        for child in children:
            votes.extend(self._tot_subtree(
                graph, child, graph.vertices[child].content, breadth, depth - 1))
        if len(votes) == 1:
            return votes
        return [self._vote(graph, votes, "final", cfg.n_items)]

    def _record(self, user: str, strategy: str, graph: ThoughtGraph,
                final_id: int, branch_votes: dict[str, int], start: float,
                calls_before: int) -> RunRecord:
        final_thought = graph.vertices[final_id]
        branch_sets = {
            name: RecommendationSet(branch=name,
                                    titles=list(graph.vertices[vid].items or []),
                                    provenance=vid)
            for name, vid in branch_votes.items()
        }
        return RunRecord(
            user=user,
            strategy=strategy,
            final=RecommendationSet(branch="final",
                                    titles=list(final_thought.items or []),
                                    provenance=final_id),
            branch_sets=branch_sets,
            graph=graph,
            latency=graph.latency(final_id),
            volume=graph.volume(final_id),
            llm_calls=self.llm_calls - calls_before,
            wall_clock=time.monotonic() - start,
        )

    def _failed_record(self, user: str, strategy: str, graph: ThoughtGraph,
                       start: float, calls_before: int, reason: str) -> RunRecord:
        return RunRecord(
            user=user, strategy=strategy, final=None, branch_sets={},
            graph=graph, latency=0, volume=0,
            llm_calls=self.llm_calls - calls_before,
            wall_clock=time.monotonic() - start,
            failed=True, failure_reason=reason,
        )


# ---- run record persistence ------------------------------------------------

def save_run_record(record: RunRecord, path: Path) -> None:
    """Serialize one run to a JSON file.

    Wall-clock time is deliberately omitted so reruns over identical inputs
    produce byte-identical files; it stays available on the in-memory record.
    """
    payload = {
        "user": record.user,
        "strategy": record.strategy,
        "failed": record.failed,
        "failure_reason": record.failure_reason,
        "final": record.final.titles if record.final else None,
        "branches": {name: rs.titles for name, rs in sorted(record.branch_sets.items())},
        "latency": record.latency,
        "volume": record.volume,
        "llm_calls": record.llm_calls,
        "graph": record.graph.export_lines(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_run_payload(path: Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
