import random
from collections import Counter

import numpy as np
import pytest

from graphrec.embedder import StubEmbedder
from graphrec.gateway import ScriptedMockBackend
from graphrec.graph import ThoughtGraph
from graphrec.mockllm import DeterministicMockBackend
from graphrec.prompts import load_templates
from graphrec.retrieval import EmbeddingMatrix, SequenceIndex
from graphrec.strategies import (BranchDegraded, StrategyConfig,
                                 StrategyEngine, StrategyError,
                                 load_run_payload, save_run_record)

TEMPLATES = load_templates()

SEQUENCE = ["greek yogurt", "granola bars", "dried apricots",
            "trail mix", "fruit nut mix"]


def make_engine(config=None, backend=None):
    return StrategyEngine(backend or DeterministicMockBackend(), TEMPLATES,
                          config=config or StrategyConfig(n_items=5))


def make_collab_context(n_users=6, dim=16):
    emb = StubEmbedder(dim)
    titles = {"u0": SEQUENCE}
    for i in range(1, n_users):
        titles[f"u{i}"] = [f"product {i}-{j}" for j in range(5)]
    ids = sorted(titles)
    vectors = np.stack([emb.embed_many(titles[u]).mean(axis=0) for u in ids])
    index = SequenceIndex(EmbeddingMatrix(ids=ids, vectors=vectors))
    by_user = {u: vectors[n] for n, u in enumerate(ids)}
    return index, by_user, titles


class TestBranchShapes:
    def test_short_branch_vertex_count(self):
        engine = make_engine()
        graph = ThoughtGraph()
        engine.short_term_branch(graph, SEQUENCE)
        # 1 summary + 3x3 generations + 3 category votes + 1 branch vote,
        # plus the branch root.
        assert len(graph.vertices) == 14 + 1
        kinds = Counter(t.kind for t in graph.vertices.values())
        assert kinds == Counter({"item-list": 9, "vote-result": 4,
                                 "summary": 1, "raw": 1})

    def test_long_branch_vertex_count(self):
        engine = make_engine()
        graph = ThoughtGraph()
        engine.long_term_branch(graph, SEQUENCE)
        assert len(graph.vertices) == 15

    def test_short_uses_recent_slice(self):
        engine = make_engine(StrategyConfig(n_items=5, s_short=2))
        graph = ThoughtGraph()
        engine.short_term_branch(graph, SEQUENCE)
        root = graph.vertices[graph.roots()[0]]
        assert "trail mix" in root.content
        assert "greek yogurt" not in root.content

    def test_short_equals_long_when_sequence_fits(self):
        # With a history no longer than the short window, both branches see
        # the same items; the binding-keyed mock then yields identical sets.
        short_seq = SEQUENCE[:3]
        engine = make_engine(StrategyConfig(n_items=5, s_short=5))
        g1, g2 = ThoughtGraph(), ThoughtGraph()
        short_vote = engine.short_term_branch(g1, short_seq)
        long_vote = engine.long_term_branch(g2, short_seq)
        assert g1.vertices[short_vote].items == g2.vertices[long_vote].items

    def test_collab_branch_vertex_count(self):
        index, vecs, titles = make_collab_context()
        engine = make_engine()
        graph = ThoughtGraph()
        engine.collab_branch(graph, "u0", SEQUENCE, index, vecs["u0"], titles)
        # 3 generations + 1 vote, plus the branch root.
        assert len(graph.vertices) == 4 + 1

    def test_collab_duplicate_neighbor_constrains_output(self):
        index, vecs, titles = make_collab_context()
        titles = dict(titles)
        titles["twin"] = list(SEQUENCE)
        emb = StubEmbedder(16)
        ids = sorted(titles)
        vectors = np.stack([emb.embed_many(titles[u]).mean(axis=0) for u in ids])
        index = SequenceIndex(EmbeddingMatrix(ids=ids, vectors=vectors))
        engine = make_engine(StrategyConfig(n_items=5, collab_k=1))
        graph = ThoughtGraph()
        vote = engine.collab_branch(graph, "u0", SEQUENCE, index,
                                    vectors[ids.index("u0")], titles)
        # The identical twin sequence is nearest, so all recommendations
        # must come from it.
        assert set(graph.vertices[vote].items) <= set(SEQUENCE)

    def test_collab_drops_titles_outside_neighbor_pool(self):
        index, vecs, titles = make_collab_context(n_users=2)
        scripted = ScriptedMockBackend(
            {}, fallback=lambda c: "1. product 1-0\n2. Invented Novelty\n"
                                   "3. product 1-1")
        engine = make_engine(StrategyConfig(n_items=3, collab_k=1),
                             backend=scripted)
        graph = ThoughtGraph()
        vote = engine.collab_branch(graph, "u0", SEQUENCE, index, vecs["u0"],
                                    titles)
        assert "Invented Novelty" not in graph.vertices[vote].items

    def test_collab_without_other_users_degrades(self):
        emb = StubEmbedder(16)
        vec = emb.embed_many(SEQUENCE).mean(axis=0)
        index = SequenceIndex(EmbeddingMatrix(ids=["u0"],
                                              vectors=vec[None, :]))
        engine = make_engine()
        with pytest.raises(BranchDegraded):
            engine.collab_branch(ThoughtGraph(), "u0", SEQUENCE, index, vec,
                                 {"u0": SEQUENCE})


class TestRunGot:
    def run_default(self, config=None):
        index, vecs, titles = make_collab_context()
        engine = make_engine(config)
        return engine.run_got("u0", SEQUENCE, sequence_index=index,
                              query_vector=vecs["u0"], neighbor_titles=titles)

    def test_default_shape(self):
        record = self.run_default()
        assert not record.failed
        assert len(record.graph.vertices) == 14 + 14 + 4 + 1 + 3  # + roots
        final = record.graph.final
        assert len(record.graph.parents(final)) == 3

    def test_final_items_match_record(self):
        record = self.run_default()
        assert record.graph.vertices[record.graph.final].items == \
            record.final.titles

    def test_latency_volume_consistency(self):
        record = self.run_default()
        assert record.latency == record.graph.latency(record.graph.final)
        assert record.volume == record.graph.volume(record.graph.final)

    @pytest.mark.parametrize("disabled", ["short", "long", "collab"])
    def test_ablation_removes_exactly_one_branch(self, disabled):
        full = self.run_default()
        enabled = tuple(b for b in ("short", "long", "collab") if b != disabled)
        ablated = self.run_default(StrategyConfig(n_items=5,
                                                  enabled_branches=enabled))
        removed = [t for t in full.graph.vertices.values()
                   if t.branch == disabled]
        assert len(ablated.graph.vertices) == \
            len(full.graph.vertices) - len(removed)
        assert not any(t.branch == disabled
                       for t in ablated.graph.vertices.values())
        assert len(ablated.graph.parents(ablated.graph.final)) == 2
        # Remaining branches produce the same sets as in the full run.
        for name in enabled:
            assert ablated.branch_sets[name].titles == \
                full.branch_sets[name].titles

    def test_single_branch_revote_is_identity(self):
        record = self.run_default(StrategyConfig(n_items=5,
                                                 enabled_branches=("short",)))
        assert record.final.titles == record.branch_sets["short"].titles
        assert len(record.graph.parents(record.graph.final)) == 1

    def test_determinism(self):
        a, b = self.run_default(), self.run_default()
        assert a.final.titles == b.final.titles
        assert a.graph.export_lines() == b.graph.export_lines()

    def test_branch_results_order_independent(self):
        orders = [("short", "long", "collab"), ("collab", "long", "short")]
        results = [self.run_default(StrategyConfig(n_items=5,
                                                   enabled_branches=o))
                   for o in orders]
        for name in ("short", "long", "collab"):
            assert results[0].branch_sets[name].titles == \
                results[1].branch_sets[name].titles

    def test_all_branches_degraded_marks_failure(self):
        backend = ScriptedMockBackend({}, fallback=lambda c: "unparseable prose")
        engine = make_engine(backend=backend)
        record = engine.run_got("u0", SEQUENCE)
        assert record.failed
        assert record.final is None

    def test_final_length_caps_at_n(self):
        record = self.run_default()
        assert len(record.final.titles) <= 5
        union = set()
        for rs in record.branch_sets.values():
            union.update(rs.titles)
        if len(union) >= 5:
            assert len(record.final.titles) == 5


class TestBaselines:
    def test_cot_is_chain(self):
        record = make_engine().run_cot("u0", SEQUENCE)
        g = record.graph
        assert record.latency == len(g.vertices) == 3
        assert record.volume == 3

    def test_cot_sc_unanimity(self):
        # Identical mock chains: the vote over k identical sets returns it.
        engine = make_engine(StrategyConfig(n_items=5, cot_sc_k=3))
        cot = make_engine().run_cot("u0", SEQUENCE)
        sc = engine.run_cot_sc("u0", SEQUENCE)
        assert sc.final.titles == cot.final.titles
        assert len(sc.graph.vertices) == 1 + 3 * 2 + 1

    def test_tot_structure(self):
        record = make_engine().run_tot("u0", SEQUENCE, breadth=2, depth=2)
        g = record.graph
        kinds = Counter(t.kind for t in g.vertices.values())
        # Hand drawing: root + 2 categories + 4 leaves, 2 sibling votes,
        # 1 final vote.
        assert kinds == Counter({"item-list": 4, "vote-result": 3,
                                 "category-list": 2, "raw": 1})
        assert len(g.vertices) == 10
        assert g.latency(g.final) == 5

    def test_unknown_strategy(self):
        with pytest.raises(StrategyError):
            make_engine(StrategyConfig(strategy="zen")).run("u0", SEQUENCE)


class TestVoteClosure:
    def test_novel_titles_discarded_and_backfilled(self):
        backend = ScriptedMockBackend(
            {}, fallback=lambda c: "1. made up thing\n2. B1\n3. another fake")
        engine = make_engine(StrategyConfig(n_items=4), backend=backend)
        graph = ThoughtGraph()
        root = graph.add_root("r")
        parents = graph.generate(root, ["x", "y"], kind="item-list",
                                 items_per_child=[["A1", "A2"], ["B1", "B2"]])
        vote = engine._vote(graph, parents, "final", 4)
        result = graph.vertices[vote].items
        assert result[0] == "B1"                       # the only valid vote
        assert set(result) == {"A1", "A2", "B1", "B2"}  # backfilled to N
        assert "made up thing" not in result

    def test_closure_over_randomized_replies(self):
        """Every vote-result title must occur in some parent list (1000+ cases,
        including adversarial all-novel replies)."""
        rng = random.Random(20240817)
        pool = [f"title {i}" for i in range(60)]
        for trial in range(1000):
            lists = [rng.sample(pool, rng.randint(1, 8))
                     for _ in range(rng.randint(2, 4))]
            union = {t.lower() for lst in lists for t in lst}
            style = trial % 4
            if style == 0:
                reply_titles = [t for lst in lists for t in lst]
                rng.shuffle(reply_titles)
            elif style == 1:  # adversarial: only novel titles
                reply_titles = [f"novel {trial}-{i}" for i in range(5)]
            elif style == 2:  # mixed novel and valid, odd casing
                reply_titles = [lists[0][0].upper(), f"novel {trial}",
                                lists[-1][-1]]
            else:  # unparseable prose
                reply_titles = []
            reply = "\n".join(f"{i}. {t}"
                              for i, t in enumerate(reply_titles, 1)) or "prose"
            backend = ScriptedMockBackend({}, fallback=lambda c, r=reply: r)
            engine = make_engine(StrategyConfig(n_items=6), backend=backend)
            graph = ThoughtGraph()
            root = graph.add_root("r")
            parents = graph.generate(root, ["c"] * len(lists), kind="item-list",
                                     items_per_child=lists)
            vote = engine._vote(graph, parents, "final", 6)
            for title in graph.vertices[vote].items:
                assert title.lower() in union


class TestRunRecordSerialization:
    def test_round_trip_and_determinism(self, tmp_path):
        index, vecs, titles = make_collab_context()
        engine = make_engine()
        record = engine.run_got("u0", SEQUENCE, sequence_index=index,
                                query_vector=vecs["u0"], neighbor_titles=titles)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_run_record(record, a)
        save_run_record(record, b)
        assert a.read_bytes() == b.read_bytes()
        payload = load_run_payload(a)
        assert payload["user"] == "u0"
        assert payload["final"] == record.final.titles
        assert payload["latency"] == record.latency
        assert "wall_clock" not in payload
