import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphrec.graph import (GraphError, Thought, ThoughtGraph,
                            TransformationRecord, replay)


def chain(n: int) -> tuple[ThoughtGraph, int]:
    g = ThoughtGraph()
    v = g.add_root("step 0")
    for i in range(1, n):
        v = g.generate(v, [f"step {i}"])[0]
    return g, v


def diamond() -> tuple[ThoughtGraph, int]:
    g = ThoughtGraph()
    root = g.add_root("root")
    a, b = g.generate(root, ["a", "b"])
    top = g.aggregate([a, b], "merged", kind="raw")
    return g, top


class TestAddRoot:
    def test_base_case(self):
        g = ThoughtGraph()
        g.add_root("user sequence text")
        assert len(g.vertices) == 1
        assert not g.edges

    def test_distinct_ids(self):
        g = ThoughtGraph()
        assert g.add_root("a") != g.add_root("b")

    def test_roots_have_no_parents(self):
        g = ThoughtGraph()
        r = g.add_root("a")
        g.add_root("b")
        assert g.parents(r) == []
        assert not g.edges


class TestGenerate:
    def test_fanout_three(self):
        g = ThoughtGraph()
        root = g.add_root("r")
        children = g.generate(root, ["c1", "c2", "c3"])
        assert len(children) == 3
        for c in children:
            assert g.parents(c) == [root]

    def test_fanout_one_extends_chain(self):
        g, tip = chain(4)
        assert g.latency(tip) == 4
        new_tip = g.generate(tip, ["next"])[0]
        assert g.latency(new_tip) == 5

    def test_binary_tree_vertex_count(self):
        g = ThoughtGraph()
        root = g.add_root("r")
        level1 = g.generate(root, ["a", "b"])
        for v in level1:
            g.generate(v, ["x", "y"])
        assert len(g.vertices) == 7

    def test_unknown_source(self):
        g = ThoughtGraph()
        g.add_root("r")
        with pytest.raises(GraphError):
            g.generate(999, ["c"])

    def test_record_appended(self):
        g = ThoughtGraph()
        root = g.add_root("r")
        children = g.generate(root, ["a", "b"])
        rec = g.records[-1]
        assert rec.kind == "generate"
        assert rec.inputs == (root,)
        assert rec.outputs == tuple(children)
        assert rec.fanout == 2


class TestAggregate:
    def test_in_degree(self):
        g = ThoughtGraph()
        root = g.add_root("r")
        lists = g.generate(root, ["1", "2", "3"], kind="item-list",
                           items_per_child=[["a"], ["b"], ["c"]])
        out = g.aggregate(lists, "vote", kind="vote-result", items=["a", "b"])
        assert len(g.parents(out)) == 3

    def test_no_dedup_of_results(self):
        g = ThoughtGraph()
        root = g.add_root("r")
        a, b = g.generate(root, ["a", "b"])
        first = g.aggregate([a, b], "same", kind="raw")
        second = g.aggregate([a, b], "same", kind="raw")
        assert first != second
        assert len(g.vertices) == 5

    def test_diamond_shape(self):
        g, top = diamond()
        assert len(g.vertices) == 4
        assert len(g.edges) == 4

    def test_arity_contract(self):
        g = ThoughtGraph()
        root = g.add_root("r")
        with pytest.raises(GraphError):
            g.aggregate([root], "too few", kind="raw")

    def test_unknown_input(self):
        g = ThoughtGraph()
        a, b = g.add_root("a"), g.add_root("b")
        with pytest.raises(GraphError):
            g.aggregate([a, 999], "bad", kind="raw")
        assert b in g.vertices


class TestLatencyVolume:
    def test_chain_of_five(self):
        g, tip = chain(5)
        assert g.latency(tip) == 5
        assert g.volume(tip) == 5

    def test_single_vertex(self):
        g = ThoughtGraph()
        v = g.add_root("only")
        assert g.latency(v) == 1
        assert g.volume(v) == 1

    def test_diamond(self):
        g, top = diamond()
        assert g.latency(top) == 3
        assert g.volume(top) == 4

    @pytest.mark.parametrize("k,leaves", [(2, 8), (3, 9), (2, 16)])
    def test_balanced_aggregation_tree(self, k, leaves):
        """Edge-hop latency of a balanced k-ary aggregation equals log_k leaves."""
        g = ThoughtGraph()
        level = [g.add_root(f"leaf {i}") for i in range(leaves)]
        total = leaves
        while len(level) > 1:
            level = [g.aggregate(level[i:i + k], "agg", kind="raw")
                     for i in range(0, len(level), k)]
            total += len(level)
        top = level[0]
        assert g.latency(top) - 1 == int(math.log(leaves, k))
        assert g.volume(top) == total == len(g.vertices)

    def test_latency_bounded_by_volume(self):
        g, top = diamond()
        extra = g.generate(top, ["x", "y"])
        for v in g.vertices:
            assert g.latency(v) <= g.volume(v)
        assert len(extra) == 2


class TestInvariants:
    def test_acyclic_after_operations(self):
        g, top = diamond()
        g.generate(top, ["u", "v"])
        order = g.topological_order()
        position = {v: i for i, v in enumerate(order)}
        for a, b in g.edges:
            assert position[a] < position[b]

    def test_edges_follow_creation_order(self):
        g, top = diamond()
        for a, b in g.edges:
            assert g.vertices[a].created_at_step < g.vertices[b].created_at_step

    def test_replay_reconstructs_structure(self):
        g, top = diamond()
        g.generate(top, ["u", "v"])
        rebuilt = replay(g.records, g.roots())
        assert len(rebuilt.vertices) == len(g.vertices)
        assert len(rebuilt.edges) == len(g.edges)
        # Same in/out degree multiset is enough for isomorphism of these DAGs.
        degrees = lambda gr: sorted(
            (len(gr.parents(v)), len(gr.children(v))) for v in gr.vertices)
        assert degrees(rebuilt) == degrees(g)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.integers(1, 3)),
                    min_size=1, max_size=25))
    def test_random_operation_sequences_stay_acyclic(self, ops):
        g = ThoughtGraph()
        frontier = [g.add_root("seed")]
        for is_aggregate, fanout in ops:
            if is_aggregate and len(frontier) >= 2:
                out = g.aggregate(frontier[-2:], "agg", kind="raw")
                frontier = frontier[:-2] + [out]
            else:
                frontier.extend(g.generate(frontier[-1],
                                           [f"c{i}" for i in range(fanout)]))
        g.topological_order()
        for v in g.vertices:
            assert g.latency(v) <= g.volume(v)


class TestThoughtValidation:
    def test_item_list_requires_items(self):
        with pytest.raises(GraphError):
            Thought(id=0, kind="item-list", content="x")

    def test_duplicate_titles_rejected(self):
        with pytest.raises(GraphError):
            Thought(id=0, kind="vote-result", content="x",
                    items=["Trail Mix", "trail  mix"])

    def test_record_arity(self):
        with pytest.raises(GraphError):
            TransformationRecord(kind="aggregate", inputs=(1,), outputs=(2,))
        with pytest.raises(GraphError):
            TransformationRecord(kind="generate", inputs=(1, 2), outputs=(3,),
                                 fanout=1)


class TestExport:
    def test_deterministic_lines(self):
        g, top = diamond()
        g.final = top
        assert g.export_lines() == g.export_lines()
        assert g.export_lines()[-1] == f"F\t{top}"

    def test_newlines_escaped(self):
        g = ThoughtGraph()
        g.add_root("line1\nline2\ttabbed")
        (line,) = [l for l in g.export_lines() if l.startswith("V")]
        assert "\n" not in line.removeprefix("V\t")
        assert "line1\\nline2\\ttabbed" in line
