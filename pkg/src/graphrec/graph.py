"""Directed thought graph: vertices, dependency edges, and the two transformations.

A reasoning run is recorded as a DAG in which every LLM response is a vertex
and an edge (a, b) means b was generated or aggregated from a. Two structural
transformations exist: ``generate`` (one parent, k children) and ``aggregate``
(>= 2 parents, one consolidated child). Latency and volume follow the
inclusive vertex-counting convention: a chain of N thoughts has latency N and
volume N.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional

VALID_KINDS = ("summary", "category-list", "item-list", "vote-result", "raw")
VALID_BRANCHES = ("short", "long", "collab", "final")


class GraphError(Exception):
    """Structural violation: unknown vertex, bad arity, or cycle."""


def _normalize_title(title: str) -> str:
    return " ".join(title.split()).lower()


@dataclass
class Thought:
    id: int
    kind: str
    content: str
    branch: str = "final"
    items: Optional[list[str]] = None
    prompt_used: str = ""
    created_at_step: int = 0

    def __post_init__(self) -> None:
        if self.kind not in VALID_KINDS:
            raise GraphError(f"unknown thought kind: {self.kind!r}")
        if self.branch not in VALID_BRANCHES:
            raise GraphError(f"unknown branch: {self.branch!r}")
        if self.kind in ("item-list", "vote-result"):
            if not self.items:
                raise GraphError(f"{self.kind} thought requires a non-empty items list")
            seen = set()
            for title in self.items:
                key = _normalize_title(title)
                if key in seen:
                    raise GraphError(f"duplicate title in items: {title!r}")
                seen.add(key)


@dataclass
class TransformationRecord:
    kind: str  # "generate" | "aggregate"
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    fanout: int = 0

    def __post_init__(self) -> None:
        if self.kind == "generate":
            if len(self.inputs) != 1 or self.fanout < 1 or len(self.outputs) != self.fanout:
                raise GraphError("generate record needs 1 input and fanout >= 1 outputs")
        elif self.kind == "aggregate":
            if len(self.inputs) < 2 or len(self.outputs) != 1:
                raise GraphError("aggregate record needs >= 2 inputs and exactly 1 output")
        else:
            raise GraphError(f"unknown transformation kind: {self.kind!r}")


@dataclass
class ThoughtGraph:
    """Single-writer DAG of thoughts with atomic batch insertion per transformation."""

    vertices: dict[int, Thought] = field(default_factory=dict)
    edges: set[tuple[int, int]] = field(default_factory=set)
    records: list[TransformationRecord] = field(default_factory=list)
    final: Optional[int] = None
    _next_id: int = 0
    _step: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def _new_thought(self, content: str, kind: str, branch: str,
                     items: Optional[list[str]], prompt_used: str) -> Thought:
        t = Thought(
            id=self._next_id,
            kind=kind,
            content=content,
            branch=branch,
            items=list(items) if items is not None else None,
            prompt_used=prompt_used,
            created_at_step=self._step,
        )
        self._next_id += 1
        self._step += 1
        self.vertices[t.id] = t
        return t

    def add_root(self, content: str, kind: str = "raw", branch: str = "final",
                 items: Optional[list[str]] = None, prompt_used: str = "") -> int:
        """Insert a vertex with no incoming edges."""
        with self._lock:
            return self._new_thought(content, kind, branch, items, prompt_used).id

    def generate(self, source: int, contents: list[str], kind: str = "raw",
                 branch: str = "final", items_per_child: Optional[list[Optional[list[str]]]] = None,
                 prompt_used: str = "") -> list[int]:
        """Generation transformation: k children from one existing parent."""
        with self._lock:
            if source not in self.vertices:
                raise GraphError(f"unknown source vertex: {source}")
            if not contents:
                raise GraphError("generate requires at least one child content")
            if items_per_child is not None and len(items_per_child) != len(contents):
                raise GraphError("items_per_child length must match contents")
            children = []
            for i, content in enumerate(contents):
                items = items_per_child[i] if items_per_child is not None else None
                child = self._new_thought(content, kind, branch, items, prompt_used)
                self.edges.add((source, child.id))
                children.append(child.id)
            self.records.append(TransformationRecord(
                kind="generate", inputs=(source,), outputs=tuple(children),
                fanout=len(children)))
            return children

    def aggregate(self, inputs: Iterable[int], content: str, kind: str = "vote-result",
                  branch: str = "final", items: Optional[list[str]] = None,
                  prompt_used: str = "") -> int:
        """Aggregation transformation: one consolidated vertex from >= 2 inputs."""
        with self._lock:
            input_ids = tuple(dict.fromkeys(inputs))
            if len(input_ids) < 2:
                raise GraphError("aggregate requires at least 2 distinct inputs")
            for vid in input_ids:
                if vid not in self.vertices:
                    raise GraphError(f"unknown input vertex: {vid}")
            out = self._new_thought(content, kind, branch, items, prompt_used)
            for vid in input_ids:
                self.edges.add((vid, out.id))
            self.records.append(TransformationRecord(
                kind="aggregate", inputs=input_ids, outputs=(out.id,)))
            return out.id

    def parents(self, vid: int) -> list[int]:
        return sorted(a for a, b in self.edges if b == vid)

    def children(self, vid: int) -> list[int]:
        return sorted(b for a, b in self.edges if a == vid)

    def roots(self) -> list[int]:
        targets = {b for _, b in self.edges}
        return sorted(v for v in self.vertices if v not in targets)

    def ancestors(self, vid: int) -> set[int]:
        """All vertices with a directed path to vid, excluding vid itself."""
        if vid not in self.vertices:
            raise GraphError(f"unknown vertex: {vid}")
        incoming: dict[int, list[int]] = {}
        for a, b in self.edges:
            incoming.setdefault(b, []).append(a)
        seen: set[int] = set()
        stack = list(incoming.get(vid, []))
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(incoming.get(v, []))
        return seen

    def latency(self, final: int) -> int:
        """Vertex count of the longest directed root-to-final path, inclusive."""
        if final not in self.vertices:
            raise GraphError(f"unknown vertex: {final}")
        incoming: dict[int, list[int]] = {}
        for a, b in self.edges:
            incoming.setdefault(b, []).append(a)
        memo: dict[int, int] = {}

        def longest(v: int) -> int:
            if v in memo:
                return memo[v]
            preds = incoming.get(v, [])
            memo[v] = 1 if not preds else 1 + max(longest(p) for p in preds)
            return memo[v]

        return longest(final)

    def volume(self, final: int) -> int:
        """Number of thoughts with a path to final, counting final itself."""
        return len(self.ancestors(final)) + 1

    def topological_order(self) -> list[int]:
        """Topological sort; raises GraphError if a cycle exists."""
        indeg = {v: 0 for v in self.vertices}
        for _, b in self.edges:
            indeg[b] += 1
        ready = sorted(v for v, d in indeg.items() if d == 0)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in self.children(v):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        if len(order) != len(self.vertices):
            raise GraphError("graph contains a cycle")
        return order

    def export_lines(self) -> list[str]:
        """Line-delimited dump: one vertex or edge per line, deterministic order."""
        lines = []
        for vid in sorted(self.vertices):
            t = self.vertices[vid]
            items = "|".join(t.items) if t.items else ""
            content = t.content.replace("\\", "\\\\").replace("\n", "\\n").replace("\t", "\\t")
            lines.append(
                f"V\t{t.id}\t{t.kind}\t{t.branch}\t{t.created_at_step}\t"
                f"{t.prompt_used}\t{items}\t{content}"
            )
        for a, b in sorted(self.edges):
            lines.append(f"E\t{a}\t{b}")
        if self.final is not None:
            lines.append(f"F\t{self.final}")
        return lines


def replay(records: Iterable[TransformationRecord],
           roots: Iterable[int]) -> ThoughtGraph:
    """Rebuild a structurally isomorphic graph from a transformation log.

    Contents are not recorded in the log, so replayed vertices carry empty
    payloads; the vertex/edge structure matches the original under the id
    mapping returned alongside the graph.
    """
    g = ThoughtGraph()
    mapping: dict[int, int] = {}
    for r in roots:
        mapping[r] = g.add_root("")
    for rec in records:
        if rec.kind == "generate":
            new_children = g.generate(mapping[rec.inputs[0]],
                                      ["" for _ in rec.outputs])
            for old, new in zip(rec.outputs, new_children):
                mapping[old] = new
        else:
            out = g.aggregate([mapping[i] for i in rec.inputs], "", kind="raw")
            mapping[rec.outputs[0]] = out
    return g
