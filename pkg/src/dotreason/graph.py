"""Typed reasoning DAG: propositions, critiques, refinements and summaries.

Every mutation checks endpoint typing and acyclicity before touching the
graph, so a ``ReasoningDag`` built only through its public methods is always
well-formed. ``ReasoningDag.from_parts`` skips all checks; it exists for
deserialization (which validates afterwards) and for building corrupt
fixtures in tests.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from heapq import heapify, heappop, heappush
from typing import Iterable, Optional, Sequence

NodeId = int

ROOT: NodeId = 0

# Engine-authored critique text marking a line given up after too many refinements.
ABANDONMENT_NOTE = "abandoned: refinement budget exceeded"


class NodeKind(str, enum.Enum):
    PROBLEM = "problem"
    PROPOSITION = "proposition"
    CRITIQUE = "critique"
    SUMMARY = "summary"


class PropStatus(str, enum.Enum):
    PROPOSED = "proposed"
    VERIFIED = "verified"
    INVALIDATED = "invalidated"


class Verdict(str, enum.Enum):
    VERIFY = "verify"
    REFUTE = "refute"


class EdgeKind(str, enum.Enum):
    DEDUCE = "deduce"
    CRITIQUE = "critique"
    REFINE = "refine"
    SUMMARIZE = "summarize"
    CONTEXT = "context"


class GraphError(Exception):
    """Base class for rejected graph mutations."""


class EmptyProblemError(GraphError):
    pass


class EmptyTextError(GraphError):
    pass


class UnknownNodeError(GraphError):
    def __init__(self, node: NodeId) -> None:
        self.node = node
        super().__init__(f"unknown node {node}")


class EdgeTypeMismatchError(GraphError):
    pass


class CycleRejectedError(GraphError):
    def __init__(self, src: NodeId, dst: NodeId) -> None:
        self.src = src
        self.dst = dst
        super().__init__(f"edge {src}->{dst} would close a cycle")


class DuplicateEdgeError(GraphError):
    pass


class NotAPropositionError(GraphError):
    pass


class NotACritiqueError(GraphError):
    pass


class AlreadyResolvedError(GraphError):
    pass


class VerifyHasNoRefinementError(GraphError):
    pass


class UnverifiedSummaryBasisError(GraphError):
    pass


class EmptyBasisError(GraphError):
    pass


class SealedDagError(GraphError):
    """The DAG already has its summary; the reasoning is closed."""


class OpenRefutationError(GraphError):
    pass


@dataclass(frozen=True)
class Node:
    id: NodeId
    kind: NodeKind
    text: str
    status: Optional[PropStatus] = None
    verdict: Optional[Verdict] = None
    display_name: Optional[str] = None


@dataclass(frozen=True, order=True)
class Edge:
    src: NodeId
    dst: NodeId
    kind: EdgeKind

    def sort_key(self) -> tuple[int, int, str]:
        return (self.src, self.dst, self.kind.value)


# Allowed (source kind, destination kind) pairs per edge kind.
_ENDPOINTS: dict[EdgeKind, frozenset[tuple[NodeKind, NodeKind]]] = {
    EdgeKind.DEDUCE: frozenset(
        {
            (NodeKind.PROPOSITION, NodeKind.PROPOSITION),
            (NodeKind.PROBLEM, NodeKind.PROPOSITION),
        }
    ),
    EdgeKind.CRITIQUE: frozenset({(NodeKind.PROPOSITION, NodeKind.CRITIQUE)}),
    EdgeKind.REFINE: frozenset({(NodeKind.CRITIQUE, NodeKind.PROPOSITION)}),
    EdgeKind.SUMMARIZE: frozenset({(NodeKind.PROPOSITION, NodeKind.SUMMARY)}),
    EdgeKind.CONTEXT: frozenset(
        {
            (NodeKind.PROBLEM, NodeKind.PROPOSITION),
            (NodeKind.PROBLEM, NodeKind.SUMMARY),
        }
    ),
}


def endpoints_ok(kind: EdgeKind, src: Node, dst: Node) -> bool:
    """Return True if an edge of ``kind`` may join ``src`` to ``dst``.

    Refine edges additionally require a refuting source critique.
    """
    if (src.kind, dst.kind) not in _ENDPOINTS[kind]:
        return False
    if kind is EdgeKind.REFINE and src.verdict is not Verdict.REFUTE:
        return False
    return True


class ReasoningDag:
    """Append-only DAG of reasoning steps rooted at a problem statement."""

    def __init__(self, problem: str) -> None:
        if not problem or not problem.strip():
            raise EmptyProblemError("problem statement is empty")
        self.nodes: list[Node] = [Node(ROOT, NodeKind.PROBLEM, problem)]
        self.edges: set[Edge] = set()
        self._out: dict[NodeId, list[Edge]] = {ROOT: []}
        self._in: dict[NodeId, list[Edge]] = {ROOT: []}

    @classmethod
    def from_parts(cls, nodes: Sequence[Node], edges: Iterable[Edge]) -> ReasoningDag:
        """Assemble a DAG without any checks (deserialization and test fixtures)."""
        dag = cls.__new__(cls)
        dag.nodes = list(nodes)
        dag.edges = set()
        dag._out = {n.id: [] for n in dag.nodes}
        dag._in = {n.id: [] for n in dag.nodes}
        for e in edges:
            dag._link(e)
        return dag

    # -- read access ---------------------------------------------------

    @property
    def problem(self) -> str:
        return self.nodes[ROOT].text

    @property
    def next_id(self) -> NodeId:
        return len(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: object) -> bool:
        return isinstance(node_id, int) and 0 <= node_id < len(self.nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ReasoningDag):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __repr__(self) -> str:
        return f"ReasoningDag(nodes={len(self.nodes)}, edges={len(self.edges)})"

    def node(self, node_id: NodeId) -> Node:
        if node_id not in self:
            raise UnknownNodeError(node_id)
        return self.nodes[node_id]

    def out_edges(self, node_id: NodeId) -> list[Edge]:
        return list(self._out.get(node_id, ()))

    def in_edges(self, node_id: NodeId) -> list[Edge]:
        return list(self._in.get(node_id, ()))

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges, key=Edge.sort_key)

    def critiques_of(self, prop: NodeId) -> list[Node]:
        return [
            self.nodes[e.dst] for e in self._out.get(prop, ()) if e.kind is EdgeKind.CRITIQUE
        ]

    def critique_target(self, critique: NodeId) -> Optional[NodeId]:
        for e in self._in.get(critique, ()):
            if e.kind is EdgeKind.CRITIQUE:
                return e.src
        return None

    def has_refinement(self, critique: NodeId) -> bool:
        return any(e.kind is EdgeKind.REFINE for e in self._out.get(critique, ()))

    def is_abandoned(self, prop: NodeId) -> bool:
        """True if the engine gave up on this proposition's line."""
        return any(
            c.verdict is Verdict.REFUTE and c.text == ABANDONMENT_NOTE
            for c in self.critiques_of(prop)
        )

    def has_open_refutation(self, prop: NodeId) -> bool:
        """A Proposed proposition with a refuting critique that was never refined."""
        node = self.nodes[prop]
        if node.kind is not NodeKind.PROPOSITION or node.status is not PropStatus.PROPOSED:
            return False
        return any(
            c.verdict is Verdict.REFUTE and not self.has_refinement(c.id)
            for c in self.critiques_of(prop)
        )

    def propositions(self, status: Optional[PropStatus] = None) -> list[NodeId]:
        return [
            n.id
            for n in self.nodes
            if n.kind is NodeKind.PROPOSITION and (status is None or n.status is status)
        ]

    def summaries(self) -> list[NodeId]:
        return [n.id for n in self.nodes if n.kind is NodeKind.SUMMARY]

    # -- mutation ------------------------------------------------------

    def add_proposition(
        self,
        text: str,
        parents: Sequence[NodeId],
        kinds: Sequence[EdgeKind],
        display_name: Optional[str] = None,
    ) -> NodeId:
        self._require_open()
        if not parents:
            raise EdgeTypeMismatchError("a proposition needs at least one parent")
        if len(parents) != len(kinds):
            raise ValueError("parents and kinds must have the same length")
        _require_text(text)
        for p, k in zip(parents, kinds):
            if k not in (EdgeKind.DEDUCE, EdgeKind.CONTEXT):
                raise EdgeTypeMismatchError(f"proposition parent edge cannot be {k.value}")
            self.node(p)
        new = Node(self.next_id, NodeKind.PROPOSITION, text, status=PropStatus.PROPOSED,
                   display_name=display_name)
        edges = [Edge(p, new.id, k) for p, k in zip(parents, kinds)]
        self._commit(new, edges)
        return new.id

    def add_critique(
        self,
        target: NodeId,
        verdict: Verdict,
        text: str,
        display_name: Optional[str] = None,
    ) -> NodeId:
        self._require_open()
        prop = self.node(target)
        if prop.kind is not NodeKind.PROPOSITION:
            raise NotAPropositionError(f"node {target} is a {prop.kind.value}")
        if prop.status is not PropStatus.PROPOSED:
            raise AlreadyResolvedError(f"proposition {target} is already {prop.status.value}")
        _require_text(text)
        new = Node(self.next_id, NodeKind.CRITIQUE, text, verdict=Verdict(verdict),
                   display_name=display_name)
        self._commit(new, [Edge(target, new.id, EdgeKind.CRITIQUE)])
        if new.verdict is Verdict.VERIFY:
            self._set_status(target, PropStatus.VERIFIED)
        return new.id

    def add_refinement(
        self, critique: NodeId, text: str, display_name: Optional[str] = None
    ) -> NodeId:
        self._require_open()
        crit = self.node(critique)
        if crit.kind is not NodeKind.CRITIQUE:
            raise NotACritiqueError(f"node {critique} is a {crit.kind.value}")
        if crit.verdict is not Verdict.REFUTE:
            raise VerifyHasNoRefinementError(f"critique {critique} verifies its target")
        target = self.critique_target(critique)
        if target is not None and self.nodes[target].status is PropStatus.VERIFIED:
            raise AlreadyResolvedError(f"proposition {target} was verified by another critique")
        _require_text(text)
        new = Node(self.next_id, NodeKind.PROPOSITION, text, status=PropStatus.PROPOSED,
                   display_name=display_name)
        self._commit(new, [Edge(critique, new.id, EdgeKind.REFINE)])
        if target is not None and self.nodes[target].status is PropStatus.PROPOSED:
            self._set_status(target, PropStatus.INVALIDATED)
        return new.id

    def add_summary(
        self,
        basis: Sequence[NodeId],
        text: str,
        include_context: bool = True,
        display_name: Optional[str] = None,
    ) -> NodeId:
        self._require_open()
        if not basis:
            raise EmptyBasisError("summary basis is empty")
        for b in basis:
            node = self.node(b)
            if node.kind is not NodeKind.PROPOSITION or node.status is not PropStatus.VERIFIED:
                raise UnverifiedSummaryBasisError(f"summary basis node {b} is not verified")
        pending = [p for p in self.propositions(PropStatus.PROPOSED)
                   if self.has_open_refutation(p) and not self.is_abandoned(p)]
        if pending:
            raise OpenRefutationError(f"propositions {pending} have unanswered refutations")
        _require_text(text)
        new = Node(self.next_id, NodeKind.SUMMARY, text, display_name=display_name)
        edges = [Edge(b, new.id, EdgeKind.SUMMARIZE) for b in dict.fromkeys(basis)]
        if include_context:
            edges.append(Edge(ROOT, new.id, EdgeKind.CONTEXT))
        self._commit(new, edges)
        return new.id

    def add_edge(self, src: NodeId, dst: NodeId, kind: EdgeKind) -> Edge:
        """Link two existing nodes with a Deduce or Context edge.

        Raises CycleRejectedError if ``dst`` already reaches ``src``.
        """
        self._require_open()
        if kind not in (EdgeKind.DEDUCE, EdgeKind.CONTEXT):
            raise EdgeTypeMismatchError(f"{kind.value} edges are created by their own operation")
        edge = Edge(src, dst, kind)
        self._check_edge(edge)
        if edge in self.edges:
            raise DuplicateEdgeError(f"edge {src}->{dst} ({kind.value}) already exists")
        if src == dst or self.reaches(dst, src):
            raise CycleRejectedError(src, dst)
        self._link(edge)
        return edge

    def reaches(self, start: NodeId, goal: NodeId) -> bool:
        stack = [start]
        seen = {start}
        while stack:
            n = stack.pop()
            if n == goal:
                return True
            for e in self._out.get(n, ()):
                if e.dst not in seen:
                    seen.add(e.dst)
                    stack.append(e.dst)
        return False

    # -- internals -----------------------------------------------------

    def _require_open(self) -> None:
        if any(n.kind is NodeKind.SUMMARY for n in self.nodes):
            raise SealedDagError("the DAG already has a summary")

    def _check_edge(self, edge: Edge) -> None:
        src, dst = self.node(edge.src), self.node(edge.dst)
        if not endpoints_ok(edge.kind, src, dst):
            raise EdgeTypeMismatchError(
                f"{edge.kind.value} edge cannot join {src.kind.value} {src.id} "
                f"to {dst.kind.value} {dst.id}"
            )

    def _commit(self, new: Node, edges: list[Edge]) -> None:
        # Validate everything against a provisional view before mutating.
        self.nodes.append(new)
        self._out[new.id] = []
        self._in[new.id] = []
        try:
            for e in edges:
                self._check_edge(e)
                # The new node has no out-edges yet; kept for uniformity.
                if e.src == e.dst or self.reaches(e.dst, e.src):
                    raise CycleRejectedError(e.src, e.dst)
        except GraphError:
            self.nodes.pop()
            del self._out[new.id]
            del self._in[new.id]
            raise
        for e in edges:
            self._link(e)

    def _link(self, edge: Edge) -> None:
        if edge in self.edges:
            return
        self.edges.add(edge)
        self._out.setdefault(edge.src, []).append(edge)
        self._in.setdefault(edge.dst, []).append(edge)

    def _set_status(self, node_id: NodeId, status: PropStatus) -> None:
        old = self.nodes[node_id]
        assert old.status is PropStatus.PROPOSED, "terminal statuses never change"
        self.nodes[node_id] = Node(old.id, old.kind, old.text, status, old.verdict,
                                   old.display_name)


def _require_text(text: str) -> None:
    if not text or not text.strip():
        raise EmptyTextError("node text is empty")


def new_dag(problem_text: str) -> ReasoningDag:
    return ReasoningDag(problem_text)


def topological_order(dag: ReasoningDag) -> list[NodeId]:
    """Kahn's algorithm; among ready nodes the smallest id goes first."""
    indeg = {n.id: 0 for n in dag.nodes}
    for e in dag.edges:
        indeg[e.dst] += 1
    ready = [n for n, d in indeg.items() if d == 0]
    heapify(ready)
    order: list[NodeId] = []
    while ready:
        n = heappop(ready)
        order.append(n)
        for e in dag.out_edges(n):
            indeg[e.dst] -= 1
            if indeg[e.dst] == 0:
                heappush(ready, e.dst)
    return order


def verified_chain(dag: ReasoningDag) -> list[NodeId]:
    """Verified propositions in topological order."""
    return [
        n
        for n in topological_order(dag)
        if dag.nodes[n].kind is NodeKind.PROPOSITION
        and dag.nodes[n].status is PropStatus.VERIFIED
    ]


@dataclass(frozen=True)
class NodeCounts:
    kinds: dict[NodeKind, int] = field(default_factory=dict)
    statuses: dict[PropStatus, int] = field(default_factory=dict)
    edges: int = 0

    @property
    def total(self) -> int:
        return sum(self.kinds.values())

    def as_dict(self) -> dict[str, int]:
        out = {k.value: self.kinds.get(k, 0) for k in NodeKind}
        out.update({s.value: self.statuses.get(s, 0) for s in PropStatus})
        out["edges"] = self.edges
        return out


def node_counts(dag: ReasoningDag) -> NodeCounts:
    kinds = Counter(n.kind for n in dag.nodes)
    statuses = Counter(n.status for n in dag.nodes if n.status is not None)
    return NodeCounts(
        kinds={k: kinds.get(k, 0) for k in NodeKind},
        statuses={s: statuses.get(s, 0) for s in PropStatus},
        edges=len(dag.edges),
    )
