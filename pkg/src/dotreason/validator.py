"""Whole-graph soundness checks.

These checks deliberately avoid the incremental bookkeeping in
``ReasoningDag`` and rebuild adjacency from the raw edge set, so they also
catch corruption in DAGs loaded from untrusted JSON.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

from .graph import (
    ROOT,
    Edge,
    EdgeKind,
    NodeId,
    NodeKind,
    PropStatus,
    ReasoningDag,
    Verdict,
    ABANDONMENT_NOTE,
    endpoints_ok,
)


class ViolationKind(str, enum.Enum):
    CYCLE = "Cycle"
    UNREACHABLE_NODE = "UnreachableNode"
    UNVERIFIED_SUMMARY_BASIS = "UnverifiedSummaryBasis"
    VERIFIED_WITHOUT_VERDICT = "VerifiedWithoutVerdict"
    INVALIDATED_WITHOUT_REFINEMENT = "InvalidatedWithoutRefinement"
    ORPHAN_CRITIQUE = "OrphanCritique"
    MULTIPLE_SUMMARIES = "MultipleSummaries"
    EDGE_TYPE_MISMATCH = "EdgeTypeMismatch"
    OPEN_REFUTATION = "OpenRefutation"


_KIND_RANK = {k: i for i, k in enumerate(ViolationKind)}


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    nodes: tuple[NodeId, ...]
    message: str

    def sort_key(self) -> tuple[int, NodeId]:
        return (_KIND_RANK[self.kind], self.nodes[0])

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "nodes": list(self.nodes), "message": self.message}

    def __str__(self) -> str:
        ids = ", ".join(str(n) for n in self.nodes)
        return f"{self.kind.value} [{ids}]: {self.message}"


class _View:
    """Plain adjacency over the raw edge set."""

    def __init__(self, dag: ReasoningDag) -> None:
        self.nodes = {n.id: n for n in dag.nodes}
        self.out: dict[NodeId, list[Edge]] = defaultdict(list)
        self.inc: dict[NodeId, list[Edge]] = defaultdict(list)
        for e in sorted(dag.edges, key=Edge.sort_key):
            self.out[e.src].append(e)
            self.inc[e.dst].append(e)

    def critiques(self, prop: NodeId) -> list:
        return [self.nodes[e.dst] for e in self.out[prop]
                if e.kind is EdgeKind.CRITIQUE and e.dst in self.nodes]

    def refined(self, critique: NodeId) -> bool:
        return any(e.kind is EdgeKind.REFINE for e in self.out[critique])


def _find_cycles(view: _View) -> list[tuple[NodeId, ...]]:
    """Iterative three-colour DFS; one cycle per back edge, deduplicated by node set."""
    white, grey, black = 0, 1, 2
    colour = {n: white for n in view.nodes}
    cycles: list[tuple[NodeId, ...]] = []
    seen: set[frozenset[NodeId]] = set()
    for start in sorted(view.nodes):
        if colour[start] != white:
            continue
        path: list[NodeId] = [start]
        iters = [iter(view.out[start])]
        colour[start] = grey
        while iters:
            edge = next(iters[-1], None)
            if edge is None:
                colour[path.pop()] = black
                iters.pop()
                continue
            nxt = edge.dst
            if nxt not in colour:
                continue
            if colour[nxt] == grey:
                cyc = tuple(path[path.index(nxt):])
                key = frozenset(cyc)
                if key not in seen:
                    seen.add(key)
                    cycles.append(cyc)
            elif colour[nxt] == white:
                colour[nxt] = grey
                path.append(nxt)
                iters.append(iter(view.out[nxt]))
    return cycles


def _reachable(view: _View, start: NodeId) -> set[NodeId]:
    seen = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for e in view.out[n]:
            if e.dst not in seen:
                seen.add(e.dst)
                stack.append(e.dst)
    return seen


def validate(dag: ReasoningDag) -> list[Violation]:
    """Return every soundness violation, sorted by (kind, first node id)."""
    view = _View(dag)
    found: list[Violation] = []

    def report(kind: ViolationKind, nodes: Iterable[NodeId], message: str) -> None:
        found.append(Violation(kind, tuple(nodes), message))

    for cyc in _find_cycles(view):
        report(ViolationKind.CYCLE, cyc, "circular dependency " + " -> ".join(map(str, cyc)))

    reach = _reachable(view, ROOT) if ROOT in view.nodes else set()
    for n in sorted(view.nodes):
        if n not in reach:
            report(ViolationKind.UNREACHABLE_NODE, [n], f"node {n} is not reachable from the problem")

    for e in sorted(dag.edges, key=Edge.sort_key):
        src, dst = view.nodes.get(e.src), view.nodes.get(e.dst)
        if src is None or dst is None:
            continue
        if e.kind is EdgeKind.SUMMARIZE and src.kind is NodeKind.PROPOSITION \
                and dst.kind is NodeKind.SUMMARY:
            if src.status is not PropStatus.VERIFIED:
                report(ViolationKind.UNVERIFIED_SUMMARY_BASIS, [e.src, e.dst],
                       f"summary {e.dst} uses {src.status.value if src.status else 'unknown'} "
                       f"proposition {e.src}")
            continue
        if not endpoints_ok(e.kind, src, dst):
            report(ViolationKind.EDGE_TYPE_MISMATCH, [e.src, e.dst],
                   f"{e.kind.value} edge from {src.kind.value} {e.src} to {dst.kind.value} {e.dst}")

    summaries = [n for n, node in view.nodes.items() if node.kind is NodeKind.SUMMARY]

    for n in sorted(view.nodes):
        node = view.nodes[n]
        if node.kind is NodeKind.PROPOSITION:
            crits = view.critiques(n)
            if node.status is PropStatus.VERIFIED:
                if not any(c.verdict is Verdict.VERIFY for c in crits):
                    report(ViolationKind.VERIFIED_WITHOUT_VERDICT, [n],
                           f"proposition {n} is verified but no critique verifies it")
            elif node.status is PropStatus.INVALIDATED:
                if not any(c.verdict is Verdict.REFUTE and view.refined(c.id) for c in crits):
                    report(ViolationKind.INVALIDATED_WITHOUT_REFINEMENT, [n],
                           f"proposition {n} is invalidated but no refuting critique was refined")
            elif node.status is PropStatus.PROPOSED and summaries:
                abandoned = any(c.verdict is Verdict.REFUTE and c.text == ABANDONMENT_NOTE
                                for c in crits)
                open_refutes = [c.id for c in crits
                                if c.verdict is Verdict.REFUTE and not view.refined(c.id)]
                if open_refutes and not abandoned:
                    report(ViolationKind.OPEN_REFUTATION, [n, *open_refutes],
                           f"proposition {n} has an unanswered refutation at summary time")
        elif node.kind is NodeKind.CRITIQUE:
            targets = [e for e in view.inc[n] if e.kind is EdgeKind.CRITIQUE]
            if len(targets) != 1:
                report(ViolationKind.ORPHAN_CRITIQUE, [n],
                       f"critique {n} has {len(targets)} targets, expected 1")

    if len(summaries) > 1:
        report(ViolationKind.MULTIPLE_SUMMARIES, sorted(summaries),
               f"{len(summaries)} summary nodes, expected at most 1")

    found.sort(key=Violation.sort_key)
    return found


def dependency_edges(dag: ReasoningDag) -> list[tuple[NodeId, NodeId]]:
    """Stored edges plus one verifying-critique -> target link per verification.

    The extra links make a verified proposition depend on the critique that
    verified it, mirroring the drawn "Verified" arrow of the expanded view.
    """
    pairs = [(e.src, e.dst) for e in dag.edges]
    nodes = {n.id: n for n in dag.nodes}
    for e in dag.edges:
        crit = nodes.get(e.dst)
        if e.kind is EdgeKind.CRITIQUE and crit is not None and crit.verdict is Verdict.VERIFY:
            pairs.append((e.dst, e.src))
    return pairs


def ancestors(dag: ReasoningDag, node: NodeId) -> set[NodeId]:
    """``node`` plus everything with a dependency path into it."""
    rev: dict[NodeId, list[NodeId]] = defaultdict(list)
    for src, dst in dependency_edges(dag):
        rev[dst].append(src)
    seen = {node}
    stack = [node]
    while stack:
        n = stack.pop()
        for p in rev[n]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def summary_closure(dag: ReasoningDag) -> tuple[frozenset[NodeId], list[Violation]]:
    """Ancestor set of the single summary node and the coverage findings.

    Checks that the closure holds the root and every verified proposition,
    and that every proposition feeding the summary directly is verified.
    """
    summaries = [n.id for n in dag.nodes if n.kind is NodeKind.SUMMARY]
    if len(summaries) != 1:
        nodes = summaries or [ROOT]
        return frozenset(), [Violation(ViolationKind.MULTIPLE_SUMMARIES, tuple(nodes),
                                       f"expected exactly one summary node, found {len(summaries)}")]
    summary = summaries[0]
    closure = ancestors(dag, summary)
    found: list[Violation] = []
    if ROOT not in closure:
        found.append(Violation(ViolationKind.UNREACHABLE_NODE, (ROOT, summary),
                               "the summary does not depend on the problem statement"))
    for n in dag.nodes:
        if n.kind is NodeKind.PROPOSITION and n.status is PropStatus.VERIFIED \
                and n.id not in closure:
            found.append(Violation(ViolationKind.UNREACHABLE_NODE, (n.id, summary),
                                   f"verified proposition {n.id} never reaches the summary"))
    for e in sorted(dag.edges, key=Edge.sort_key):
        if e.kind is EdgeKind.SUMMARIZE and e.dst == summary:
            src = dag.nodes[e.src] if e.src < len(dag.nodes) else None
            if src is not None and src.kind is NodeKind.PROPOSITION \
                    and src.status is not PropStatus.VERIFIED:
                found.append(Violation(ViolationKind.UNVERIFIED_SUMMARY_BASIS, (e.src, summary),
                                       f"summary uses unverified proposition {e.src}"))
    found.sort(key=Violation.sort_key)
    return frozenset(closure), found


def lint(dag: ReasoningDag) -> list[Violation]:
    """``validate`` plus the summary-closure findings, deduplicated."""
    findings = list(validate(dag))
    seen = {(v.kind, v.nodes) for v in findings}
    _, closure_findings = summary_closure(dag)
    for v in closure_findings:
        if (v.kind, v.nodes) not in seen:
            seen.add((v.kind, v.nodes))
            findings.append(v)
    findings.sort(key=Violation.sort_key)
    return findings
