"""JSON, Graphviz and training-record serialization."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Optional

import jsonschema

from .graph import (
    ROOT,
    Edge,
    EdgeKind,
    Node,
    NodeKind,
    PropStatus,
    ReasoningDag,
    Verdict,
)
from .trace import Trace, TraceApplyError, TraceError, apply_trace, render_trace
from .validator import Violation, validate

FORMAT_VERSION = "dot-dag/1"


class ExportError(Exception):
    pass


class BadJsonError(ExportError):
    pass


class SchemaViolationError(ExportError):
    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


class IntegrityViolationError(ExportError):
    def __init__(self, violations: list[Violation], message: Optional[str] = None) -> None:
        self.violations = violations
        if message is None:
            message = "; ".join(str(v) for v in violations)
        super().__init__(message)


def _dumps(obj: Any, indent: Optional[int] = None) -> str:
    # '<' only occurs inside strings, so escaping it after encoding is safe
    return json.dumps(obj, indent=indent, ensure_ascii=False).replace("<", "\\u003c")


# -- JSON ----------------------------------------------------------------


def to_document(dag: ReasoningDag) -> dict[str, Any]:
    nodes = []
    for n in sorted(dag.nodes, key=lambda n: n.id):
        entry: dict[str, Any] = {"id": n.id, "kind": n.kind.value, "text": n.text}
        if n.status is not None:
            entry["status"] = n.status.value
        if n.verdict is not None:
            entry["verdict"] = n.verdict.value
        if n.display_name is not None:
            entry["display_name"] = n.display_name
        nodes.append(entry)
    edges = [{"src": e.src, "dst": e.dst, "kind": e.kind.value} for e in dag.sorted_edges()]
    return {"format_version": FORMAT_VERSION, "problem": dag.problem, "nodes": nodes,
            "edges": edges}


def to_json(dag: ReasoningDag) -> str:
    return _dumps(to_document(dag), indent=2) + "\n"


@lru_cache(maxsize=1)
def _schema_validator() -> jsonschema.protocols.Validator:
    text = resources.files(__package__).joinpath("schemas/dot-dag-1.schema.json").read_text("utf-8")
    schema = json.loads(text)
    cls = jsonschema.validators.validator_for(schema)
    return cls(schema)


def _json_path(parts: Iterable[Any]) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in parts)


def from_document(doc: Any, check: bool = True) -> ReasoningDag:
    """Build a DAG from a parsed ``dot-dag/1`` document.

    Structural problems raise SchemaViolationError. With ``check`` (the
    default) validator findings raise IntegrityViolationError; linters pass
    ``check=False`` to report them instead.
    """
    if isinstance(doc, dict) and doc.get("format_version") != FORMAT_VERSION:
        raise SchemaViolationError("$.format_version",
                                   f"unsupported format {doc.get('format_version')!r}")
    errors = sorted(_schema_validator().iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise SchemaViolationError(_json_path(err.absolute_path), err.message)

    raw_nodes = doc["nodes"]
    by_id: dict[int, dict[str, Any]] = {}
    for i, n in enumerate(raw_nodes):
        if n["id"] in by_id:
            raise SchemaViolationError(f"$.nodes[{i}].id", f"duplicate node id {n['id']}")
        by_id[n["id"]] = n
    if sorted(by_id) != list(range(len(raw_nodes))):
        raise SchemaViolationError("$.nodes", "node ids must be dense from 0")
    nodes = []
    for nid in range(len(raw_nodes)):
        n = by_id[nid]
        kind = NodeKind(n["kind"])
        if (nid == ROOT) != (kind is NodeKind.PROBLEM):
            raise SchemaViolationError(f"$.nodes[{raw_nodes.index(n)}].kind",
                                       "node 0 must be the only problem node")
        nodes.append(Node(
            nid, kind, n["text"],
            status=PropStatus(n["status"]) if "status" in n else None,
            verdict=Verdict(n["verdict"]) if "verdict" in n else None,
            display_name=n.get("display_name"),
        ))
    if nodes[ROOT].text != doc["problem"]:
        raise SchemaViolationError("$.problem", "problem does not match the root node text")

    edges: set[Edge] = set()
    for i, e in enumerate(doc["edges"]):
        for end in ("src", "dst"):
            if e[end] not in by_id:
                raise SchemaViolationError(f"$.edges[{i}].{end}", f"unknown node {e[end]}")
        edge = Edge(e["src"], e["dst"], EdgeKind(e["kind"]))
        if edge in edges:
            raise SchemaViolationError(f"$.edges[{i}]", "duplicate edge")
        edges.add(edge)

    dag = ReasoningDag.from_parts(nodes, edges)
    violations = validate(dag) if check else []
    if violations:
        raise IntegrityViolationError(violations)
    return dag


def from_json(text: str, check: bool = True) -> ReasoningDag:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise BadJsonError(f"line {e.lineno} column {e.colno}: {e.msg}") from e
    return from_document(doc, check=check)


# -- Graphviz ------------------------------------------------------------


_KIND_LABEL = {
    NodeKind.PROBLEM: "Problem Statement",
    NodeKind.PROPOSITION: "Proposition",
    NodeKind.CRITIQUE: "Critique",
    NodeKind.SUMMARY: "Summarization",
}


def _quote(text: str) -> str:
    escaped = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{escaped}"'


def _style(node: Node) -> dict[str, str]:
    if node.kind is NodeKind.PROBLEM:
        return {"shape": "plaintext"}
    if node.kind is NodeKind.CRITIQUE:
        return {"shape": "box", "style": "filled", "color": "red", "fillcolor": "mistyrose"}
    if node.kind is NodeKind.SUMMARY:
        return {"shape": "ellipse", "style": "filled", "color": "green", "fillcolor": "palegreen"}
    if node.status is PropStatus.VERIFIED:
        return {"shape": "circle", "style": "filled", "color": "blue", "fillcolor": "lightblue"}
    if node.status is PropStatus.INVALIDATED:
        return {"shape": "circle", "style": "dashed", "color": "blue"}
    return {"shape": "circle", "color": "blue"}


def _attr_list(attrs: dict[str, str]) -> str:
    return ", ".join(f"{k}={_quote(v)}" for k, v in attrs.items())


def to_graphviz(dag: ReasoningDag, figure_style: bool = False) -> str:
    """Render the DAG as a Graphviz ``digraph``.

    With ``figure_style`` each verified proposition is drawn twice, before and
    after verification, joined through its verifying critique by an edge
    labelled "Verified".
    """
    expanded = {
        n.id for n in dag.nodes
        if figure_style and n.kind is NodeKind.PROPOSITION and n.status is PropStatus.VERIFIED
    }

    def name(node_id: int, after: bool = False) -> str:
        return f"n{node_id}v" if after and node_id in expanded else f"n{node_id}"

    lines = ["digraph reasoning {", "  rankdir=TB;", '  node [fontname="Helvetica"];']
    for n in dag.nodes:
        tag = n.display_name or str(n.id)
        if n.kind is NodeKind.PROBLEM:
            label = _KIND_LABEL[n.kind]
        else:
            label = f"{_KIND_LABEL[n.kind]}\n{tag}"
        attrs = dict(_style(n), label=label, tooltip=n.text)
        lines.append(f"  {name(n.id)} [{_attr_list(attrs)}];")
        if n.id in expanded:
            attrs = dict(_style(n), label=f"{label} (Verified)", tooltip=n.text)
            lines.append(f"  {name(n.id, after=True)} [{_attr_list(attrs)}];")

    for e in dag.sorted_edges():
        attrs: dict[str, str] = {}
        src, dst = name(e.src, after=True), name(e.dst)
        if e.kind is EdgeKind.CRITIQUE:
            src = name(e.src)
            if dag.nodes[e.dst].verdict is Verdict.VERIFY and e.src in expanded:
                lines.append(f"  {src} -> {dst};")
                lines.append(f"  {dst} -> {name(e.src, after=True)} [{_attr_list({'label': 'Verified'})}];")
                continue
            if dag.nodes[e.dst].verdict is Verdict.VERIFY:
                attrs["label"] = "Verified"
        elif e.kind is EdgeKind.REFINE:
            attrs["label"] = "Refine"
        elif e.kind is EdgeKind.CONTEXT:
            attrs["color"] = "lightblue"
        suffix = f" [{_attr_list(attrs)}]" if attrs else ""
        lines.append(f"  {src} -> {dst}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- training records ------------------------------------------------------


def to_training_record(trace: Trace) -> dict[str, Any]:
    try:
        dag = apply_trace(trace)
        stream = render_trace(trace, header=False)
    except (TraceApplyError, TraceError) as e:
        raise IntegrityViolationError([], f"trace does not build a sound DAG: {e}") from e
    violations = validate(dag)
    if violations:
        raise IntegrityViolationError(violations)
    return {"problem": trace.problem, "stream": stream, "dag": to_document(dag)}


def to_training_example(trace: Trace) -> str:
    """One JSONL line: the problem, the rendered stream and its DAG."""
    return _dumps(to_training_record(trace)) + "\n"
