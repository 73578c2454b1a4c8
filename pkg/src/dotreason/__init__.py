"""Reasoning graphs built from role-token streams of propositions, critiques and summaries."""

from .graph import (
    EdgeKind,
    NodeKind,
    PropStatus,
    ReasoningDag,
    Verdict,
    new_dag,
    node_counts,
    topological_order,
    verified_chain,
)
from .trace import (
    Role,
    RoleBlock,
    Trace,
    apply_trace,
    infer_linkage,
    parse_stream,
    render_trace,
)
from .engine import EngineConfig, Outcome, SessionResult, run_session
from .backends import HttpBackend, HttpBackendConfig, ScriptedBackend, load_script
from .validator import Violation, ViolationKind, summary_closure, validate
from .exporters import from_json, to_graphviz, to_json, to_training_example

__all__ = [
    "EdgeKind", "NodeKind", "PropStatus", "ReasoningDag", "Verdict", "new_dag", "node_counts",
    "topological_order", "verified_chain", "Role", "RoleBlock", "Trace", "apply_trace",
    "infer_linkage", "parse_stream", "render_trace", "EngineConfig", "Outcome", "SessionResult",
    "run_session", "HttpBackend", "HttpBackendConfig", "ScriptedBackend", "load_script",
    "Violation", "ViolationKind", "summary_closure", "validate", "from_json", "to_graphviz",
    "to_json", "to_training_example",
]
