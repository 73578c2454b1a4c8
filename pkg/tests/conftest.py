from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dotreason.graph import EdgeKind, ReasoningDag, Verdict, new_dag  # noqa: E402
from dotreason.trace import parse_stream  # noqa: E402

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

DECIMAL_Q = "Which one is larger, 9.11 or 9.8?"
STRAWBERRY_Q = "How many 'r's in the word 'strawberry'?"


def build_golden() -> ReasoningDag:
    """The reference diagram assembled directly through the graph API."""
    dag = new_dag(DECIMAL_Q)
    p1 = dag.add_proposition("9.11 is larger than 9.8 since 11 > 8.", [0], [EdgeKind.DEDUCE])
    c1 = dag.add_critique(p1, Verdict.REFUTE, "Fractional parts compared as integers.")
    p1r = dag.add_refinement(c1, "At the tenths digit 8 > 1, so 9.8 is larger.")
    dag.add_critique(p1r, Verdict.VERIFY, "Valid: the tenths digit decides.")
    p3 = dag.add_proposition("9.80 - 9.11 = 0.69 > 0.", [p1r, 0], [EdgeKind.DEDUCE, EdgeKind.CONTEXT])
    dag.add_critique(p3, Verdict.VERIFY, "Verified: the difference is positive.")
    dag.add_summary([p1r, p3], "9.8 is larger.", include_context=True)
    return dag


@pytest.fixture
def golden_dag() -> ReasoningDag:
    return build_golden()


@pytest.fixture
def golden_source() -> str:
    return (FIXTURES / "golden.trace").read_text("utf-8")


@pytest.fixture
def golden_trace(golden_source):
    return parse_stream(golden_source)
