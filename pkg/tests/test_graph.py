from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import DECIMAL_Q, STRAWBERRY_Q, build_golden
from dotreason.graph import (
    ROOT,
    AlreadyResolvedError,
    CycleRejectedError,
    DuplicateEdgeError,
    EdgeKind,
    EdgeTypeMismatchError,
    EmptyBasisError,
    EmptyProblemError,
    EmptyTextError,
    GraphError,
    NodeKind,
    NotACritiqueError,
    NotAPropositionError,
    OpenRefutationError,
    PropStatus,
    ReasoningDag,
    SealedDagError,
    UnknownNodeError,
    UnverifiedSummaryBasisError,
    Verdict,
    VerifyHasNoRefinementError,
    new_dag,
    node_counts,
    topological_order,
    verified_chain,
)

D, C = EdgeKind.DEDUCE, EdgeKind.CONTEXT


@pytest.mark.parametrize("question", [DECIMAL_Q, STRAWBERRY_Q])
def test_new_dag_has_only_the_problem(question):
    dag = new_dag(question)
    assert len(dag.nodes) == 1 and not dag.edges
    assert dag.nodes[0].kind is NodeKind.PROBLEM
    assert dag.nodes[0].text == question


@pytest.mark.parametrize("text", ["", "   ", "\n\t"])
def test_new_dag_rejects_blank_problem(text):
    with pytest.raises(EmptyProblemError):
        new_dag(text)


def test_first_proposition_hangs_off_root():
    dag = new_dag(DECIMAL_Q)
    p1 = dag.add_proposition("P1", [0], [D])
    assert p1 == 1
    assert dag.nodes[p1].status is PropStatus.PROPOSED
    assert [(e.src, e.dst, e.kind) for e in dag.edges] == [(0, 1, D)]


def test_proposition_with_unknown_parent():
    dag = new_dag("q")
    dag.add_proposition("a", [0], [D])
    with pytest.raises(UnknownNodeError):
        dag.add_proposition("b", [99], [D])
    assert len(dag.nodes) == 2


def test_deduce_from_a_critique_is_a_type_error():
    dag = new_dag("q")
    p = dag.add_proposition("a", [0], [D])
    c = dag.add_critique(p, Verdict.REFUTE, "no")
    with pytest.raises(EdgeTypeMismatchError):
        dag.add_proposition("b", [c], [D])
    with pytest.raises(EdgeTypeMismatchError):
        dag.add_proposition("b", [0], [EdgeKind.REFINE])
    with pytest.raises(EdgeTypeMismatchError):
        dag.add_proposition("b", [p], [C])  # context edges leave only the root


def test_p3_joins_verified_refinement_and_root():
    dag = new_dag(DECIMAL_Q)
    p1 = dag.add_proposition("P1", [0], [D])
    c1 = dag.add_critique(p1, Verdict.REFUTE, "C1")
    p1r = dag.add_refinement(c1, "P1'")
    dag.add_critique(p1r, Verdict.VERIFY, "C2")
    p3 = dag.add_proposition("P3", [p1r, 0], [D, C])
    assert sorted((e.src, e.kind) for e in dag.in_edges(p3)) == [(0, C), (p1r, D)]


def test_refute_leaves_target_proposed():
    dag = new_dag(DECIMAL_Q)
    p1 = dag.add_proposition("P1", [0], [D])
    c1 = dag.add_critique(p1, Verdict.REFUTE, "C1")
    assert dag.nodes[c1].verdict is Verdict.REFUTE
    assert dag.nodes[p1].status is PropStatus.PROPOSED
    assert dag.critique_target(c1) == p1


def test_verify_marks_target_verified():
    dag = new_dag("q")
    p = dag.add_proposition("a", [0], [D])
    dag.add_critique(p, Verdict.VERIFY, "ok")
    assert dag.nodes[p].status is PropStatus.VERIFIED


def test_critique_targets_must_be_open_propositions():
    dag = new_dag("q")
    p = dag.add_proposition("a", [0], [D])
    c = dag.add_critique(p, Verdict.VERIFY, "ok")
    with pytest.raises(AlreadyResolvedError):
        dag.add_critique(p, Verdict.REFUTE, "again")
    with pytest.raises(NotAPropositionError):
        dag.add_critique(c, Verdict.REFUTE, "x")
    with pytest.raises(NotAPropositionError):
        dag.add_critique(0, Verdict.REFUTE, "x")
    with pytest.raises(UnknownNodeError):
        dag.add_critique(42, Verdict.REFUTE, "x")


def test_refinement_invalidates_target():
    dag = new_dag(DECIMAL_Q)
    p1 = dag.add_proposition("P1", [0], [D])
    c1 = dag.add_critique(p1, Verdict.REFUTE, "C1")
    p1r = dag.add_refinement(c1, "P1'")
    assert (c1, p1r, EdgeKind.REFINE) in {(e.src, e.dst, e.kind) for e in dag.edges}
    assert dag.nodes[p1].status is PropStatus.INVALIDATED
    assert dag.nodes[p1r].status is PropStatus.PROPOSED


def test_refinement_errors():
    dag = new_dag("q")
    p = dag.add_proposition("a", [0], [D])
    ok = dag.add_critique(p, Verdict.VERIFY, "fine")
    with pytest.raises(VerifyHasNoRefinementError):
        dag.add_refinement(ok, "b")
    with pytest.raises(NotACritiqueError):
        dag.add_refinement(p, "b")
    with pytest.raises(UnknownNodeError):
        dag.add_refinement(17, "b")


def test_refuting_critique_accepts_two_refinements():
    dag = new_dag("q")
    p = dag.add_proposition("a", [0], [D])
    c = dag.add_critique(p, Verdict.REFUTE, "no")
    first = dag.add_refinement(c, "b")
    second = dag.add_refinement(c, "b again")
    refines = [e for e in dag.out_edges(c) if e.kind is EdgeKind.REFINE]
    assert {e.dst for e in refines} == {first, second}
    assert dag.nodes[p].status is PropStatus.INVALIDATED


def test_refinement_after_competing_verify_is_rejected():
    dag = new_dag("q")
    p = dag.add_proposition("a", [0], [D])
    bad = dag.add_critique(p, Verdict.REFUTE, "no")
    dag.add_critique(p, Verdict.VERIFY, "yes")
    with pytest.raises(AlreadyResolvedError):
        dag.add_refinement(bad, "b")


def test_summary_of_golden_has_in_degree_three(golden_dag):
    s = golden_dag.summaries()[0]
    assert sorted((e.src, e.kind) for e in golden_dag.in_edges(s)) == [
        (0, C), (3, EdgeKind.SUMMARIZE), (5, EdgeKind.SUMMARIZE)]


def test_summary_basis_errors():
    dag = new_dag(DECIMAL_Q)
    p1 = dag.add_proposition("P1", [0], [D])
    c1 = dag.add_critique(p1, Verdict.REFUTE, "C1")
    dag.add_refinement(c1, "P1'")
    with pytest.raises(UnverifiedSummaryBasisError):
        dag.add_summary([p1], "s")
    with pytest.raises(EmptyBasisError):
        dag.add_summary([], "s")
    with pytest.raises(UnverifiedSummaryBasisError):
        dag.add_summary([c1], "s")


def test_summary_waits_for_open_refutations():
    dag = new_dag("q")
    a = dag.add_proposition("a", [0], [D])
    dag.add_critique(a, Verdict.VERIFY, "ok")
    b = dag.add_proposition("b", [a], [D])
    dag.add_critique(b, Verdict.REFUTE, "no")
    with pytest.raises(OpenRefutationError):
        dag.add_summary([a], "s")


def test_summary_seals_the_dag(golden_dag):
    before = (list(golden_dag.nodes), set(golden_dag.edges))
    with pytest.raises(SealedDagError):
        golden_dag.add_proposition("more", [0], [D])
    with pytest.raises(SealedDagError):
        golden_dag.add_summary([3], "again")
    assert (golden_dag.nodes, golden_dag.edges) == before


def test_blank_text_rejected():
    dag = new_dag("q")
    with pytest.raises(EmptyTextError):
        dag.add_proposition("  ", [0], [D])


def test_add_edge_rejects_cycles_and_duplicates():
    dag = new_dag("q")
    a = dag.add_proposition("a", [0], [D])
    b = dag.add_proposition("b", [a], [D])
    with pytest.raises(CycleRejectedError) as err:
        dag.add_edge(b, a, D)
    assert (err.value.src, err.value.dst) == (b, a)
    with pytest.raises(CycleRejectedError):
        dag.add_edge(a, a, D)
    with pytest.raises(DuplicateEdgeError):
        dag.add_edge(a, b, D)
    with pytest.raises(EdgeTypeMismatchError):
        dag.add_edge(a, b, EdgeKind.SUMMARIZE)
    dag.add_edge(0, b, C)
    assert len(dag.edges) == 3


def test_failed_mutation_leaves_dag_untouched():
    dag = new_dag("q")
    a = dag.add_proposition("a", [0], [D])
    c = dag.add_critique(a, Verdict.REFUTE, "no")
    snapshot = (list(dag.nodes), set(dag.edges))
    with pytest.raises(GraphError):
        dag.add_proposition("b", [a, c], [D, D])
    assert (dag.nodes, dag.edges) == snapshot
    assert dag.next_id == 3


# -- linearization -------------------------------------------------------


def test_golden_topological_order(golden_dag):
    # frozen from the permutation oracle over all 8! orderings
    assert topological_order(golden_dag) == [0, 1, 2, 3, 4, 5, 6, 7]
    assert oracles.lex_min_linearization(8, oracles.pairs(golden_dag)) == [0, 1, 2, 3, 4, 5, 6, 7]


def test_topological_order_trivial_cases():
    assert topological_order(new_dag("q")) == [ROOT]
    dag = new_dag("q")
    a = dag.add_proposition("a", [0], [D])
    b = dag.add_proposition("b", [0], [D])
    assert topological_order(dag) == [0, a, b]


def test_tie_break_prefers_smallest_ready_id():
    dag = new_dag("q")
    a = dag.add_proposition("a", [0], [D])
    b = dag.add_proposition("b", [0], [D])
    c = dag.add_proposition("c", [0], [D])
    dag.add_edge(c, a, D)
    # a waits for c; b is ready first
    assert topological_order(dag) == [0, b, c, a]
    assert oracles.lex_min_linearization(4, oracles.pairs(dag)) == [0, b, c, a]


def test_verified_chain_examples(golden_dag):
    assert verified_chain(golden_dag) == [3, 5]
    assert verified_chain(new_dag("q")) == []
    dag = new_dag("q")
    a = dag.add_proposition("a", [0], [D])
    c = dag.add_critique(a, Verdict.REFUTE, "no")
    dag.add_refinement(c, "b")
    assert verified_chain(dag) == []


def test_node_counts_examples(golden_dag):
    counts = node_counts(golden_dag)
    assert counts.as_dict() == {
        "problem": 1, "proposition": 3, "critique": 3, "summary": 1,
        "proposed": 0, "verified": 2, "invalidated": 1, "edges": 10,
    }
    assert counts.total == 8
    fresh = node_counts(new_dag("q")).as_dict()
    assert fresh["problem"] == 1 and sum(fresh.values()) == 1
    dag = new_dag("q")
    dag.add_proposition("a", [0], [D])
    assert node_counts(dag).as_dict() == {
        "problem": 1, "proposition": 1, "critique": 0, "summary": 0,
        "proposed": 1, "verified": 0, "invalidated": 0, "edges": 1,
    }


def test_exhaustive_small_dags_match_permutation_oracle():
    for dag in oracles.with_extra_edges(oracles.enumerate_dags(5), 1):
        n = len(dag.nodes)
        assert topological_order(dag) == oracles.lex_min_linearization(n, oracles.pairs(dag))


# -- properties ----------------------------------------------------------


def _run_ops(rng, length):
    dag = new_dag("q")
    applied = []
    history = []
    for _ in range(length):
        op = oracles.random_op(rng, dag)
        try:
            oracles.apply_op(dag, op)
        except GraphError:
            continue
        applied.append(op)
        history.append((len(dag.nodes), len(dag.edges)))
        _check_status_machine(dag)
    return dag, applied, history


def _check_status_machine(dag):
    for n in dag.nodes:
        crits = dag.critiques_of(n.id)
        if n.status is PropStatus.VERIFIED:
            assert any(c.verdict is Verdict.VERIFY for c in crits)
        if n.status is PropStatus.INVALIDATED:
            assert any(c.verdict is Verdict.REFUTE and dag.has_refinement(c.id) for c in crits)


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False), st.integers(1, 120))
def test_random_mutations_keep_invariants(rng, length):
    dag, applied, history = _run_ops(rng, length)
    assert not oracles.has_cycle(range(len(dag.nodes)), oracles.pairs(dag))
    assert [n.id for n in dag.nodes] == list(range(len(dag.nodes)))
    assert history == sorted(history)
    for n in dag.nodes:
        assert (n.status is not None) == (n.kind is NodeKind.PROPOSITION)
        assert (n.verdict is not None) == (n.kind is NodeKind.CRITIQUE)
    order = topological_order(dag)
    pos = {v: i for i, v in enumerate(order)}
    assert sorted(order) == list(range(len(dag.nodes)))
    assert all(pos[e.src] < pos[e.dst] for e in dag.edges)
    # replaying the accepted operations rebuilds an equal DAG with the same order
    again = new_dag("q")
    for op in applied:
        oracles.apply_op(again, op)
    assert again == dag
    assert topological_order(again) == order


def test_golden_is_reproducible():
    assert build_golden() == build_golden()
    assert topological_order(build_golden()) == topological_order(build_golden())
