from __future__ import annotations

import pytest
from hypothesis import given, settings

from conftest import DECIMAL_Q
from dotreason.graph import AlreadyResolvedError, NodeKind, PropStatus, node_counts
from dotreason.trace import (
    BodyContainsTagError,
    InferOptions,
    ParseError,
    ParseErrorKind,
    Role,
    RoleBlock,
    Trace,
    TraceApplyError,
    UnresolvedTraceError,
    apply_trace,
    dag_to_trace,
    dump_trace_file,
    infer_linkage,
    infer_linkage_lenient,
    parse_stream,
    parse_stream_lenient,
    render_trace,
)
from strategies import bare_streams, resolved_traces

K = ParseErrorKind


def _error(source: str, **kw) -> ParseError:
    with pytest.raises(ParseError) as err:
        parse_stream(source, **kw)
    return err.value


# -- parsing -------------------------------------------------------------


def test_single_block():
    src = "<proposer id=p1>Compare integer parts.</proposer>"
    t = parse_stream(src)
    assert t.problem == ""
    assert t.blocks == (RoleBlock(Role.PROPOSER, {"id": "p1"}, "Compare integer parts."),)
    assert t.blocks[0].span == (0, len(src))


def test_unterminated_block_points_at_last_tag():
    src = "<proposer>A</proposer><critic>"
    err = _error(src)
    assert err.kind is K.UNTERMINATED_BLOCK
    assert err.position == src.rindex("<critic>")


def test_unknown_reference():
    err = _error("<critic of=p9 verdict=verify>ok</critic>")
    assert err.kind is K.UNKNOWN_REFERENCE
    assert err.position == 0


@pytest.mark.parametrize(
    "source, kind",
    [
        ("<proposer>a<critic>b</critic></proposer>", K.NESTED_BLOCK),
        ("<proposer>a</critic>", K.UNTERMINATED_BLOCK),
        ("loose words <proposer>a</proposer>", K.UNKNOWN_TAG),
        ("<proposer>a</proposer><thinker>x</thinker>", K.UNKNOWN_TAG),
        ("<proposer>a</proposer></critic>", K.UNKNOWN_TAG),
        ("<proposerx>a</proposerx>", K.UNKNOWN_TAG),
        ("<proposer of=p1>a</proposer>", K.BAD_ATTRIBUTE),
        ("<proposer id>a</proposer>", K.BAD_ATTRIBUTE),
        ("<proposer id=p1 id=p2>a</proposer>", K.BAD_ATTRIBUTE),
        ("<proposer>a</proposer><critic verdict=maybe>b</critic>", K.BAD_ATTRIBUTE),
        ("<proposer id=p1 from=root refines=c1>a</proposer>", K.BAD_ATTRIBUTE),
        ("<proposer id=root>a</proposer>", K.BAD_ATTRIBUTE),
        ("<proposer id=p1>a</proposer><proposer id=p1>b</proposer>", K.DUPLICATE_ID),
        ("<proposer id=p1>a</proposer><critic of=p1 id=c1>b</critic>"
         "<proposer refines=p1>c</proposer>", K.UNKNOWN_REFERENCE),
        ("<proposer from=p2>a</proposer>", K.UNKNOWN_REFERENCE),
    ],
)
def test_strict_error_kinds(source, kind):
    err = _error(source)
    assert err.kind is kind
    assert 0 <= err.position < len(source.encode())


def test_bodies_are_trimmed_and_may_hold_angle_brackets():
    t = parse_stream("<proposer>\n  a < b and 3 > 2  \n</proposer>")
    assert t.blocks[0].body == "a < b and 3 > 2"


def test_header_line():
    t = parse_stream(f"#problem: {DECIMAL_Q}\n\n<proposer>x</proposer>\n")
    assert t.problem == DECIMAL_Q and len(t.blocks) == 1


def test_positions_are_byte_offsets():
    src = "<proposer>é</proposer>  <critic>"
    err = _error(src)
    assert err.position == src.encode().rindex(b"<critic>")


def test_lenient_collects_every_error():
    src = "junk <proposer id=p1>a</proposer><critic of=zz>b</critic><proposer>c"
    trace, errors = parse_stream_lenient(src)
    assert [e.kind for e in errors] == [K.UNKNOWN_TAG, K.UNTERMINATED_BLOCK, K.UNKNOWN_REFERENCE]
    # the bad reference is dropped; the block itself survives
    assert [b.role for b in trace.blocks] == [Role.PROPOSER, Role.CRITIC, Role.PROPOSER]
    assert "of" not in trace.blocks[1].attrs
    assert parse_stream(src, strict=False) == trace


def test_spans_are_increasing_and_disjoint(golden_source):
    spans = [b.span for b in parse_stream(golden_source).blocks]
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        assert a0 < a1 <= b0 < b1
    raw = golden_source.encode()
    assert raw[spans[0][0]:spans[0][1]].startswith(b"<proposer id=p1")


# -- inference -------------------------------------------------------------


HEAD = "#problem: q\n\n"
BARE = (HEAD + "<proposer>A</proposer><critic>wrong, sign error</critic><proposer>A'</proposer>"
        "<critic>valid</critic><summarizer>done</summarizer>")


def test_bare_stream_resolution():
    t = infer_linkage(parse_stream(BARE))
    assert [b.attrs for b in t.blocks] == [
        {"id": "p1", "from": "root"},
        {"id": "c1", "of": "p1", "verdict": "refute"},
        {"id": "p2", "refines": "c1"},
        {"id": "c2", "of": "p2", "verdict": "verify"},
        {"id": "s1", "uses": "p2,root"},
    ]
    no_ctx = infer_linkage(parse_stream(BARE), InferOptions(include_context=False))
    assert no_ctx.blocks[-1].attrs["uses"] == "p2"


def test_bare_resolution_builds_the_explicit_dag():
    explicit = (
        HEAD + "<proposer id=p1 from=root>A</proposer>"
        "<critic id=c1 of=p1 verdict=refute>wrong, sign error</critic>"
        "<proposer id=p2 refines=c1>A'</proposer>"
        "<critic id=c2 of=p2 verdict=verify>valid</critic>"
        "<summarizer id=s1 uses=p2,root>done</summarizer>"
    )
    assert apply_trace(infer_linkage(parse_stream(BARE))) == apply_trace(parse_stream(explicit))


def test_new_line_descends_from_latest_verified():
    src = ("<proposer>a</proposer><critic>Valid</critic>"
           "<proposer>b</proposer><critic>verified.</critic><proposer>c</proposer>")
    t = infer_linkage(parse_stream(src))
    assert t.blocks[2].attrs["from"] == "p1,root"
    assert t.blocks[4].attrs["from"] == "p2,root"
    t = infer_linkage(parse_stream(src), InferOptions(include_context=False))
    assert t.blocks[4].attrs["from"] == "p2"


def test_custom_verify_markers():
    src = "<proposer>a</proposer><critic>Correct, well done</critic>"
    assert infer_linkage(parse_stream(src)).blocks[1].attrs["verdict"] == "refute"
    opts = InferOptions(verify_markers=("correct",))
    assert infer_linkage(parse_stream(src), opts).blocks[1].attrs["verdict"] == "verify"


def test_explicit_ids_are_kept_and_counters_skip_them():
    src = "<proposer id=p2>a</proposer><critic>no</critic><proposer>b</proposer>"
    t = infer_linkage(parse_stream(src))
    assert [b.attrs["id"] for b in t.blocks] == ["p2", "c1", "p1"]


@pytest.mark.parametrize(
    "source, kind",
    [
        ("<critic>bad</critic>", K.DANGLING_CRITIQUE),
        ("<proposer>a</proposer><critic>no</critic><summarizer>s</summarizer>",
         K.SUMMARY_BEFORE_VERIFICATION),
        ("<proposer>a</proposer><critic id=c1>valid</critic><proposer refines=c1>b</proposer>",
         K.DANGLING_REFINEMENT),
        ("<proposer>a</proposer><critic>valid</critic><critic>more</critic>",
         K.DANGLING_CRITIQUE),
    ],
)
def test_inference_errors(source, kind):
    with pytest.raises(ParseError) as err:
        infer_linkage(parse_stream(source))
    assert err.value.kind is kind


def test_lenient_inference_drops_unresolvable_blocks():
    t, errors = infer_linkage_lenient(parse_stream("<critic>x</critic><proposer>a</proposer>"))
    assert [e.kind for e in errors] == [K.DANGLING_CRITIQUE]
    assert [b.attrs for b in t.blocks] == [{"id": "p1", "from": "root"}]


def test_inference_is_pure():
    parsed = parse_stream(BARE)
    assert infer_linkage(parsed) == infer_linkage(parsed)
    assert parse_stream(BARE) == parsed


# -- rendering -----------------------------------------------------------


def test_render_single_block():
    t = Trace("", (RoleBlock(Role.PROPOSER, {"from": "root", "id": "p1"}, "Compare integer parts."),))
    assert render_trace(t) == "<proposer id=p1 from=root>Compare integer parts.</proposer>"


def test_render_rejects_unresolved_and_tag_bodies():
    with pytest.raises(UnresolvedTraceError):
        render_trace(Trace("", (RoleBlock(Role.CRITIC, {"id": "c1", "verdict": "refute"}, "x"),)))
    leaky = RoleBlock(Role.PROPOSER, {"id": "p1", "from": "root"}, "see <critic> here")
    with pytest.raises(BodyContainsTagError):
        render_trace(Trace("", (leaky,)))
    assert issubclass(BodyContainsTagError, UnresolvedTraceError)


def test_golden_file_is_canonical(golden_source, golden_trace):
    assert golden_trace.resolved
    assert dump_trace_file(golden_trace) == golden_source
    assert parse_stream(render_trace(golden_trace)) == golden_trace


# -- folding -------------------------------------------------------------


def test_apply_golden(golden_trace):
    dag = apply_trace(golden_trace)
    counts = node_counts(dag)
    assert counts.kinds == {NodeKind.PROBLEM: 1, NodeKind.PROPOSITION: 3,
                            NodeKind.CRITIQUE: 3, NodeKind.SUMMARY: 1}
    assert counts.statuses[PropStatus.VERIFIED] == 2
    assert [n.display_name for n in dag.nodes[1:]] == ["p1", "c1", "p2", "c2", "p3", "c3", "s1"]


def test_apply_wraps_graph_errors_with_span():
    src = (HEAD + "<proposer id=p1 from=root>a</proposer>"
           "<critic id=c1 of=p1 verdict=verify>valid</critic>"
           "<critic id=c2 of=p1 verdict=refute>no</critic>")
    t = parse_stream(src)
    with pytest.raises(TraceApplyError) as err:
        apply_trace(t)
    assert isinstance(err.value.error, AlreadyResolvedError)
    assert err.value.index == 2
    assert err.value.span == (src.index("<critic id=c2"), len(src))


def test_apply_empty_trace():
    dag = apply_trace(Trace(DECIMAL_Q))
    assert len(dag.nodes) == 1 and not dag.edges


def test_dag_to_trace_recovers_golden(golden_trace):
    assert dag_to_trace(apply_trace(golden_trace)) == golden_trace


# -- properties ----------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(resolved_traces())
def test_round_trip(trace):
    text = render_trace(trace)
    back = parse_stream(text)
    assert back == trace
    spans = [b.span for b in back.blocks]
    assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))


@settings(max_examples=200, deadline=None)
@given(bare_streams())
def test_inference_consistency(stream):
    inferred = infer_linkage(parse_stream(stream))
    explicit = render_trace(inferred)
    assert apply_trace(inferred) == apply_trace(parse_stream(explicit))
    assert infer_linkage(parse_stream(stream)) == inferred
