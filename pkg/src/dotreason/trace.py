"""Role-token stream format: parsing, linkage inference, rendering, folding.

A stream is a flat sequence of role blocks::

    #problem: Which one is larger, 9.11 or 9.8?

    <proposer id=p1 from=root>9.11 is larger since 11 > 8.</proposer>
    <critic id=c1 of=p1 verdict=refute>Compare digit by digit.</critic>

Attributes are optional in the raw form a model emits; ``infer_linkage``
fills them in from block order. ``root`` names the problem statement in
``from`` and ``uses`` lists.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .graph import (
    ABANDONMENT_NOTE,
    ROOT,
    EdgeKind,
    GraphError,
    NodeId,
    NodeKind,
    ReasoningDag,
    Verdict,
)


class Role(str, enum.Enum):
    PROPOSER = "proposer"
    CRITIC = "critic"
    SUMMARIZER = "summarizer"

    @property
    def open_tag(self) -> str:
        return f"<{self.value}>"

    @property
    def close_tag(self) -> str:
        return f"</{self.value}>"


CLOSE_TAGS: tuple[str, ...] = tuple(r.close_tag for r in Role)

ATTR_ORDER = ("id", "from", "of", "refines", "verdict", "uses")

LEGAL_KEYS: dict[Role, frozenset[str]] = {
    Role.PROPOSER: frozenset({"id", "from", "refines"}),
    Role.CRITIC: frozenset({"id", "of", "verdict"}),
    Role.SUMMARIZER: frozenset({"id", "uses"}),
}

ROOT_REF = "root"
DEFAULT_VERIFY_MARKERS: tuple[str, ...] = ("valid", "verified")

_ID = re.compile(r"[A-Za-z_][A-Za-z0-9_.'-]*\Z")
_ROLEISH = re.compile(r"</?(?:proposer|critic|summarizer)")
_TAG = re.compile(r"<(/?)(proposer|critic|summarizer)(?=[\s>])([^<>]*)>")
_ID_PREFIX = {Role.PROPOSER: "p", Role.CRITIC: "c", Role.SUMMARIZER: "s"}


def contains_role_tag(text: str) -> bool:
    return _ROLEISH.search(text) is not None


class ParseErrorKind(str, enum.Enum):
    UNTERMINATED_BLOCK = "UnterminatedBlock"
    UNKNOWN_TAG = "UnknownTag"
    NESTED_BLOCK = "NestedBlock"
    DANGLING_CRITIQUE = "DanglingCritique"
    DANGLING_REFINEMENT = "DanglingRefinement"
    BAD_ATTRIBUTE = "BadAttribute"
    DUPLICATE_ID = "DuplicateId"
    UNKNOWN_REFERENCE = "UnknownReference"
    SUMMARY_BEFORE_VERIFICATION = "SummaryBeforeVerification"


class ParseError(Exception):
    def __init__(self, kind: ParseErrorKind, position: int, message: str) -> None:
        self.kind = kind
        self.position = position
        self.message = message
        super().__init__(f"{kind.value} at byte {position}: {message}")


class TraceError(Exception):
    """A trace cannot be rendered or converted."""


class UnresolvedTraceError(TraceError):
    pass


class BodyContainsTagError(UnresolvedTraceError):
    pass


class TraceApplyError(Exception):
    """A block could not be folded into the DAG."""

    def __init__(self, error: Exception, block: RoleBlock, index: Optional[int]) -> None:
        self.error = error
        self.block = block
        self.index = index
        self.span = block.span
        where = f"block {index}" if index is not None else "block"
        if block.span is not None:
            where += f" (bytes {block.span[0]}-{block.span[1]})"
        super().__init__(f"{where}: {type(error).__name__}: {error}")


@dataclass(frozen=True)
class RoleBlock:
    role: Role
    attrs: dict[str, str] = field(default_factory=dict)
    body: str = ""
    span: Optional[tuple[int, int]] = field(default=None, compare=False)

    def get(self, key: str) -> Optional[str]:
        return self.attrs.get(key)

    def refs(self, key: str) -> list[str]:
        value = self.attrs.get(key)
        return value.split(",") if value else []

    def with_attrs(self, **updates: str) -> RoleBlock:
        attrs = dict(self.attrs)
        attrs.update(updates)
        return replace(self, attrs={k: attrs[k] for k in ATTR_ORDER if k in attrs})


@dataclass(frozen=True)
class Trace:
    problem: str
    blocks: tuple[RoleBlock, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def append(self, block: RoleBlock) -> Trace:
        return Trace(self.problem, self.blocks + (block,))

    @property
    def resolved(self) -> bool:
        return all(not _missing_attrs(b) for b in self.blocks)


# -- parsing -----------------------------------------------------------


class _Scanner:
    def __init__(self, source: str, strict: bool) -> None:
        self.src = source
        self.strict = strict
        self.errors: list[ParseError] = []
        self._ascii = source.isascii()

    def pos(self, index: int) -> int:
        if self._ascii:
            return index
        return len(self.src[:index].encode("utf-8"))

    def fail(self, kind: ParseErrorKind, index: int, message: str) -> None:
        err = ParseError(kind, self.pos(min(index, max(len(self.src) - 1, 0))), message)
        if self.strict:
            raise err
        self.errors.append(err)

    def header(self) -> tuple[str, int]:
        if not self.src.startswith("#problem:"):
            return "", 0
        end = self.src.find("\n")
        if end < 0:
            return self.src[len("#problem:"):].strip(), len(self.src)
        return self.src[len("#problem:"):end].strip(), end + 1

    def attrs(self, role: Role, text: str, at: int) -> dict[str, str]:
        out: dict[str, str] = {}
        for tok in text.split():
            key, sep, val = tok.partition("=")
            if not sep or not key or not val:
                self.fail(ParseErrorKind.BAD_ATTRIBUTE, at, f"malformed attribute {tok!r}")
                continue
            if key not in LEGAL_KEYS[role]:
                self.fail(ParseErrorKind.BAD_ATTRIBUTE, at,
                          f"attribute {key!r} is not allowed on <{role.value}>")
                continue
            if key in out:
                self.fail(ParseErrorKind.BAD_ATTRIBUTE, at, f"duplicate attribute {key!r}")
                continue
            problem = _check_value(key, val)
            if problem:
                self.fail(ParseErrorKind.BAD_ATTRIBUTE, at, problem)
                continue
            out[key] = val
        if "from" in out and "refines" in out:
            self.fail(ParseErrorKind.BAD_ATTRIBUTE, at, "a proposer takes 'from' or 'refines', not both")
            del out["from"]
        return {k: out[k] for k in ATTR_ORDER if k in out}

    def blocks(self, start: int) -> list[RoleBlock]:
        src = self.src
        found: list[RoleBlock] = []
        # open block: (role, attrs, tag start, body start)
        cur: Optional[tuple[Role, dict[str, str], int, int]] = None
        i = start
        while True:
            m = _ROLEISH.search(src, i)
            if cur is None:
                seg_end = m.start() if m else len(src)
                stray = src[i:seg_end]
                if stray.strip():
                    at = i + len(stray) - len(stray.lstrip())
                    what = "unknown tag" if stray.lstrip().startswith("<") else "text"
                    self.fail(ParseErrorKind.UNKNOWN_TAG, at, f"{what} outside any role block")
            if m is None:
                break
            tag = _TAG.match(src, m.start())
            if tag is None:
                self.fail(ParseErrorKind.UNKNOWN_TAG, m.start(), "malformed role tag")
                i = m.end()
                continue
            role = Role(tag.group(2))
            if tag.group(1):
                if tag.group(3).strip():
                    self.fail(ParseErrorKind.UNKNOWN_TAG, tag.start(), "close tag with attributes")
                if cur is None:
                    self.fail(ParseErrorKind.UNKNOWN_TAG, tag.start(),
                              f"</{role.value}> without an open block")
                else:
                    if role is not cur[0]:
                        self.fail(ParseErrorKind.UNTERMINATED_BLOCK, cur[2],
                                  f"<{cur[0].value}> closed by </{role.value}>")
                    found.append(self._block(cur, tag.start(), tag.end()))
                    cur = None
            else:
                if cur is not None:
                    self.fail(ParseErrorKind.NESTED_BLOCK, tag.start(),
                              f"<{role.value}> opened inside <{cur[0].value}>")
                    found.append(self._block(cur, tag.start(), tag.start()))
                cur = (role, self.attrs(role, tag.group(3), tag.start()), tag.start(), tag.end())
            i = tag.end()
        if cur is not None:
            self.fail(ParseErrorKind.UNTERMINATED_BLOCK, cur[2], f"<{cur[0].value}> is never closed")
            found.append(self._block(cur, len(src), len(src)))
        return found

    def _block(self, cur: tuple[Role, dict[str, str], int, int], body_end: int, end: int) -> RoleBlock:
        role, attrs, tag_start, body_start = cur
        body = self.src[body_start:body_end].strip()
        return RoleBlock(role, attrs, body, (self.pos(tag_start), self.pos(end)))

    def references(self, blocks: list[RoleBlock]) -> list[RoleBlock]:
        """Check ids and backward references; in lenient mode drop bad attributes."""
        roles: dict[str, Role] = {}
        out: list[RoleBlock] = []
        for b in blocks:
            at = b.span[0] if b.span else 0
            attrs = dict(b.attrs)
            bid = attrs.get("id")
            if bid is not None:
                if bid == ROOT_REF or bid in roles:
                    self.fail(ParseErrorKind.DUPLICATE_ID, at, f"id {bid!r} is already defined")
                    del attrs["id"]
            for key, want in (("of", Role.PROPOSER), ("refines", Role.CRITIC),
                              ("from", Role.PROPOSER), ("uses", Role.PROPOSER)):
                if key not in attrs:
                    continue
                for ref in attrs[key].split(","):
                    if ref == ROOT_REF and key in ("from", "uses"):
                        continue
                    if roles.get(ref) is not want:
                        self.fail(ParseErrorKind.UNKNOWN_REFERENCE, at,
                                  f"{key}={ref} names no earlier {want.value} block")
                        del attrs[key]
                        break
            if "id" in attrs:
                roles[attrs["id"]] = b.role
            out.append(replace(b, attrs=attrs) if attrs != b.attrs else b)
        return out


def _check_value(key: str, val: str) -> Optional[str]:
    if key == "verdict":
        if val not in (Verdict.VERIFY.value, Verdict.REFUTE.value):
            return f"verdict must be 'verify' or 'refute', got {val!r}"
        return None
    refs = val.split(",") if key in ("from", "uses") else [val]
    for ref in refs:
        if not _ID.match(ref):
            return f"bad identifier {ref!r} in {key}="
        if ref == ROOT_REF and key in ("id", "of", "refines"):
            return f"{key}= cannot name the problem root"
    if len(set(refs)) != len(refs):
        return f"repeated identifier in {key}="
    return None


def parse_stream(source: str, *, strict: bool = True) -> Trace:
    """Parse a role-token stream; raise the first ParseError.

    With ``strict=False`` errors are swallowed; use ``parse_stream_lenient``
    to see them.
    """
    scanner = _Scanner(source, strict)
    problem, start = scanner.header()
    blocks = scanner.references(scanner.blocks(start))
    return Trace(problem, tuple(blocks))


def parse_stream_lenient(source: str) -> tuple[Trace, list[ParseError]]:
    scanner = _Scanner(source, strict=False)
    problem, start = scanner.header()
    blocks = scanner.references(scanner.blocks(start))
    return Trace(problem, tuple(blocks)), scanner.errors


# -- linkage inference ---------------------------------------------------


@dataclass(frozen=True)
class InferOptions:
    verify_markers: tuple[str, ...] = DEFAULT_VERIFY_MARKERS
    include_context: bool = True

    def verdict_for(self, body: str) -> Verdict:
        text = body.strip().lower()
        if any(text.startswith(m.lower()) for m in self.verify_markers):
            return Verdict.VERIFY
        return Verdict.REFUTE


class _Linker:
    def __init__(self, trace: Trace, options: InferOptions, strict: bool) -> None:
        self.options = options
        self.strict = strict
        self.errors: list[ParseError] = []
        self.taken = {b.attrs["id"] for b in trace.blocks if "id" in b.attrs}
        self.counters = {r: 0 for r in Role}
        self.props: list[str] = []
        # proposer id -> "open" | "verified" | "invalidated" | "abandoned"
        self.state: dict[str, str] = {}
        self.verified_order: list[str] = []
        self.critics: dict[str, tuple[str, Verdict, str]] = {}
        self.prev: Optional[RoleBlock] = None

    def fail(self, kind: ParseErrorKind, block: RoleBlock, message: str) -> None:
        err = ParseError(kind, block.span[0] if block.span else 0, message)
        if self.strict:
            raise err
        self.errors.append(err)

    def fresh_id(self, role: Role) -> str:
        while True:
            self.counters[role] += 1
            cand = f"{_ID_PREFIX[role]}{self.counters[role]}"
            if cand not in self.taken:
                self.taken.add(cand)
                return cand

    def link(self, block: RoleBlock) -> Optional[RoleBlock]:
        handler = {
            Role.PROPOSER: self._proposer,
            Role.CRITIC: self._critic,
            Role.SUMMARIZER: self._summarizer,
        }[block.role]
        resolved = handler(block)
        if resolved is not None:
            self.prev = resolved
        return resolved

    def _assign_id(self, block: RoleBlock) -> dict[str, str]:
        if "id" in block.attrs:
            return {}
        return {"id": self.fresh_id(block.role)}

    def _proposer(self, block: RoleBlock) -> Optional[RoleBlock]:
        updates: dict[str, str] = {}
        refines = block.get("refines")
        if refines is None and block.get("from") is None:
            prev = self.prev
            if (prev is not None and prev.role is Role.CRITIC
                    and prev.get("verdict") == Verdict.REFUTE.value
                    and prev.body != ABANDONMENT_NOTE):
                refines = prev.attrs["id"]
                updates["refines"] = refines
            elif self.verified_order:
                parents = [self.verified_order[-1]]
                if self.options.include_context:
                    parents.append(ROOT_REF)
                updates["from"] = ",".join(parents)
            else:
                updates["from"] = ROOT_REF
        if refines is not None:
            info = self.critics.get(refines)
            if info is None or info[1] is not Verdict.REFUTE:
                self.fail(ParseErrorKind.DANGLING_REFINEMENT, block,
                          f"refines={refines} does not name a refuting critique")
                return None
            target = info[0]
            if self.state.get(target) == "open":
                self.state[target] = "invalidated"
        updates.update(self._assign_id(block))
        out = block.with_attrs(**updates)
        pid = out.attrs["id"]
        self.props.append(pid)
        self.state[pid] = "open"
        return out

    def _critic(self, block: RoleBlock) -> Optional[RoleBlock]:
        updates: dict[str, str] = {}
        target = block.get("of")
        if target is None:
            target = next((p for p in reversed(self.props) if self.state[p] == "open"), None)
            if target is None:
                self.fail(ParseErrorKind.DANGLING_CRITIQUE, block,
                          "critique with no open proposition to target")
                return None
            updates["of"] = target
        verdict_text = block.get("verdict")
        verdict = Verdict(verdict_text) if verdict_text else self.options.verdict_for(block.body)
        if verdict_text is None:
            updates["verdict"] = verdict.value
        updates.update(self._assign_id(block))
        out = block.with_attrs(**updates)
        if self.state.get(target) == "open":
            if verdict is Verdict.VERIFY:
                self.state[target] = "verified"
                self.verified_order.append(target)
            elif block.body == ABANDONMENT_NOTE:
                self.state[target] = "abandoned"
        self.critics[out.attrs["id"]] = (target, verdict, block.body)
        return out

    def _summarizer(self, block: RoleBlock) -> Optional[RoleBlock]:
        updates: dict[str, str] = {}
        if block.get("uses") is None:
            basis = [p for p in self.props if self.state[p] == "verified"]
            if not basis:
                self.fail(ParseErrorKind.SUMMARY_BEFORE_VERIFICATION, block,
                          "summary requested before any proposition was verified")
                return None
            if self.options.include_context:
                basis.append(ROOT_REF)
            updates["uses"] = ",".join(basis)
        updates.update(self._assign_id(block))
        return block.with_attrs(**updates)


def infer_linkage(trace: Trace, options: Optional[InferOptions] = None) -> Trace:
    """Fill in missing ids and links from block order.

    Rules, applied block by block:

    * a critic without ``of`` targets the latest proposition that is neither
      verified, invalidated nor abandoned;
    * a critic without ``verdict`` verifies iff its body starts with one of
      the verify markers;
    * a proposer right after a refuting critic refines it;
    * any other bare proposer descends from the most recently verified
      proposition (plus ``root`` as context), or from ``root`` alone;
    * a bare summarizer uses every verified proposition.
    """
    linker = _Linker(trace, options or InferOptions(), strict=True)
    blocks = [linker.link(b) for b in trace.blocks]
    return Trace(trace.problem, tuple(b for b in blocks if b is not None))


def infer_linkage_lenient(
    trace: Trace, options: Optional[InferOptions] = None
) -> tuple[Trace, list[ParseError]]:
    """Like ``infer_linkage`` but drops unresolvable blocks and reports them."""
    linker = _Linker(trace, options or InferOptions(), strict=False)
    blocks = [linker.link(b) for b in trace.blocks]
    return Trace(trace.problem, tuple(b for b in blocks if b is not None)), linker.errors


# -- rendering -----------------------------------------------------------


def _missing_attrs(block: RoleBlock) -> list[str]:
    a = block.attrs
    missing = [] if "id" in a else ["id"]
    if block.role is Role.PROPOSER and "from" not in a and "refines" not in a:
        missing.append("from/refines")
    elif block.role is Role.CRITIC:
        missing += [k for k in ("of", "verdict") if k not in a]
    elif block.role is Role.SUMMARIZER and "uses" not in a:
        missing.append("uses")
    return missing


def render_block(block: RoleBlock) -> str:
    missing = _missing_attrs(block)
    if missing:
        raise UnresolvedTraceError(
            f"<{block.role.value}> block is missing {', '.join(missing)}"
        )
    if contains_role_tag(block.body):
        raise BodyContainsTagError(f"<{block.role.value}> body contains a role tag")
    attrs = " ".join(f"{k}={block.attrs[k]}" for k in ATTR_ORDER if k in block.attrs)
    return f"<{block.role.value} {attrs}>{block.body}</{block.role.value}>"


def render_trace(trace: Trace, *, header: bool = True) -> str:
    """Canonical text form: optional ``#problem:`` header, one block per line."""
    lines = [render_block(b) for b in trace.blocks]
    text = "\n".join(lines)
    if header and trace.problem:
        if "\n" in trace.problem:
            raise TraceError("problem statement must be a single line")
        return f"#problem: {trace.problem}\n\n{text}"
    return text


def dump_trace_file(trace: Trace) -> str:
    """Stored-file form: header, blank line, blocks, trailing newline."""
    return render_trace(trace) + "\n"


# -- folding into a DAG ----------------------------------------------------


def _parent_kinds(refs: Sequence[str]) -> list[EdgeKind]:
    # root is a plain derivation when it is the only parent, context otherwise
    if list(refs) == [ROOT_REF]:
        return [EdgeKind.DEDUCE]
    return [EdgeKind.CONTEXT if r == ROOT_REF else EdgeKind.DEDUCE for r in refs]


class TraceBuilder:
    """Folds resolved blocks into a ReasoningDag one at a time."""

    def __init__(self, problem: str) -> None:
        self.dag = ReasoningDag(problem)
        self.ids: dict[str, NodeId] = {ROOT_REF: ROOT}
        self.count = 0

    def node_of(self, ref: str) -> NodeId:
        try:
            return self.ids[ref]
        except KeyError:
            raise UnresolvedTraceError(f"reference {ref!r} names no earlier block") from None

    def apply(self, block: RoleBlock) -> NodeId:
        index = self.count
        try:
            node = self._apply(block)
        except (GraphError, TraceError) as e:
            raise TraceApplyError(e, block, index) from e
        self.count += 1
        return node

    def _apply(self, block: RoleBlock) -> NodeId:
        missing = _missing_attrs(block)
        if missing:
            raise UnresolvedTraceError(f"block is missing {', '.join(missing)}")
        bid = block.attrs["id"]
        if bid in self.ids:
            raise UnresolvedTraceError(f"duplicate id {bid!r}")
        if block.role is Role.PROPOSER:
            if "refines" in block.attrs:
                node = self.dag.add_refinement(self.node_of(block.attrs["refines"]), block.body,
                                               display_name=bid)
            else:
                refs = block.refs("from")
                node = self.dag.add_proposition(block.body, [self.node_of(r) for r in refs],
                                                _parent_kinds(refs), display_name=bid)
        elif block.role is Role.CRITIC:
            node = self.dag.add_critique(self.node_of(block.attrs["of"]),
                                         Verdict(block.attrs["verdict"]), block.body,
                                         display_name=bid)
        else:
            refs = block.refs("uses")
            basis = [self.node_of(r) for r in refs if r != ROOT_REF]
            node = self.dag.add_summary(basis, block.body, include_context=ROOT_REF in refs,
                                        display_name=bid)
        self.ids[bid] = node
        return node


def apply_trace(trace: Trace) -> ReasoningDag:
    builder = TraceBuilder(trace.problem)
    for block in trace.blocks:
        builder.apply(block)
    return builder.dag


def dag_to_trace(dag: ReasoningDag) -> Trace:
    """Recover the resolved trace that builds ``dag`` in node-id order.

    Raises TraceError when the DAG uses edges no block can express (for
    example a Deduce edge pointing at an older node).
    """
    names: dict[NodeId, str] = {ROOT: ROOT_REF}
    used: set[str] = {ROOT_REF}
    counters = {r: 0 for r in Role}
    blocks: list[RoleBlock] = []
    role_of = {NodeKind.PROPOSITION: Role.PROPOSER, NodeKind.CRITIQUE: Role.CRITIC,
               NodeKind.SUMMARY: Role.SUMMARIZER}
    for node in dag.nodes[1:]:
        if node.kind not in role_of:
            raise TraceError(f"node {node.id} is a second problem node")
        role = role_of[node.kind]
        name = node.display_name
        if not name or not _ID.match(name) or name in used:
            while True:
                counters[role] += 1
                name = f"{_ID_PREFIX[role]}{counters[role]}"
                if name not in used:
                    break
        used.add(name)
        ins = sorted(dag.in_edges(node.id), key=lambda e: e.src)
        if any(e.src >= node.id for e in ins):
            raise TraceError(f"node {node.id} has a parent created after it")
        attrs: dict[str, str] = {"id": name}
        if role is Role.PROPOSER:
            if any(e.kind is EdgeKind.REFINE for e in ins):
                if len(ins) != 1:
                    raise TraceError(f"refinement {node.id} has extra parents")
                attrs["refines"] = names[ins[0].src]
            else:
                refs = [names[e.src] for e in ins if e.src != ROOT]
                refs += [ROOT_REF] if any(e.src == ROOT for e in ins) else []
                if not refs or _parent_kinds(refs) != [
                    next(e.kind for e in ins if names[e.src] == r) for r in refs
                ]:
                    raise TraceError(f"proposition {node.id} has parents no block can express")
                attrs["from"] = ",".join(refs)
        elif role is Role.CRITIC:
            if len(ins) != 1 or ins[0].kind is not EdgeKind.CRITIQUE or node.verdict is None:
                raise TraceError(f"critique {node.id} does not have exactly one target")
            attrs["of"] = names[ins[0].src]
            attrs["verdict"] = node.verdict.value
        else:
            refs = [names[e.src] for e in ins if e.kind is EdgeKind.SUMMARIZE]
            if any(e.kind not in (EdgeKind.SUMMARIZE, EdgeKind.CONTEXT) for e in ins) or not refs:
                raise TraceError(f"summary {node.id} has parents no block can express")
            if any(e.kind is EdgeKind.CONTEXT for e in ins):
                refs.append(ROOT_REF)
            attrs["uses"] = ",".join(refs)
        names[node.id] = name
        blocks.append(RoleBlock(role, attrs, node.text))
    return Trace(dag.problem, tuple(blocks))

