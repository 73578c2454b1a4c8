"""Propose / critique / refine / summarize loop driven against a backend."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

from .backends import Backend, BackendRequest
from .graph import (
    ABANDONMENT_NOTE,
    NodeId,
    PropStatus,
    ReasoningDag,
    Verdict,
)
from .trace import (
    InferOptions,
    ParseError,
    Role,
    RoleBlock,
    Trace,
    TraceApplyError,
    TraceBuilder,
    contains_role_tag,
    infer_linkage,
    parse_stream_lenient,
    render_trace,
)

log = logging.getLogger(__name__)


class Phase(str, enum.Enum):
    AWAIT_PROPOSAL = "AwaitProposal"
    AWAIT_CRITIQUE = "AwaitCritique"
    AWAIT_REFINEMENT = "AwaitRefinement"
    AWAIT_SUMMARY = "AwaitSummary"
    DONE = "Done"
    FAILED = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (Phase.DONE, Phase.FAILED)


class Outcome(str, enum.Enum):
    SUMMARIZED = "Summarized"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    BACKEND_FAILURE = "BackendFailure"


@dataclass(frozen=True)
class EngineConfig:
    min_verified: int = 1
    max_rounds: int = 16
    max_refinements_per_line: int = 4
    verify_markers: tuple[str, ...] = ("valid", "verified")
    include_context_edges: bool = True
    # malformed-output retries per step, on top of the first attempt
    output_retries: int = 2
    max_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "verify_markers", tuple(self.verify_markers))
        if self.min_verified < 1:
            raise ValueError("min_verified must be at least 1")
        if self.max_rounds < self.min_verified:
            raise ValueError("max_rounds must be at least min_verified")
        if self.max_refinements_per_line < 1:
            raise ValueError("max_refinements_per_line must be positive")
        if self.output_retries < 0:
            raise ValueError("output_retries must be non-negative")

    @property
    def infer_options(self) -> InferOptions:
        return InferOptions(self.verify_markers, self.include_context_edges)

    @property
    def call_bound(self) -> int:
        """Upper bound on backend calls for one session with well-formed output."""
        return self.max_rounds * (2 + self.max_refinements_per_line)


@dataclass
class EngineState:
    phase: Phase
    builder: TraceBuilder
    transcript: Trace
    round: int = 0
    open_line: Optional[NodeId] = None
    line_refinements: int = 0
    backend_calls: int = 0
    outcome: Optional[Outcome] = None
    error: Optional[str] = None

    @classmethod
    def start(cls, problem: str) -> EngineState:
        builder = TraceBuilder(problem)
        return cls(Phase.AWAIT_PROPOSAL, builder, Trace(builder.dag.problem))

    @property
    def dag(self) -> ReasoningDag:
        return self.builder.dag


@dataclass
class SessionResult:
    dag: ReasoningDag
    trace: Trace
    answer: str
    rounds_used: int
    outcome: Outcome
    backend_calls: int = 0
    error: Optional[str] = field(default=None, compare=False)


_ROLE_FOR_PHASE = {
    Phase.AWAIT_PROPOSAL: Role.PROPOSER,
    Phase.AWAIT_CRITIQUE: Role.CRITIC,
    Phase.AWAIT_REFINEMENT: Role.PROPOSER,
    Phase.AWAIT_SUMMARY: Role.SUMMARIZER,
}


def next_role(state: EngineState) -> Role:
    if state.phase.terminal:
        raise ValueError(f"no role follows terminal phase {state.phase.value}")
    return _ROLE_FOR_PHASE[state.phase]


def sufficiency(dag: ReasoningDag, config: EngineConfig) -> bool:
    """Enough verified propositions and no refutation left unanswered."""
    if len(dag.propositions(PropStatus.VERIFIED)) < config.min_verified:
        return False
    return not any(
        dag.has_open_refutation(p) and not dag.is_abandoned(p)
        for p in dag.propositions(PropStatus.PROPOSED)
    )


def build_prompt(state: EngineState, role: Role, config: EngineConfig) -> BackendRequest:
    rendered = render_trace(state.transcript)
    if state.transcript.blocks:
        rendered += "\n"
    return BackendRequest(
        prompt=rendered + role.open_tag,
        role_hint=role,
        max_tokens=config.max_tokens,
        temperature=config.temperature,
    )


def _extract_block(text: str, role: Role) -> Optional[RoleBlock]:
    """First block of the completion, or None when nothing usable came back."""
    trace, _ = parse_stream_lenient(role.open_tag + text)
    if not trace.blocks:
        return None
    first = trace.blocks[0]
    if first.role is not role or not first.body or contains_role_tag(first.body):
        return None
    return RoleBlock(role, {}, first.body)


def _fail(state: EngineState, outcome: Outcome, message: str) -> EngineState:
    log.info("session failed: %s (%s)", outcome.value, message)
    state.phase = Phase.FAILED
    state.outcome = outcome
    state.error = message
    return state


def _fold(state: EngineState, block: RoleBlock, config: EngineConfig) -> tuple[RoleBlock, NodeId]:
    linked = infer_linkage(state.transcript.append(block), config.infer_options)
    resolved = linked.blocks[-1]
    node = state.builder.apply(resolved)
    state.transcript = state.transcript.append(resolved)
    return resolved, node


def step(state: EngineState, backend: Backend, config: EngineConfig) -> EngineState:
    """Run one role turn: one backend completion (plus retries) folded into the DAG."""
    role = next_role(state)
    if role is Role.CRITIC and state.round >= config.max_rounds:
        return _fail(state, Outcome.BUDGET_EXHAUSTED,
                     f"critique budget of {config.max_rounds} rounds used up")

    request = build_prompt(state, role, config)
    block = None
    for _ in range(config.output_retries + 1):
        state.backend_calls += 1
        try:
            response = backend.generate(request)
        except Exception as e:  # any backend fault ends the session, never the caller
            return _fail(state, Outcome.BACKEND_FAILURE, f"{type(e).__name__}: {e}")
        block = _extract_block(response.text, role)
        if block is not None:
            break
        log.warning("malformed %s completion: %r", role.value, response.text[:200])
    if block is None:
        return _fail(state, Outcome.BACKEND_FAILURE,
                     f"no usable <{role.value}> block after {config.output_retries + 1} attempts")

    try:
        resolved, node = _fold(state, block, config)
        if role is Role.PROPOSER:
            if state.phase is Phase.AWAIT_REFINEMENT:
                state.line_refinements += 1
            else:
                state.line_refinements = 0
            state.open_line = node
            state.phase = Phase.AWAIT_CRITIQUE
        elif role is Role.CRITIC:
            state.round += 1
            if resolved.attrs["verdict"] == Verdict.VERIFY.value:
                state.open_line = None
                state.phase = (Phase.AWAIT_SUMMARY if sufficiency(state.dag, config)
                               else Phase.AWAIT_PROPOSAL)
            elif state.line_refinements >= config.max_refinements_per_line:
                note = RoleBlock(Role.CRITIC, {"of": resolved.attrs["of"], "verdict": "refute"},
                                 ABANDONMENT_NOTE)
                _fold(state, note, config)
                state.open_line = None
                state.phase = Phase.AWAIT_PROPOSAL
            else:
                state.phase = Phase.AWAIT_REFINEMENT
        else:
            state.phase = Phase.DONE
            state.outcome = Outcome.SUMMARIZED
    except (ParseError, TraceApplyError) as e:
        return _fail(state, Outcome.BACKEND_FAILURE, str(e))
    return state


def _claim(backend: Backend) -> bool:
    if getattr(backend, "shareable", True):
        return True
    if getattr(backend, "_claimed_by_session", False):
        return False
    setattr(backend, "_claimed_by_session", True)
    return True


def run_session(problem: str, backend: Backend,
                config: Optional[EngineConfig] = None) -> SessionResult:
    """Drive the loop to completion; failures come back as the outcome."""
    config = config or EngineConfig()
    state = EngineState.start(problem)
    if not _claim(backend):
        _fail(state, Outcome.BACKEND_FAILURE, "scripted backend already used by another session")
    while not state.phase.terminal:
        step(state, backend, config)
    answer = ""
    if state.outcome is Outcome.SUMMARIZED:
        answer = state.dag.nodes[state.dag.summaries()[0]].text
    return SessionResult(
        dag=state.dag,
        trace=state.transcript,
        answer=answer,
        rounds_used=state.round,
        outcome=state.outcome,
        backend_calls=state.backend_calls,
        error=state.error,
    )
