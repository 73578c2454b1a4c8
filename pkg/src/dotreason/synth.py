"""Seeded generator of well-formed reasoning traces."""

from __future__ import annotations

import random

from .trace import ROOT_REF, Role, RoleBlock, Trace

_WORDS = (
    "assume", "bound", "carry", "digit", "each", "factor", "given", "hence", "integer",
    "lemma", "modulo", "note", "order", "parity", "rule", "since", "term", "unit", "value",
    "weight", "x", "y", "zero", "a < b", "x ≤ y", "n > 0", "2 + 2", "9.11", "9.8",
)

# Cap on refutations per line so refute_rate=1.0 still terminates.
MAX_SYNTH_REFINEMENTS = 3


def _sentence(rng: random.Random, lead: str = "") -> str:
    words = [rng.choice(_WORDS) for _ in range(rng.randint(3, 9))]
    text = " ".join(words)
    return f"{lead} {text}." if lead else text[0].upper() + text[1:] + "."


def synth_trace(rng: random.Random, depth: int = 3, refute_rate: float = 0.3) -> Trace:
    """One resolved trace with ``depth`` reasoning lines and a closing summary.

    Every line ends verified, after up to MAX_SYNTH_REFINEMENTS refinements;
    with ``refute_rate`` 1.0 every line is refined at least once.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if not 0.0 <= refute_rate <= 1.0:
        raise ValueError("refute_rate must be within [0, 1]")
    counters = {Role.PROPOSER: 0, Role.CRITIC: 0}

    def next_id(role: Role) -> str:
        counters[role] += 1
        return f"{'p' if role is Role.PROPOSER else 'c'}{counters[role]}"

    blocks: list[RoleBlock] = []
    verified: list[str] = []
    for _ in range(depth):
        if verified:
            picks = rng.sample(verified, rng.randint(1, min(2, len(verified))))
            parents = [p for p in verified if p in picks]
            if rng.random() < 0.5:
                parents.append(ROOT_REF)
        else:
            parents = [ROOT_REF]
        pid = next_id(Role.PROPOSER)
        blocks.append(RoleBlock(Role.PROPOSER, {"id": pid, "from": ",".join(parents)},
                                _sentence(rng)))
        refinements = 0
        while True:
            cid = next_id(Role.CRITIC)
            if refinements < MAX_SYNTH_REFINEMENTS and rng.random() < refute_rate:
                blocks.append(RoleBlock(Role.CRITIC, {"id": cid, "of": pid, "verdict": "refute"},
                                        _sentence(rng, "Wrong:")))
                pid = next_id(Role.PROPOSER)
                blocks.append(RoleBlock(Role.PROPOSER, {"id": pid, "refines": cid},
                                        _sentence(rng)))
                refinements += 1
                continue
            blocks.append(RoleBlock(Role.CRITIC, {"id": cid, "of": pid, "verdict": "verify"},
                                    _sentence(rng, "Valid:")))
            verified.append(pid)
            break
    uses = list(verified)
    if rng.random() < 0.7:
        uses.append(ROOT_REF)
    blocks.append(RoleBlock(Role.SUMMARIZER, {"id": "s1", "uses": ",".join(uses)},
                            _sentence(rng, "In summary:")))
    problem = f"Synthetic problem {rng.randrange(10**6)}: {_sentence(rng)}"
    return Trace(problem, tuple(blocks))


def synth_traces(seed: int, count: int, depth: int = 3, refute_rate: float = 0.3) -> list[Trace]:
    # One generator per index so any single trace can be regenerated alone.
    return [
        synth_trace(random.Random(seed * 1_000_003 + i), depth, refute_rate)
        for i in range(count)
    ]
