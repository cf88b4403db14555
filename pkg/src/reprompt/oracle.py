"""Deterministic scripted backend that imitates recipe styles.

The oracle parses an incoming prompt with the same grammar the assembly
functions emit (a parse failure doubles as a format regression signal),
classifies each demonstration's solution by marker substring, imitates one
of the observed styles, and answers correctly with a per-style probability.
All randomness is a pure function of (oracle seed, request digest), so any
run against the oracle replays bit-exactly.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from .backends import CompletionRequest, CompletionResult, FINISH_STOP
from .cache import cache_key
from .errors import OracleParseError
from .prompts import (
    ANSWER_CLOSE,
    ANSWER_OPEN,
    DEFAULT_INSTRUCTION,
    END_TOKEN,
    TaskExample,
)

STYLE_GOOD = "GOOD"
STYLE_BAD = "BAD"
STYLE_NONE = "NONE"

STYLE_MARKERS = {
    STYLE_GOOD: "#good",
    STYLE_BAD: "#bad",
    STYLE_NONE: "#none",
}


def classify_style(solution_text: str) -> str:
    """Label a recipe by marker substring; GOOD takes precedence over BAD."""
    if STYLE_MARKERS[STYLE_GOOD] in solution_text:
        return STYLE_GOOD
    if STYLE_MARKERS[STYLE_BAD] in solution_text:
        return STYLE_BAD
    return STYLE_NONE


@dataclass
class OracleSpec:
    """Behavior knobs for the scripted oracle.

    ``style_accuracy`` is the probability of emitting the correct answer
    given the style the draw follows. The imitation rule parameters shape
    how styles propagate: a draw with no styled shots follows NONE, and its
    emitted recipe carries a marker invented from ``invention_weights`` with
    probability ``invention_rate`` (the NONE marker otherwise). A styled
    draw re-rolls its emitted marker from the invention weights with
    probability ``mutation_rate``; the default of 0 makes imitation exact.
    """

    seed: int = 0
    style_accuracy: dict[str, float] = field(
        default_factory=lambda: {STYLE_GOOD: 0.9, STYLE_BAD: 0.1, STYLE_NONE: 0.05}
    )
    invention_rate: float = 1.0
    invention_weights: dict[str, float] = field(
        default_factory=lambda: {STYLE_GOOD: 0.5, STYLE_BAD: 0.5}
    )
    mutation_rate: float = 0.0

    def __post_init__(self) -> None:
        for style, prob in self.style_accuracy.items():
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"style_accuracy[{style}] out of [0,1]: {prob}")
        if not 0.0 <= self.invention_rate <= 1.0:
            raise ValueError("invention_rate out of [0,1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate out of [0,1]")
        if any(w < 0 for w in self.invention_weights.values()):
            raise ValueError("invention_weights must be non-negative")


@dataclass
class ParsedShot:
    question_text: str
    solution_text: str
    answer_text: str


@dataclass
class ParsedPrompt:
    shots: list[ParsedShot]
    test_question: str


def parse_prompt(prompt: str, message: str = DEFAULT_INSTRUCTION) -> ParsedPrompt:
    """Recover shots and the test question from an assembled prompt.

    Accepts both chain-of-thought shots (question, message, solution, answer)
    and plain question/answer pairs as emitted by the few-shot assembler.
    Raises OracleParseError when the structure deviates from the grammar.
    """
    message_line = f"\n{message}\n"
    pieces = prompt.split(f"\n{END_TOKEN}\n\n")
    tail = pieces[-1]
    if not tail.endswith(message_line) or len(tail) <= len(message_line):
        raise OracleParseError("prompt does not end with a question and the message")
    test_question = tail[: -len(message_line)]

    shots: list[ParsedShot] = []
    for piece in pieces[:-1]:
        if message_line in piece:
            question, rest = piece.split(message_line, 1)
            open_idx = rest.find(ANSWER_OPEN)
            if open_idx == -1 or not rest.endswith(ANSWER_CLOSE):
                raise OracleParseError("shot block lacks a bracketed answer")
            rendered_solution = rest[:open_idx]
            if not rendered_solution.endswith("\n"):
                raise OracleParseError("shot solution not newline-delimited")
            solution = rendered_solution[:-1]
            answer = rest[open_idx + len(ANSWER_OPEN) : -len(ANSWER_CLOSE)]
        else:
            open_idx = piece.find(f"\n{ANSWER_OPEN}")
            if open_idx == -1 or not piece.endswith(ANSWER_CLOSE):
                raise OracleParseError("pair block lacks a bracketed answer")
            question = piece[:open_idx]
            solution = ""
            answer = piece[open_idx + 1 + len(ANSWER_OPEN) : -len(ANSWER_CLOSE)]
        if not question:
            raise OracleParseError("empty question in shot block")
        shots.append(ParsedShot(question, solution, answer))
    return ParsedPrompt(shots=shots, test_question=test_question)


class ScriptedOracleBackend:
    """Offline backend over a fixed task: imitates shot styles, seeded answers."""

    def __init__(
        self,
        backend_id: str,
        examples: list[TaskExample],
        spec: OracleSpec | None = None,
        message: str = DEFAULT_INSTRUCTION,
    ):
        self.backend_id = backend_id
        self.spec = spec or OracleSpec()
        self.message = message
        self._gold = {ex.question_text: ex.gold_answer for ex in examples}
        self._alphabet = sorted({ex.gold_answer for ex in examples})

    def _rng_for(self, request: CompletionRequest) -> random.Random:
        digest = cache_key(request)
        seed_material = f"{self.spec.seed}|{digest}".encode("utf-8")
        return random.Random(int.from_bytes(hashlib.sha256(seed_material).digest()[:8], "big"))

    def _weighted_style(self, rng: random.Random) -> str:
        weights = self.spec.invention_weights
        total = sum(weights.values())
        if total <= 0:
            return STYLE_NONE
        point = rng.random() * total
        acc = 0.0
        for style in sorted(weights):
            acc += weights[style]
            if point <= acc:
                return style
        return sorted(weights)[-1]

    def generate(self, request: CompletionRequest) -> CompletionResult:
        parsed = parse_prompt(request.prompt, self.message)
        gold = self._gold.get(parsed.test_question)
        if gold is None:
            raise OracleParseError(
                "test question not part of the oracle's task",
                digest=cache_key(request),
            )
        rng = self._rng_for(request)

        shot_styles = [
            classify_style(shot.solution_text) for shot in parsed.shots if shot.solution_text
        ]
        if shot_styles:
            followed = shot_styles[rng.randrange(len(shot_styles))]
            emitted = followed
            if self.spec.mutation_rate > 0 and rng.random() < self.spec.mutation_rate:
                emitted = self._weighted_style(rng)
        else:
            followed = STYLE_NONE
            emitted = STYLE_NONE
            if rng.random() < self.spec.invention_rate:
                emitted = self._weighted_style(rng)

        accuracy = self.spec.style_accuracy.get(followed, 0.0)
        correct = rng.random() < accuracy
        if correct:
            answer = gold
        else:
            wrong_options = [a for a in self._alphabet if a != gold]
            answer = rng.choice(wrong_options) if wrong_options else gold

        solution = f"{STYLE_MARKERS[emitted]} recipe for: {parsed.test_question}"
        text = f"{solution}\n{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"
        return CompletionResult(text=text, finish_reason=FINISH_STOP)
