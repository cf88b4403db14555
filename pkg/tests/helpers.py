"""Shared test doubles and fixtures."""

from __future__ import annotations

from reprompt.backends import CompletionRequest, CompletionResult
from reprompt.gateway import LlmGateway
from reprompt.oracle import OracleSpec, ScriptedOracleBackend, parse_prompt
from reprompt.prompts import DEFAULT_INSTRUCTION


class ScriptBackend:
    """Answers correctly or not according to a per-draw-index script."""

    def __init__(self, task, correct_for_index, backend_id="oracle"):
        self.backend_id = backend_id
        self.correct_for_index = correct_for_index
        self._gold = {ex.question_text: ex.gold_answer for ex in task.examples}

    def generate(self, request: CompletionRequest) -> CompletionResult:
        parsed = parse_prompt(request.prompt, DEFAULT_INSTRUCTION)
        gold = self._gold[parsed.test_question]
        answer = gold if self.correct_for_index(request.draw_index) else gold + " wrong"
        return CompletionResult(text=f"scripted steps\n<answer>{answer}</answer>")


def oracle_gateway(task, spec: OracleSpec | None = None, backend_id="oracle") -> LlmGateway:
    gateway = LlmGateway()
    gateway.register(
        ScriptedOracleBackend(backend_id, task.examples, spec or OracleSpec(seed=9), task.message)
    )
    return gateway
