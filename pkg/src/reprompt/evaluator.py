"""Tuple scoring, test-time shot selection, baselines, and learning curves."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .backends import CompletionRequest
from .errors import GatewayError, InsufficientTuples, LogInconsistency, MissingCotFile
from .gateway import LlmGateway
from .pool import RecipePool
from .prompts import (
    DEFAULT_INSTRUCTION,
    ShotTuple,
    TaskExample,
    assemble_cot_prompt,
    assemble_fewshot_prompt,
    exact_match,
    extract_answer,
)
from .tasks import TaskBundle

logger = logging.getLogger(__name__)

METHOD_ZERO_SHOT = "zero_shot"
METHOD_FEW_SHOT = "few_shot"
METHOD_COT_FILE = "cot_file"
METHOD_GIBBS = "reprompt_gibbs"
METHOD_GREEDY = "reprompt_greedy"

# Fallback answer extraction for externally written chain-of-thought prompt
# files, which do not use the <answer> bracket convention.
DEFAULT_COT_ANSWER_REGEX = r"(?i)the answer is\s*(.+?)\s*\.?\s*$"


@dataclass
class TupleScore:
    slot_id: int
    accuracy: float
    evaluated_on: int


@dataclass
class EvalReport:
    task_name: str
    method: str
    backend_id: str
    accuracy: float
    evaluated_on: int
    verdicts: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task_name": self.task_name,
            "method": self.method,
            "backend_id": self.backend_id,
            "accuracy": self.accuracy,
            "evaluated_on": self.evaluated_on,
            "verdicts": self.verdicts,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )


def tuple_training_accuracy(
    shot: ShotTuple,
    own_example_id: str,
    train: list[TaskExample],
    backend_id: str,
    gateway: LlmGateway,
    message: str = DEFAULT_INSTRUCTION,
    slot_id: int = -1,
) -> TupleScore:
    """Score one tuple by using it as the sole shot on every other training question.

    Decoding runs at temperature 0. The tuple's own question is excluded;
    with nothing left to evaluate the accuracy is defined as 0.
    """
    questions = [ex for ex in train if ex.example_id != own_example_id]
    if not questions:
        return TupleScore(slot_id=slot_id, accuracy=0.0, evaluated_on=0)
    correct = 0
    for example in questions:
        prompt = assemble_cot_prompt([shot], example.question_text, message)
        result = gateway.complete(
            CompletionRequest(backend_id=backend_id, prompt=prompt, temperature=0.0)
        )
        if exact_match(extract_answer(result.text), example.gold_answer):
            correct += 1
    return TupleScore(
        slot_id=slot_id,
        accuracy=correct / len(questions),
        evaluated_on=len(questions),
    )


def select_test_tuples(
    pool: RecipePool,
    num_shots: int,
    scores: dict[int, TupleScore],
) -> list[ShotTuple]:
    """Pick the highest-accuracy tuples for test-time prompting.

    Ties break toward the lower slot id, then the earlier born iteration.
    The returned shot order is descending score.
    """
    candidates = []
    for slot_id in pool.nonempty_slot_ids():
        if slot_id not in scores:
            raise ValueError(f"non-empty slot {slot_id} has no tuple score")
        recipe = pool.slots[slot_id]
        candidates.append((scores[slot_id].accuracy, slot_id, recipe.born_iteration))
    if len(candidates) < num_shots:
        raise InsufficientTuples(
            f"{len(candidates)} scored non-empty slots < {num_shots} requested shots"
        )
    candidates.sort(key=lambda item: (-item[0], item[1], item[2]))
    selected = candidates[:num_shots]
    shots = []
    for _, slot_id, _ in selected:
        shot = pool.shot_for_slot(slot_id)
        assert shot is not None
        shots.append(shot)
    return shots


def _evaluate_questions(
    task_name: str,
    method: str,
    backend_id: str,
    gateway: LlmGateway,
    questions: list[TaskExample],
    prompt_for: Callable[[TaskExample], str],
    extract: Callable[[str], str | None],
) -> EvalReport:
    verdicts: list[dict] = []
    correct = 0
    for example in questions:
        verdict: dict = {"example_id": example.example_id, "gold": example.gold_answer}
        try:
            result = gateway.complete(
                CompletionRequest(
                    backend_id=backend_id,
                    prompt=prompt_for(example),
                    temperature=0.0,
                )
            )
            extracted = extract(result.text)
            verdict["extracted"] = extracted
            verdict["correct"] = exact_match(extracted, example.gold_answer)
        except GatewayError as exc:
            logger.warning("eval %s/%s: %s failed: %s", task_name, method, example.example_id, exc)
            verdict["extracted"] = None
            verdict["correct"] = False
            verdict["error"] = str(exc)
        if verdict["correct"]:
            correct += 1
        verdicts.append(verdict)
    accuracy = correct / len(questions) if questions else 0.0
    return EvalReport(
        task_name=task_name,
        method=method,
        backend_id=backend_id,
        accuracy=accuracy,
        evaluated_on=len(questions),
        verdicts=verdicts,
    )


def evaluate_prompt(
    shots: list[ShotTuple],
    test: list[TaskExample],
    backend_id: str,
    gateway: LlmGateway,
    message: str = DEFAULT_INSTRUCTION,
    task_name: str = "",
    method: str = METHOD_GIBBS,
) -> EvalReport:
    """Decode every test question at temperature 0 behind a fixed shot list."""
    return _evaluate_questions(
        task_name,
        method,
        backend_id,
        gateway,
        test,
        lambda ex: assemble_cot_prompt(shots, ex.question_text, message),
        extract_answer,
    )


def run_baseline(
    method: str,
    task: TaskBundle,
    backend_id: str,
    gateway: LlmGateway,
    cot_file: str | Path | None = None,
    cot_answer_regex: str = DEFAULT_COT_ANSWER_REGEX,
) -> EvalReport:
    """Run one of the comparison prompting methods over the task's test split."""
    if method == METHOD_ZERO_SHOT:
        return _evaluate_questions(
            task.name, method, backend_id, gateway, task.test,
            lambda ex: assemble_cot_prompt([], ex.question_text, task.message),
            extract_answer,
        )
    if method == METHOD_FEW_SHOT:
        pairs = [
            (ex.question_text, ex.gold_answer)
            for ex in sorted(task.train, key=lambda e: e.example_id)
        ]
        return _evaluate_questions(
            task.name, method, backend_id, gateway, task.test,
            lambda ex: assemble_fewshot_prompt(pairs, ex.question_text, task.message),
            extract_answer,
        )
    if method == METHOD_COT_FILE:
        if cot_file is None:
            raise MissingCotFile("cot_file method requires a prompt file")
        try:
            prefix = Path(cot_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise MissingCotFile(f"cannot read cot file {cot_file}: {exc}") from exc
        pattern = re.compile(cot_answer_regex, re.MULTILINE)

        def extract_cot(text: str) -> str | None:
            matches = pattern.findall(text)
            return matches[-1] if matches else None

        return _evaluate_questions(
            task.name, method, backend_id, gateway, task.test,
            lambda ex: f"{prefix}\n\n{ex.question_text}\n",
            extract_cot,
        )
    raise ValueError(f"unknown baseline method {method!r}")


def learning_curve(log_path: str | Path) -> list[tuple[int, float]]:
    """Recompute the cumulative draw-correctness average from a run log.

    Initialization records (iteration -1) and sampling records each form
    their own cumulative sequence. The recomputed values must agree with the
    logged ``running_avg`` on every line, otherwise LogInconsistency is
    raised. Returns the (iteration, running_avg) series of sampling records.
    """
    series: list[tuple[int, float]] = []
    counts = {"init": [0, 0], "sampling": [0, 0]}  # [correct, total]
    with open(log_path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("type") != "record":
                continue
            phase = "init" if record["iteration"] < 0 else "sampling"
            counts[phase][1] += 1
            if record["draw_correct"]:
                counts[phase][0] += 1
            expected = counts[phase][0] / counts[phase][1]
            if abs(expected - record["running_avg"]) > 1e-9:
                raise LogInconsistency(
                    f"{log_path}:{line_no}: running_avg {record['running_avg']} "
                    f"!= recomputed {expected}"
                )
            if phase == "sampling":
                series.append((record["iteration"], record["running_avg"]))
    return series


def write_curve_csv(series: list[tuple[int, float]], path: str | Path) -> None:
    lines = ["iteration,running_avg"]
    lines += [f"{iteration},{round(avg, 3)}" for iteration, avg in series]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
