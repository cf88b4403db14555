"""Core domain types and the fixed prompt concatenation formats.

Every prompt this project sends to a backend is produced by one of the two
assembly functions below, and every completion is decoded by
``split_completion`` / ``extract_answer``. The formats are frozen: golden
files in the test suite pin them byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

# Instruction appended after every question. It asks for step-by-step
# reasoning, the <answer>...</answer> bracket, and a trailing END token
# (which doubles as the decoding stop word, so stored text never contains it).
DEFAULT_INSTRUCTION = (
    "Let's think step by step. At the end, show your answer bracketed with "
    "<answer> and </answer>. Finally generate END at the end of the solution."
)

ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "</answer>"
END_TOKEN = "END"

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class TaskExample:
    """One question/answer pair of a task split."""

    example_id: str
    question_text: str
    gold_answer: str
    split: str = TRAIN

    def __post_init__(self) -> None:
        if not self.question_text:
            raise ValueError(f"example {self.example_id!r}: empty question_text")
        if not self.gold_answer:
            raise ValueError(f"example {self.example_id!r}: empty gold_answer")
        if self.split not in (TRAIN, TEST):
            raise ValueError(f"example {self.example_id!r}: bad split {self.split!r}")


@dataclass
class Recipe:
    """A step-by-step solution text bound to one pool slot.

    ``solution_text`` may be empty: a rejected initialization leaves the slot
    holding an empty recipe, which is skipped when prompts are rendered.
    """

    slot_id: int
    example_id: str
    solution_text: str = ""
    born_iteration: int = -1
    source_model: str = ""
    produced_correct_answer: bool = False

    @property
    def is_empty(self) -> bool:
        return self.solution_text == ""


@dataclass(frozen=True)
class ShotTuple:
    """One in-context demonstration: question, worked solution, answer.

    The shared instruction message is supplied at assembly time rather than
    stored per shot. Empty solutions are never rendered as shots, so they are
    rejected here.
    """

    question_text: str
    solution_text: str
    answer_text: str

    def __post_init__(self) -> None:
        if not self.solution_text:
            raise ValueError("ShotTuple requires a non-empty solution_text")


def render_shot(shot: ShotTuple, message: str) -> str:
    """Render one demonstration block: x, message, solution, bracketed answer, END."""
    return (
        f"{shot.question_text}\n{message}\n{shot.solution_text}\n"
        f"{ANSWER_OPEN}{shot.answer_text}{ANSWER_CLOSE}\n{END_TOKEN}"
    )


def assemble_cot_prompt(
    shots: list[ShotTuple] | tuple[ShotTuple, ...],
    test_question: str,
    message: str = DEFAULT_INSTRUCTION,
) -> str:
    """Concatenate demonstration shots and the test question into one prompt.

    Shot order is preserved exactly as given; blocks are separated by one
    blank line; the prompt ends with the test question followed by the
    instruction message. With no shots this degenerates to the zero-shot
    prompt ``question + NL + message + NL``.
    """
    blocks = [render_shot(shot, message) for shot in shots]
    blocks.append(f"{test_question}\n{message}\n")
    return "\n\n".join(blocks)


def assemble_fewshot_prompt(
    pairs: list[tuple[str, str]],
    test_question: str,
    message: str = DEFAULT_INSTRUCTION,
) -> str:
    """Concatenate plain question/answer pairs (no solutions) and the test question.

    Answers are still wrapped in the bracket markers and terminated with END
    so completions can be decoded the same way as chain-of-thought runs.
    """
    blocks = [
        f"{question}\n{ANSWER_OPEN}{answer}{ANSWER_CLOSE}\n{END_TOKEN}"
        for question, answer in pairs
    ]
    blocks.append(f"{test_question}\n{message}\n")
    return "\n\n".join(blocks)


def extract_answer(completion_text: str) -> str | None:
    """Return the text between the first answer markers, or None if absent."""
    start = completion_text.find(ANSWER_OPEN)
    if start == -1:
        return None
    start += len(ANSWER_OPEN)
    end = completion_text.find(ANSWER_CLOSE, start)
    if end == -1:
        return None
    return completion_text[start:end]


def split_completion(completion_text: str) -> tuple[str, str | None]:
    """Split a completion into (solution body, extracted answer).

    The solution body is everything strictly before the first answer marker,
    verbatim. When either marker is missing the whole text is returned as the
    body and the answer is None.
    """
    answer = extract_answer(completion_text)
    if answer is None:
        return completion_text, None
    return completion_text[: completion_text.find(ANSWER_OPEN)], answer


def exact_match(extracted: str | None, gold: str) -> bool:
    """Exact-match scoring: whitespace-trimmed equality, no case folding."""
    if extracted is None:
        return False
    return extracted.strip() == gold.strip()


