"""Task bundles: loading, Big-Bench ingestion, and synthetic oracle tasks."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InsufficientExamples, SchemaError
from .prompts import DEFAULT_INSTRUCTION, TEST, TRAIN, TaskExample


@dataclass
class TaskBundle:
    """A named task with disjoint train/test splits and its instruction message."""

    name: str
    train: list[TaskExample]
    test: list[TaskExample]
    message: str = DEFAULT_INSTRUCTION
    provenance: dict = field(default_factory=dict)

    @property
    def examples(self) -> list[TaskExample]:
        return self.train + self.test

    def to_dict(self) -> dict:
        return {
            "task_name": self.name,
            "message": self.message,
            "provenance": self.provenance,
            "examples": [
                {
                    "id": ex.example_id,
                    "input": ex.question_text,
                    "target": ex.gold_answer,
                    "split": ex.split,
                }
                for ex in self.examples
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )


def load_task(path: str | Path) -> TaskBundle:
    """Load a task bundle JSON file.

    Schema: ``{task_name, message?, examples: [{id, input, target, split}]}``.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read task file {path}: {exc}") from exc
    try:
        name = doc["task_name"]
        raw_examples = doc["examples"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"task file {path} missing task_name/examples") from exc
    message = doc.get("message") or DEFAULT_INSTRUCTION

    train: list[TaskExample] = []
    test: list[TaskExample] = []
    seen_ids: set[str] = set()
    for i, raw in enumerate(raw_examples):
        try:
            example = TaskExample(
                example_id=str(raw["id"]),
                question_text=raw["input"],
                gold_answer=raw["target"],
                split=raw.get("split", TRAIN),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"task file {path}, example #{i}: {exc}") from exc
        if example.example_id in seen_ids:
            raise SchemaError(f"task file {path}: duplicate example id {example.example_id!r}")
        seen_ids.add(example.example_id)
        (train if example.split == TRAIN else test).append(example)
    return TaskBundle(name=name, train=train, test=test, message=message,
                      provenance=doc.get("provenance", {}))


def ingest_bigbench(
    bigbench_path: str | Path,
    train_size: int = 20,
    seed: int = 0,
    reserved_test_ids: list[str] | None = None,
) -> TaskBundle:
    """Convert a Big-Bench style task JSON into a train/test bundle.

    Training examples are sampled (seeded) from the items not reserved for
    testing. When the non-reserved set is smaller than ``train_size``, the
    remainder is topped up from reserved items and the fact is recorded in
    the bundle provenance.
    """
    try:
        doc = json.loads(Path(bigbench_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read {bigbench_path}: {exc}") from exc
    raw_examples = doc.get("examples")
    if not isinstance(raw_examples, list) or not raw_examples:
        raise SchemaError(f"{bigbench_path}: no examples list")

    items: list[tuple[str, str, str]] = []
    for i, raw in enumerate(raw_examples):
        try:
            target = raw["target"]
            if isinstance(target, list):
                target = target[0]
            items.append((str(raw.get("id", i)), raw["input"], target))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{bigbench_path}: example #{i} lacks input/target") from exc

    if len(items) < train_size + 1:
        raise InsufficientExamples(
            f"{len(items)} examples < train_size {train_size} + 1 test example"
        )

    reserved = set(reserved_test_ids or [])
    available = [item for item in items if item[0] not in reserved]
    rng = random.Random(seed)

    topped_up = 0
    if len(available) >= train_size:
        train_items = rng.sample(available, train_size)
    else:
        reserved_items = [item for item in items if item[0] in reserved]
        topped_up = train_size - len(available)
        train_items = list(available) + rng.sample(reserved_items, topped_up)
    train_ids = {item[0] for item in train_items}

    train = [
        TaskExample(example_id=eid, question_text=q, gold_answer=a, split=TRAIN)
        for eid, q, a in sorted(train_items, key=lambda item: item[0])
    ]
    test = [
        TaskExample(example_id=eid, question_text=q, gold_answer=a, split=TEST)
        for eid, q, a in items
        if eid not in train_ids
    ]
    provenance = {"source": str(bigbench_path), "seed": seed, "train_size": train_size}
    if topped_up:
        provenance["topped_up_from_reserved"] = topped_up
    name = doc.get("name") or Path(bigbench_path).stem
    if isinstance(name, dict):
        name = name.get("task_name", Path(bigbench_path).stem)
    return TaskBundle(name=str(name), train=train, test=test, provenance=provenance)


def synthetic_task(
    name: str = "synthetic",
    n_train: int = 20,
    n_test: int = 20,
    alphabet: tuple[str, ...] = ("(A)", "(B)", "(C)", "(D)"),
    seed: int = 0,
) -> TaskBundle:
    """Build a toy task for scripted-oracle runs: distinct questions, cyclic answers."""
    rng = random.Random(seed)
    train = [
        TaskExample(
            example_id=f"train-{i:03d}",
            question_text=f"Synthetic question {name}-{i:03d}: pick the right option.",
            gold_answer=alphabet[rng.randrange(len(alphabet))],
            split=TRAIN,
        )
        for i in range(n_train)
    ]
    test = [
        TaskExample(
            example_id=f"test-{i:03d}",
            question_text=f"Synthetic holdout {name}-{i:03d}: pick the right option.",
            gold_answer=alphabet[rng.randrange(len(alphabet))],
            split=TEST,
        )
        for i in range(n_test)
    ]
    return TaskBundle(name=name, train=train, test=test)
