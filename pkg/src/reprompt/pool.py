"""Recipe pool: the Gibbs chain state over training-example slots."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .prompts import Recipe, ShotTuple, TaskExample


@dataclass
class RecipePool:
    """One recipe per slot; each training example owns ``clone_factor`` slots.

    The slot-to-example mapping is fixed for a run: example ``i`` owns the
    consecutive slots ``i*k .. i*k+k-1``.
    """

    examples: list[TaskExample]
    clone_factor: int = 1
    slots: list[Recipe] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.clone_factor < 1:
            raise ValueError("clone_factor must be >= 1")
        if not self.slots:
            self.slots = [
                Recipe(slot_id=j, example_id=self.examples[j // self.clone_factor].example_id)
                for j in range(len(self.examples) * self.clone_factor)
            ]

    @property
    def size(self) -> int:
        return len(self.slots)

    def example_for_slot(self, slot_id: int) -> TaskExample:
        return self.examples[slot_id // self.clone_factor]

    def nonempty_slot_ids(self) -> list[int]:
        return [recipe.slot_id for recipe in self.slots if not recipe.is_empty]

    def shot_for_slot(self, slot_id: int) -> ShotTuple | None:
        """Demonstration tuple for a slot, or None when its recipe is empty.

        The rendered answer is the slot's gold answer, regardless of what the
        model produced when the recipe was sampled.
        """
        recipe = self.slots[slot_id]
        if recipe.is_empty:
            return None
        example = self.example_for_slot(slot_id)
        return ShotTuple(
            question_text=example.question_text,
            solution_text=recipe.solution_text,
            answer_text=example.gold_answer,
        )

    def to_dict(self) -> dict:
        return {
            "clone_factor": self.clone_factor,
            "slots": [
                {
                    "slot_id": r.slot_id,
                    "example_id": r.example_id,
                    "solution_text": r.solution_text,
                    "born_iteration": r.born_iteration,
                    "source_model": r.source_model,
                    "produced_correct_answer": r.produced_correct_answer,
                }
                for r in self.slots
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")
