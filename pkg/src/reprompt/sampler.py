"""Recipe inference: initialization, Gibbs sampling with rejection, greedy search.

The chain state is a RecipePool. Initialization draws a zero-shot solution
for every slot; sampling repeatedly redraws one slot's recipe conditioned on
a random subset of the others. A draw whose extracted answer is wrong is
rejected with probability ``rejection_probability``, so recipes that answer
their own question correctly spread through the pool.

Every draw appends one IterationRecord to the run log (JSONL, header line
first). Runs are a pure function of (task, config, seed) when the backends
are deterministic, which the scripted oracle guarantees.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO

from . import evaluator as evaluator_mod
from .backends import CompletionRequest
from .errors import AuthError, ConfigError, GatewayError, OracleParseError
from .gateway import LlmGateway
from .pool import RecipePool
from .prompts import Recipe, ShotTuple, assemble_cot_prompt, exact_match, split_completion
from .tasks import TaskBundle

logger = logging.getLogger(__name__)

SNAPSHOT_EVERY = 500
INIT_ITERATION = -1

# Score assigned to a slot with no recipe, so any scored candidate beats it.
EMPTY_SLOT_SCORE = -1.0


@dataclass(frozen=True)
class SamplerConfig:
    """Run parameters.

    Defaults: 5 shots, 20,000 Gibbs iterations (the CLI uses 10 rounds for
    greedy), rejection probability 0.99, early stopping after 1,000
    iterations without a new best running average.
    """

    init_backend: str
    sampling_backend: str
    num_shots: int = 5
    max_iterations: int = 20_000
    rejection_probability: float = 0.99
    clone_factor: int = 1
    early_stop_window: int = 1_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_shots < 1:
            raise ConfigError("num_shots must be >= 1")
        if not 0.0 <= self.rejection_probability <= 1.0:
            raise ConfigError("rejection_probability must be in [0, 1]")
        if self.clone_factor < 1:
            raise ConfigError("clone_factor must be >= 1")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if self.max_iterations > 0 and self.early_stop_window > self.max_iterations:
            raise ConfigError("early_stop_window must not exceed max_iterations")


@dataclass
class IterationRecord:
    """Audit entry for one draw: slot, shot set, outcome, running average."""

    iteration: int
    slot: int
    shot_set: list[int]
    draw_correct: bool
    accepted: bool
    running_avg: float
    error: str | None = None

    def to_json(self) -> str:
        payload = {"type": "record", **asdict(self)}
        if payload["error"] is None:
            del payload["error"]
        return json.dumps(payload, sort_keys=True, ensure_ascii=False)


@dataclass
class RunResult:
    pool: RecipePool
    records: list[IterationRecord]
    iterations_run: int
    early_stopped: bool = False
    log_path: Path | None = None
    greedy_scores: list[dict[int, float]] = field(default_factory=list)


def rejection_decision(draw_correct: bool, u: float, rejection_probability: float) -> bool:
    """Accept a draw iff its answer was correct or the uniform draw exceeds p_rej."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u out of [0, 1]: {u}")
    return draw_correct or u > rejection_probability


def select_step_indices(
    rng: random.Random, pool_size: int, num_shots: int
) -> tuple[int, list[int]]:
    """Uniformly pick the slot to update and its shot set (which excludes it)."""
    slot = rng.randrange(pool_size)
    others = [i for i in range(pool_size) if i != slot]
    return slot, rng.sample(others, num_shots)


class _RunState:
    """Shared bookkeeping for one run: log stream, counters, running averages."""

    def __init__(self, log_path: Path | None):
        self.records: list[IterationRecord] = []
        self.draw_counter = 0
        self._correct = {"init": 0, "sampling": 0}
        self._total = {"init": 0, "sampling": 0}
        self.log_path = log_path
        self._handle: IO[str] | None = None
        if log_path is not None:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(log_path, "w", encoding="utf-8")

    def next_draw_index(self) -> int:
        index = self.draw_counter
        self.draw_counter += 1
        return index

    def write_header(self, header: dict) -> None:
        if self._handle is not None:
            line = json.dumps({"type": "header", **header}, sort_keys=True, ensure_ascii=False)
            self._handle.write(line + "\n")

    def record(
        self,
        iteration: int,
        slot: int,
        shot_set: list[int],
        draw_correct: bool,
        accepted: bool,
        error: str | None = None,
    ) -> IterationRecord:
        phase = "init" if iteration < 0 else "sampling"
        self._total[phase] += 1
        if draw_correct:
            self._correct[phase] += 1
        entry = IterationRecord(
            iteration=iteration,
            slot=slot,
            shot_set=shot_set,
            draw_correct=draw_correct,
            accepted=accepted,
            running_avg=self._correct[phase] / self._total[phase],
            error=error,
        )
        self.records.append(entry)
        if self._handle is not None:
            self._handle.write(entry.to_json() + "\n")
        return entry

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def _complete_with_retry(
    gateway: LlmGateway, request: CompletionRequest, retries: int = 1
) -> tuple[str | None, str | None]:
    """Run one completion; returns (text, error). Retries transient failures.

    Credential errors and oracle grammar errors are never treated as
    transient: the first aborts the run, the second signals a prompt-format
    regression and must surface.
    """
    error = None
    for attempt in range(retries + 1):
        try:
            return gateway.complete(request).text, None
        except (AuthError, OracleParseError):
            raise
        except GatewayError as exc:
            logger.warning("draw failed (attempt %d): %s", attempt + 1, exc)
            error = f"{type(exc).__name__}: {exc}"
    return None, error


def _snapshot(pool: RecipePool, out_dir: Path | None, label: str) -> None:
    if out_dir is not None:
        pool.save(out_dir / f"pool-{label}.json")


def initialize(
    pool: RecipePool,
    task: TaskBundle,
    config: SamplerConfig,
    gateway: LlmGateway,
    rng: random.Random,
    state: _RunState,
) -> None:
    """Zero-shot draw for every slot; rejected slots keep an empty recipe."""
    for slot_id in range(pool.size):
        example = pool.example_for_slot(slot_id)
        prompt = assemble_cot_prompt([], example.question_text, task.message)
        request = CompletionRequest(
            backend_id=config.init_backend,
            prompt=prompt,
            temperature=1.0,
            draw_index=state.next_draw_index(),
        )
        text, error = _complete_with_retry(gateway, request, retries=0)
        if text is None:
            state.record(INIT_ITERATION, slot_id, [], False, False, error=error)
            continue
        solution, answer = split_completion(text)
        draw_correct = exact_match(answer, example.gold_answer)
        accepted = rejection_decision(draw_correct, rng.random(), config.rejection_probability)
        if accepted:
            pool.slots[slot_id] = Recipe(
                slot_id=slot_id,
                example_id=example.example_id,
                solution_text=solution,
                born_iteration=INIT_ITERATION,
                source_model=config.init_backend,
                produced_correct_answer=draw_correct,
            )
        state.record(INIT_ITERATION, slot_id, [], draw_correct, accepted)


def gibbs_step(
    pool: RecipePool,
    task: TaskBundle,
    config: SamplerConfig,
    gateway: LlmGateway,
    rng: random.Random,
    state: _RunState,
    iteration: int,
) -> IterationRecord:
    """One single-site update: redraw one slot conditioned on K random others.

    Clones of the slot's own example stay eligible for the shot set; only the
    slot itself is excluded. Empty recipes selected into the shot set are
    skipped when the prompt is rendered.
    """
    slot_id, shot_set = select_step_indices(rng, pool.size, config.num_shots)
    example = pool.example_for_slot(slot_id)
    shots = [shot for shot in (pool.shot_for_slot(s) for s in shot_set) if shot is not None]
    prompt = assemble_cot_prompt(shots, example.question_text, task.message)
    request = CompletionRequest(
        backend_id=config.sampling_backend,
        prompt=prompt,
        temperature=1.0,
        draw_index=state.next_draw_index(),
    )
    text, error = _complete_with_retry(gateway, request, retries=1)
    if text is None:
        return state.record(iteration, slot_id, shot_set, False, False, error=error)
    solution, answer = split_completion(text)
    draw_correct = exact_match(answer, example.gold_answer)
    accepted = rejection_decision(draw_correct, rng.random(), config.rejection_probability)
    if accepted:
        pool.slots[slot_id] = Recipe(
            slot_id=slot_id,
            example_id=example.example_id,
            solution_text=solution,
            born_iteration=iteration,
            source_model=config.sampling_backend,
            produced_correct_answer=draw_correct,
        )
    return state.record(iteration, slot_id, shot_set, draw_correct, accepted)


def _run_header(task: TaskBundle, config: SamplerConfig, mode: str, extra: dict | None) -> dict:
    header = {
        "mode": mode,
        "task": task.name,
        "config": asdict(config),
        "train_size": len(task.train),
    }
    if extra:
        header["resolved_config"] = extra
    return header


def _validate_pool_size(task: TaskBundle, config: SamplerConfig) -> None:
    if not task.train:
        raise ConfigError("task has no training examples")
    pool_size = len(task.train) * config.clone_factor
    if config.num_shots >= pool_size:
        raise ConfigError(
            f"num_shots {config.num_shots} must be < pool size {pool_size}"
        )


def run_gibbs(
    task: TaskBundle,
    config: SamplerConfig,
    gateway: LlmGateway,
    out_dir: str | Path | None = None,
    header_extra: dict | None = None,
) -> RunResult:
    """Initialization plus up to ``max_iterations`` Gibbs steps.

    Stops early when the cumulative running average has not strictly
    exceeded its historical maximum for ``early_stop_window`` consecutive
    iterations. Pool snapshots land in the output directory every
    500 iterations, plus ``pool-init`` and ``pool-final``.
    """
    _validate_pool_size(task, config)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    state = _RunState(out_path / "log.jsonl" if out_path else None)
    state.write_header(_run_header(task, config, "gibbs", header_extra))
    rng = random.Random(config.seed)
    pool = RecipePool(examples=task.train, clone_factor=config.clone_factor)

    try:
        initialize(pool, task, config, gateway, rng, state)
        _snapshot(pool, out_path, "init")

        best_avg = -1.0
        since_improvement = 0
        iterations_run = 0
        early_stopped = False
        for iteration in range(1, config.max_iterations + 1):
            entry = gibbs_step(pool, task, config, gateway, rng, state, iteration)
            iterations_run = iteration
            if entry.running_avg > best_avg:
                best_avg = entry.running_avg
                since_improvement = 0
            else:
                since_improvement += 1
            if iteration % SNAPSHOT_EVERY == 0:
                _snapshot(pool, out_path, str(iteration))
            if config.early_stop_window and since_improvement >= config.early_stop_window:
                early_stopped = True
                logger.info(
                    "early stop at iteration %d (no improvement for %d iterations)",
                    iteration,
                    config.early_stop_window,
                )
                break
        _snapshot(pool, out_path, "final")
    finally:
        state.close()
    return RunResult(
        pool=pool,
        records=state.records,
        iterations_run=iterations_run,
        early_stopped=early_stopped,
        log_path=state.log_path,
    )


def _score_slot(
    pool: RecipePool,
    slot_id: int,
    solution_text: str,
    task: TaskBundle,
    config: SamplerConfig,
    gateway: LlmGateway,
) -> float:
    example = pool.example_for_slot(slot_id)
    shot = ShotTuple(
        question_text=example.question_text,
        solution_text=solution_text,
        answer_text=example.gold_answer,
    )
    score = evaluator_mod.tuple_training_accuracy(
        shot,
        example.example_id,
        task.train,
        config.sampling_backend,
        gateway,
        message=task.message,
        slot_id=slot_id,
    )
    return score.accuracy


def greedy_round(
    pool: RecipePool,
    task: TaskBundle,
    config: SamplerConfig,
    gateway: LlmGateway,
    state: _RunState,
    scores: dict[int, float],
    round_index: int,
) -> None:
    """One greedy sweep: prompt with the top-K tuples, keep strict improvements.

    The top-K set is fixed at the start of the round (a slot's own tuple is
    excluded from its prompt and backfilled by the next-best). A slot's
    recipe is replaced only when the candidate tuple scores strictly higher
    on the training questions, so per-slot scores never decrease.
    """
    for slot_id in pool.nonempty_slot_ids():
        if slot_id not in scores:
            scores[slot_id] = _score_slot(
                pool, slot_id, pool.slots[slot_id].solution_text, task, config, gateway
            )
    ranked = sorted(pool.nonempty_slot_ids(), key=lambda s: (-scores[s], s))
    # Candidate prompts only ever use the top K+1 tuples (K plus the backfill
    # when a slot excludes itself); snapshot them so mid-round replacements
    # do not change prompts within the round.
    top_slots = ranked[: config.num_shots + 1]
    shots_by_slot = {s: pool.shot_for_slot(s) for s in top_slots}

    for slot_id in range(pool.size):
        example = pool.example_for_slot(slot_id)
        prompt_slots = [s for s in top_slots if s != slot_id][: config.num_shots]
        shots = [shots_by_slot[s] for s in prompt_slots]
        prompt = assemble_cot_prompt(
            [shot for shot in shots if shot is not None], example.question_text, task.message
        )
        request = CompletionRequest(
            backend_id=config.sampling_backend,
            prompt=prompt,
            temperature=1.0,
            draw_index=state.next_draw_index(),
        )
        text, error = _complete_with_retry(gateway, request, retries=1)
        if text is None:
            state.record(round_index, slot_id, prompt_slots, False, False, error=error)
            continue
        solution, answer = split_completion(text)
        draw_correct = exact_match(answer, example.gold_answer)
        replaced = False
        if solution:
            candidate_score = _score_slot(pool, slot_id, solution, task, config, gateway)
            incumbent_score = scores.get(slot_id, EMPTY_SLOT_SCORE)
            if candidate_score > incumbent_score:
                pool.slots[slot_id] = Recipe(
                    slot_id=slot_id,
                    example_id=example.example_id,
                    solution_text=solution,
                    born_iteration=round_index,
                    source_model=config.sampling_backend,
                    produced_correct_answer=draw_correct,
                )
                scores[slot_id] = candidate_score
                replaced = True
        state.record(round_index, slot_id, prompt_slots, draw_correct, replaced)


def run_greedy(
    task: TaskBundle,
    config: SamplerConfig,
    gateway: LlmGateway,
    out_dir: str | Path | None = None,
    header_extra: dict | None = None,
) -> RunResult:
    """Initialization plus ``max_iterations`` greedy rounds (no clone slots)."""
    if config.clone_factor != 1:
        raise ConfigError("greedy search uses one slot per example (clone_factor 1)")
    _validate_pool_size(task, config)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    state = _RunState(out_path / "log.jsonl" if out_path else None)
    state.write_header(_run_header(task, config, "greedy", header_extra))
    rng = random.Random(config.seed)
    pool = RecipePool(examples=task.train, clone_factor=1)

    scores: dict[int, float] = {}
    score_history: list[dict[int, float]] = []
    try:
        initialize(pool, task, config, gateway, rng, state)
        _snapshot(pool, out_path, "init")
        for round_index in range(1, config.max_iterations + 1):
            greedy_round(pool, task, config, gateway, state, scores, round_index)
            score_history.append(dict(scores))
            _snapshot(pool, out_path, str(round_index))
        _snapshot(pool, out_path, "final")
        if out_path is not None:
            (out_path / "greedy-scores.json").write_text(
                json.dumps(
                    [{str(k): v for k, v in round_scores.items()} for round_scores in score_history],
                    sort_keys=True,
                    indent=2,
                )
                + "\n",
                encoding="utf-8",
            )
    finally:
        state.close()
    return RunResult(
        pool=pool,
        records=state.records,
        iterations_run=config.max_iterations,
        early_stopped=False,
        log_path=state.log_path,
        greedy_scores=score_history,
    )
