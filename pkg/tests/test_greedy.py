"""Greedy search variant: strict-improvement replacement and monotonicity."""

from __future__ import annotations

import pytest

from reprompt.errors import ConfigError
from reprompt.gateway import LlmGateway
from reprompt.oracle import OracleSpec, ScriptedOracleBackend
from reprompt.pool import RecipePool
from reprompt.prompts import Recipe
from reprompt.sampler import SamplerConfig, greedy_round, run_greedy, _RunState
from reprompt.tasks import synthetic_task


def exact_oracle_gateway(task):
    """Deterministic style accuracies make tuple scores exact (1.0 or 0.0)."""
    spec = OracleSpec(
        seed=31,
        style_accuracy={"GOOD": 1.0, "BAD": 0.0, "NONE": 0.0},
        invention_rate=1.0,
        invention_weights={"GOOD": 1.0},
    )
    gateway = LlmGateway()
    gateway.register(ScriptedOracleBackend("oracle", task.examples, spec, task.message))
    return gateway


def make_pool(task, styles):
    pool = RecipePool(examples=task.train, clone_factor=1)
    for slot_id, style in styles.items():
        pool.slots[slot_id] = Recipe(
            slot_id,
            task.train[slot_id].example_id,
            f"#{style} recipe {slot_id}",
            born_iteration=-1,
        )
    return pool


def greedy_config(**overrides):
    defaults = dict(
        init_backend="oracle",
        sampling_backend="oracle",
        num_shots=2,
        max_iterations=3,
        early_stop_window=3,
        seed=0,
    )
    defaults.update(overrides)
    return SamplerConfig(**defaults)


def test_tie_keeps_incumbent_and_improvement_replaces():
    task = synthetic_task(n_train=5, n_test=1, seed=2)
    gateway = exact_oracle_gateway(task)
    pool = make_pool(task, {0: "good", 1: "good", 2: "good", 3: "bad"})
    before = {j: pool.slots[j].solution_text for j in range(5)}
    scores: dict[int, float] = {}
    state = _RunState(None)
    greedy_round(pool, task, greedy_config(), gateway, state, scores, round_index=1)

    # GOOD incumbents score 1.0; GOOD candidates also score 1.0: tie, kept.
    for j in (0, 1, 2):
        assert pool.slots[j].solution_text == before[j]
        assert scores[j] == 1.0
    # BAD incumbent scored 0.0, GOOD candidate scores 1.0: replaced.
    assert pool.slots[3].solution_text != before[3]
    assert "#good" in pool.slots[3].solution_text
    assert scores[3] == 1.0
    # Empty slot: any scored candidate beats the sentinel; it gets filled.
    assert not pool.slots[4].is_empty
    assert scores[4] == 1.0


def test_replacement_records_are_logged():
    task = synthetic_task(n_train=5, n_test=1, seed=2)
    gateway = exact_oracle_gateway(task)
    pool = make_pool(task, {0: "good", 1: "good", 2: "bad"})
    state = _RunState(None)
    greedy_round(pool, task, greedy_config(), gateway, state, {}, round_index=1)
    assert len(state.records) == pool.size
    accepted = {r.slot for r in state.records if r.accepted}
    assert 2 in accepted  # the bad slot was improved
    assert {0, 1} & accepted == set()  # ties kept
    for record in state.records:
        assert record.iteration == 1
        assert record.slot not in record.shot_set


def test_prompt_excludes_own_tuple_with_backfill():
    task = synthetic_task(n_train=5, n_test=1, seed=2)
    gateway = exact_oracle_gateway(task)
    pool = make_pool(task, {0: "good", 1: "good", 2: "good", 3: "bad"})
    state = _RunState(None)
    greedy_round(pool, task, greedy_config(), gateway, state, {}, round_index=1)
    by_slot = {r.slot: r for r in state.records}
    # Top-2 are slots 0 and 1; slot 0's prompt backfills with slot 2.
    assert by_slot[0].shot_set == [1, 2]
    assert by_slot[1].shot_set == [0, 2]
    assert by_slot[4].shot_set == [0, 1]


def test_run_greedy_rejects_clones():
    task = synthetic_task(n_train=5, n_test=1, seed=2)
    gateway = exact_oracle_gateway(task)
    config = greedy_config(clone_factor=2)
    with pytest.raises(ConfigError):
        run_greedy(task, config, gateway)


def test_run_greedy_monotone_scores_on_synthetic_task():
    task = synthetic_task(n_train=10, n_test=2, seed=6)
    spec = OracleSpec(
        seed=19,
        style_accuracy={"GOOD": 0.9, "BAD": 0.1, "NONE": 0.5},
        invention_rate=1.0,
        invention_weights={"GOOD": 0.5, "BAD": 0.5},
    )
    gateway = LlmGateway()
    gateway.register(ScriptedOracleBackend("oracle", task.examples, spec, task.message))
    config = greedy_config(num_shots=3, max_iterations=4, early_stop_window=4, seed=9)
    result = run_greedy(task, config, gateway)

    assert result.iterations_run == 4
    history = result.greedy_scores
    assert len(history) == 4
    # Per-slot scores never decrease.
    for earlier, later in zip(history, history[1:]):
        for slot_id, score in earlier.items():
            assert later[slot_id] >= score
    # Mean of the selected top-K never decreases either.
    k = config.num_shots
    top_means = [
        sum(sorted(scores.values(), reverse=True)[:k]) / min(k, len(scores))
        for scores in history
    ]
    for earlier, later in zip(top_means, top_means[1:]):
        assert later >= earlier


def test_run_greedy_deterministic(tmp_path):
    task = synthetic_task(n_train=6, n_test=1, seed=3)
    config = greedy_config(max_iterations=2, early_stop_window=2, seed=4)

    def one_run(out):
        gateway = exact_oracle_gateway(task)
        return run_greedy(task, config, gateway, out_dir=out)

    result_a = one_run(tmp_path / "a")
    result_b = one_run(tmp_path / "b")
    assert result_a.pool.dumps() == result_b.pool.dumps()
    assert (tmp_path / "a" / "log.jsonl").read_bytes() == (
        tmp_path / "b" / "log.jsonl"
    ).read_bytes()
