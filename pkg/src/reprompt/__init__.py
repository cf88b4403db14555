"""Automatic chain-of-thought prompt inference over question/answer pairs.

A recipe pool is refined by Gibbs sampling with a rejection rule (or a
greedy variant), the best tuples are selected by per-tuple training
accuracy, and the resulting prompt is evaluated against zero-shot, few-shot
and prompt-file baselines. A deterministic scripted oracle backend makes the
whole pipeline runnable and testable offline.
"""

from .backends import CompletionRequest, CompletionResult, HttpBackend, HttpBackendConfig
from .cache import FileCache, cache_key
from .errors import (
    AuthError,
    BackendError,
    CacheIOError,
    ConfigError,
    GatewayError,
    InsufficientExamples,
    InsufficientTuples,
    LogInconsistency,
    MissingCotFile,
    OracleParseError,
    RepromptError,
    SchemaError,
)
from .evaluator import (
    EvalReport,
    TupleScore,
    evaluate_prompt,
    learning_curve,
    run_baseline,
    select_test_tuples,
    tuple_training_accuracy,
)
from .gateway import LlmGateway
from .oracle import OracleSpec, ScriptedOracleBackend, classify_style, parse_prompt
from .pool import RecipePool
from .prompts import (
    DEFAULT_INSTRUCTION,
    Recipe,
    ShotTuple,
    TaskExample,
    assemble_cot_prompt,
    assemble_fewshot_prompt,
    exact_match,
    extract_answer,
    split_completion,
)
from .sampler import (
    IterationRecord,
    RunResult,
    SamplerConfig,
    gibbs_step,
    greedy_round,
    initialize,
    rejection_decision,
    run_gibbs,
    run_greedy,
    select_step_indices,
)
from .tasks import TaskBundle, ingest_bigbench, load_task, synthetic_task

__version__ = "0.1.0"

__all__ = [
    "AuthError",
    "BackendError",
    "CacheIOError",
    "CompletionRequest",
    "CompletionResult",
    "ConfigError",
    "DEFAULT_INSTRUCTION",
    "EvalReport",
    "FileCache",
    "GatewayError",
    "HttpBackend",
    "HttpBackendConfig",
    "InsufficientExamples",
    "InsufficientTuples",
    "IterationRecord",
    "LlmGateway",
    "LogInconsistency",
    "MissingCotFile",
    "OracleParseError",
    "OracleSpec",
    "Recipe",
    "RecipePool",
    "RepromptError",
    "RunResult",
    "SamplerConfig",
    "SchemaError",
    "ScriptedOracleBackend",
    "ShotTuple",
    "TaskBundle",
    "TaskExample",
    "TupleScore",
    "assemble_cot_prompt",
    "assemble_fewshot_prompt",
    "cache_key",
    "classify_style",
    "evaluate_prompt",
    "exact_match",
    "extract_answer",
    "gibbs_step",
    "greedy_round",
    "ingest_bigbench",
    "initialize",
    "learning_curve",
    "load_task",
    "parse_prompt",
    "rejection_decision",
    "run_baseline",
    "run_gibbs",
    "run_greedy",
    "select_step_indices",
    "select_test_tuples",
    "split_completion",
    "synthetic_task",
    "tuple_training_accuracy",
]
