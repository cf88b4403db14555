"""Command-line interface: dataset ingestion, runs, selection, evaluation.

One command per process. Configuration comes from a JSON file with flag
overrides (precedence: flags > file > defaults). Every run writes a
self-describing directory under the output root: resolved config in the log
header, seeds included, so scripted-oracle runs replay bit-exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from .backends import HttpBackend, HttpBackendConfig
from .errors import (
    ConfigError,
    GatewayError,
    MissingCotFile,
    RepromptError,
    SchemaError,
)
from .evaluator import (
    DEFAULT_COT_ANSWER_REGEX,
    METHOD_COT_FILE,
    METHOD_FEW_SHOT,
    METHOD_GIBBS,
    METHOD_GREEDY,
    METHOD_ZERO_SHOT,
    evaluate_prompt,
    learning_curve,
    run_baseline,
    select_test_tuples,
    tuple_training_accuracy,
    write_curve_csv,
)
from .gateway import LlmGateway
from .oracle import OracleSpec, ScriptedOracleBackend
from .pool import RecipePool
from .prompts import Recipe, ShotTuple
from .sampler import SamplerConfig, run_gibbs, run_greedy
from .tasks import TaskBundle, ingest_bigbench, load_task

logger = logging.getLogger(__name__)

GIBBS_DEFAULT_ITERATIONS = 20_000
GREEDY_DEFAULT_ITERATIONS = 10

CONFIG_DEFAULTS: dict = {
    "task": None,
    "seed": 0,
    "num_shots": 5,
    "rejection_probability": 0.99,
    "clone_factor": 1,
    "early_stop_window": 1_000,
    "init_backend": "oracle",
    "sampling_backend": "oracle",
    "backends": {"oracle": {"kind": "oracle"}},
    "cache_dir": "cache",
    "out_dir": "runs",
    "train_size": 20,
    "cot_file": None,
    "cot_answer_regex": DEFAULT_COT_ANSWER_REGEX,
}


def resolve_config(args: argparse.Namespace, max_iterations_default: int | None = None) -> dict:
    """Merge defaults, the config file, and CLI flag overrides."""
    config = dict(CONFIG_DEFAULTS)
    config["max_iterations"] = max_iterations_default
    if getattr(args, "config", None):
        try:
            file_config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_config, dict):
            raise ConfigError(f"config {args.config} must be a JSON object")
        config.update(file_config)
    flag_map = {
        "task": "task",
        "seed": "seed",
        "out": "out_dir",
        "cache_dir": "cache_dir",
        "train_size": "train_size",
        "cot_file": "cot_file",
        "max_iterations": "max_iterations",
        "num_shots": "num_shots",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            config[key] = value
    if getattr(args, "backend", None):
        config["sampling_backend"] = args.backend
    if config["task"] is None:
        raise ConfigError("no task file given (set --task or the config 'task' field)")
    return config


def build_gateway(config: dict, task: TaskBundle) -> LlmGateway:
    gateway = LlmGateway(cache_dir=config.get("cache_dir"))
    backends = config.get("backends") or {}
    if not isinstance(backends, dict) or not backends:
        raise ConfigError("config 'backends' must be a non-empty object")
    for backend_id, spec in backends.items():
        kind = spec.get("kind", "oracle")
        if kind == "oracle":
            oracle_kwargs = {
                key: spec[key]
                for key in (
                    "seed",
                    "style_accuracy",
                    "invention_rate",
                    "invention_weights",
                    "mutation_rate",
                )
                if key in spec
            }
            gateway.register(
                ScriptedOracleBackend(
                    backend_id, task.examples, OracleSpec(**oracle_kwargs), task.message
                )
            )
        elif kind in ("openai-completions", "openai-chat"):
            try:
                backend_config = HttpBackendConfig(
                    base_url=spec["base_url"],
                    model=spec["model"],
                    transport="chat" if kind == "openai-chat" else "completions",
                    timeout=spec.get("timeout", 60.0),
                    max_concurrent=spec.get("max_concurrent", 4),
                    min_interval=spec.get("min_interval", 0.0),
                )
            except KeyError as exc:
                raise ConfigError(f"backend {backend_id!r} missing {exc}") from exc
            gateway.register(HttpBackend(backend_id, backend_config))
        else:
            raise ConfigError(f"backend {backend_id!r}: unknown kind {kind!r}")
    return gateway


def sampler_config(config: dict) -> SamplerConfig:
    max_iterations = config["max_iterations"]
    # A window longer than the run is meaningless; shrink it with the run.
    window = min(config["early_stop_window"], max_iterations)
    return SamplerConfig(
        init_backend=config["init_backend"],
        sampling_backend=config["sampling_backend"],
        num_shots=config["num_shots"],
        max_iterations=max_iterations,
        rejection_probability=config["rejection_probability"],
        clone_factor=config["clone_factor"],
        early_stop_window=window,
        seed=config["seed"],
    )


def make_run_dir(config: dict, prefix: str) -> Path:
    """Fresh run directory: timestamp plus a short config hash, never reused."""
    canonical = json.dumps(config, sort_keys=True, default=str)
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:8]
    stamp = time.strftime("%Y%m%dT%H%M%S")
    base = Path(config["out_dir"])
    run_dir = base / f"{prefix}-{stamp}-{digest}"
    suffix = 1
    while run_dir.exists():
        suffix += 1
        run_dir = base / f"{prefix}-{stamp}-{digest}-{suffix}"
    run_dir.mkdir(parents=True)
    return run_dir


def _load_pool(run_dir: Path, task: TaskBundle) -> RecipePool:
    pool_path = run_dir / "pool-final.json"
    try:
        doc = json.loads(pool_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read {pool_path}: {exc}") from exc
    slots = [
        Recipe(
            slot_id=raw["slot_id"],
            example_id=raw["example_id"],
            solution_text=raw["solution_text"],
            born_iteration=raw["born_iteration"],
            source_model=raw["source_model"],
            produced_correct_answer=raw["produced_correct_answer"],
        )
        for raw in doc["slots"]
    ]
    return RecipePool(examples=task.train, clone_factor=doc["clone_factor"], slots=slots)


def _shots_from_prompt_file(path: str | Path) -> tuple[str, list[ShotTuple]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        shots = [
            ShotTuple(
                question_text=raw["question"],
                solution_text=raw["solution"],
                answer_text=raw["answer"],
            )
            for raw in doc["shots"]
        ]
        return doc.get("method", METHOD_GIBBS), shots
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"cannot read prompt file {path}: {exc}") from exc


def cmd_ingest(args: argparse.Namespace) -> int:
    reserved = None
    if args.reserved_ids:
        try:
            reserved = json.loads(Path(args.reserved_ids).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read reserved ids {args.reserved_ids}: {exc}") from exc
    bundle = ingest_bigbench(
        args.bigbench,
        train_size=args.train_size if args.train_size is not None else 20,
        seed=args.seed if args.seed is not None else 0,
        reserved_test_ids=reserved,
    )
    out = Path(args.out or f"{bundle.name}.task.json")
    bundle.save(out)
    print(
        f"ingest: task={bundle.name} train={len(bundle.train)} test={len(bundle.test)} "
        f"-> {out}"
    )
    return 0


def _run_sampler(args: argparse.Namespace, greedy: bool) -> int:
    default_iters = GREEDY_DEFAULT_ITERATIONS if greedy else GIBBS_DEFAULT_ITERATIONS
    config = resolve_config(args, max_iterations_default=default_iters)
    if config["max_iterations"] is None:
        config["max_iterations"] = default_iters
    task = load_task(config["task"])
    gateway = build_gateway(config, task)
    run_dir = make_run_dir(config, "greedy" if greedy else "gibbs")
    runner = run_greedy if greedy else run_gibbs
    result = runner(task, sampler_config(config), gateway, out_dir=run_dir, header_extra=config)
    sampling = [r for r in result.records if r.iteration >= 0]
    final_avg = sampling[-1].running_avg if sampling else 0.0
    mode = "run-greedy" if greedy else "run-gibbs"
    print(
        f"{mode}: task={task.name} iterations={result.iterations_run} "
        f"early_stopped={result.early_stopped} running_avg={final_avg:.3f} "
        f"backend_calls={gateway.backend_calls} dir={run_dir}"
    )
    return 0


def cmd_run_gibbs(args: argparse.Namespace) -> int:
    return _run_sampler(args, greedy=False)


def cmd_run_greedy(args: argparse.Namespace) -> int:
    return _run_sampler(args, greedy=True)


def cmd_select_prompt(args: argparse.Namespace) -> int:
    config = resolve_config(args, max_iterations_default=0)
    task = load_task(config["task"])
    gateway = build_gateway(config, task)
    pool = _load_pool(Path(args.run_dir), task)
    scores = {}
    for slot_id in pool.nonempty_slot_ids():
        shot = pool.shot_for_slot(slot_id)
        example = pool.example_for_slot(slot_id)
        scores[slot_id] = tuple_training_accuracy(
            shot,
            example.example_id,
            task.train,
            config["sampling_backend"],
            gateway,
            message=task.message,
            slot_id=slot_id,
        )
    shots = select_test_tuples(pool, args.k, scores)
    ranked = sorted(scores.values(), key=lambda s: (-s.accuracy, s.slot_id))
    doc = {
        "task_name": task.name,
        "method": METHOD_GREEDY if "greedy" in Path(args.run_dir).name else METHOD_GIBBS,
        "num_shots": args.k,
        "shots": [
            {
                "question": shot.question_text,
                "solution": shot.solution_text,
                "answer": shot.answer_text,
                "score": score.accuracy,
            }
            for shot, score in zip(shots, ranked)
        ],
    }
    out = Path(args.out or Path(args.run_dir) / "prompt.json")
    out.write_text(
        json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"select-prompt: task={task.name} shots={len(shots)} "
        f"backend_calls={gateway.backend_calls} -> {out}"
    )
    return 0


def _eval_one(
    method: str,
    config: dict,
    task: TaskBundle,
    gateway: LlmGateway,
    backend_id: str,
    prompt_file: str | None,
):
    if method in (METHOD_ZERO_SHOT, METHOD_FEW_SHOT, METHOD_COT_FILE):
        return run_baseline(
            method,
            task,
            backend_id,
            gateway,
            cot_file=config.get("cot_file"),
            cot_answer_regex=config.get("cot_answer_regex", DEFAULT_COT_ANSWER_REGEX),
        )
    if method in (METHOD_GIBBS, METHOD_GREEDY):
        if not prompt_file:
            raise ConfigError(f"method {method} requires --prompt-file from select-prompt")
        _, shots = _shots_from_prompt_file(prompt_file)
        return evaluate_prompt(
            shots,
            task.test,
            backend_id,
            gateway,
            message=task.message,
            task_name=task.name,
            method=method,
        )
    raise ConfigError(f"unknown method {method!r}")


def cmd_eval(args: argparse.Namespace) -> int:
    config = resolve_config(args, max_iterations_default=0)
    task = load_task(config["task"])
    gateway = build_gateway(config, task)
    backend_id = args.backend or config["sampling_backend"]
    report = _eval_one(args.method, config, task, gateway, backend_id, args.prompt_file)
    run_dir = make_run_dir(config, "eval")
    out = run_dir / f"eval-{args.method}-{backend_id}.json"
    report.save(out)
    print(
        f"eval: task={task.name} method={args.method} backend={backend_id} "
        f"accuracy={report.accuracy:.3f} n={report.evaluated_on} "
        f"backend_calls={gateway.backend_calls} -> {out}"
    )
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = resolve_config(args, max_iterations_default=0)
    task = load_task(config["task"])
    gateway = build_gateway(config, task)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    backends = (
        [b.strip() for b in args.backends.split(",") if b.strip()]
        if args.backends
        else [config["sampling_backend"]]
    )
    run_dir = make_run_dir(config, "compare")
    cells = {}
    for method in methods:
        for backend_id in backends:
            report = _eval_one(method, config, task, gateway, backend_id, args.prompt_file)
            report.save(run_dir / f"eval-{method}-{backend_id}.json")
            cells[(method, backend_id)] = report.accuracy
    width = max(len(m) for m in methods) + 2
    header = "method".ljust(width) + "".join(b.rjust(12) for b in backends)
    print(header)
    for method in methods:
        row = method.ljust(width)
        row += "".join(f"{cells[(method, b)]:12.3f}" for b in backends)
        print(row)
    print(
        f"compare: task={task.name} cells={len(cells)} "
        f"backend_calls={gateway.backend_calls} dir={run_dir}"
    )
    return 0


def cmd_curve(args: argparse.Namespace) -> int:
    series = learning_curve(args.log)
    out = Path(args.out or Path(args.log).with_suffix(".csv"))
    write_curve_csv(series, out)
    print(f"curve: points={len(series)} -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reprompt",
        description="Infer chain-of-thought prompt recipes from question/answer pairs.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--task", help="task bundle JSON (overrides config)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory root")
        p.add_argument("--cache-dir", dest="cache_dir", default=None)
        p.add_argument("--backend", default=None, help="backend id override")
        p.add_argument("--train-size", dest="train_size", type=int, default=None)
        p.add_argument("--cot-file", dest="cot_file", default=None)

    p_ingest = sub.add_parser("ingest", help="convert a Big-Bench task JSON into a bundle")
    p_ingest.add_argument("--bigbench", required=True)
    p_ingest.add_argument("--out", default=None)
    p_ingest.add_argument("--seed", type=int, default=None)
    p_ingest.add_argument("--train-size", dest="train_size", type=int, default=None)
    p_ingest.add_argument("--reserved-ids", dest="reserved_ids", default=None,
                          help="JSON list of example ids reserved for testing")
    p_ingest.set_defaults(func=cmd_ingest)

    for name, func in (("run-gibbs", cmd_run_gibbs), ("run-greedy", cmd_run_greedy)):
        p_run = sub.add_parser(name, help=f"{name} over the task's training split")
        add_common(p_run)
        p_run.add_argument("--max-iterations", dest="max_iterations", type=int, default=None)
        p_run.add_argument("--num-shots", dest="num_shots", type=int, default=None)
        p_run.set_defaults(func=func)

    p_select = sub.add_parser("select-prompt", help="pick the best tuples from a finished run")
    add_common(p_select)
    p_select.add_argument("--run-dir", dest="run_dir", required=True)
    p_select.add_argument("--k", type=int, default=5)
    p_select.set_defaults(func=cmd_select_prompt)

    p_eval = sub.add_parser("eval", help="evaluate one prompting method on the test split")
    add_common(p_eval)
    p_eval.add_argument(
        "--method",
        required=True,
        choices=[METHOD_ZERO_SHOT, METHOD_FEW_SHOT, METHOD_COT_FILE, METHOD_GIBBS, METHOD_GREEDY],
    )
    p_eval.add_argument("--prompt-file", dest="prompt_file", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_compare = sub.add_parser("compare", help="accuracy table over methods x backends")
    add_common(p_compare)
    p_compare.add_argument(
        "--methods", default=f"{METHOD_ZERO_SHOT},{METHOD_FEW_SHOT}",
        help="comma-separated method list",
    )
    p_compare.add_argument("--backends", default=None, help="comma-separated backend ids")
    p_compare.add_argument("--prompt-file", dest="prompt_file", default=None)
    p_compare.set_defaults(func=cmd_compare)

    p_curve = sub.add_parser("curve", help="learning curve CSV from a run log")
    p_curve.add_argument("log")
    p_curve.add_argument("--out", default=None)
    p_curve.set_defaults(func=cmd_curve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, SchemaError, MissingCotFile) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    except GatewayError as exc:
        print(f"error [backend]: {exc}", file=sys.stderr)
        return 3
    except RepromptError as exc:
        print(f"error [run]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
