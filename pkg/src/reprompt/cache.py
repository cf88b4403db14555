"""Durable response cache: one JSON file per request digest.

Layout: ``<cache_dir>/<first-2-hex>/<digest>.json`` holding
``{"request": ..., "result": ..., "timestamp": ...}``. Writes go through a
temp file and ``os.replace`` so concurrent readers never see torn entries.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

from .backends import CompletionRequest, CompletionResult
from .errors import CacheIOError


def cache_key(request: CompletionRequest) -> str:
    """Collision-resistant digest over the backend, prompt and decoding params.

    ``draw_index`` distinguishes repeated stochastic draws; at temperature 0
    the completion is deterministic, so the index is normalized to 0 and
    repeated calls share one entry.
    """
    draw_index = 0 if request.temperature == 0.0 else request.draw_index
    payload = json.dumps(
        {
            "backend_id": request.backend_id,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "top_p": request.top_p,
            "temperature": request.temperature,
            "stop_sequences": list(request.stop_sequences),
            "frequency_penalty": request.frequency_penalty,
            "presence_penalty": request.presence_penalty,
            "draw_index": draw_index,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class FileCache:
    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)

    def _path(self, digest: str) -> Path:
        return self.cache_dir / digest[:2] / f"{digest}.json"

    def get(self, digest: str) -> CompletionResult | None:
        path = self._path(digest)
        try:
            raw = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise CacheIOError(f"cannot read cache entry: {exc}", digest=digest) from exc
        try:
            entry = json.loads(raw)
            stored = entry["result"]
            return CompletionResult(
                text=stored["text"],
                finish_reason=stored["finish_reason"],
                from_cache=True,
            )
        except (json.JSONDecodeError, KeyError, TypeError):
            # A malformed entry is treated as a miss; it will be rewritten.
            return None

    def put(self, digest: str, request: CompletionRequest, result: CompletionResult) -> None:
        path = self._path(digest)
        entry = {
            "request": request.to_dict(),
            "result": {"text": result.text, "finish_reason": result.finish_reason},
            "timestamp": time.time(),
        }
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".tmp.{os.getpid()}")
            tmp.write_text(json.dumps(entry, ensure_ascii=False, sort_keys=True), encoding="utf-8")
            os.replace(tmp, path)
        except OSError as exc:
            raise CacheIOError(f"cannot write cache entry: {exc}", digest=digest) from exc


class NullCache:
    """Cache stand-in that stores nothing (large offline simulation runs)."""

    def get(self, digest: str) -> CompletionResult | None:
        return None

    def put(self, digest: str, request: CompletionRequest, result: CompletionResult) -> None:
        return None
