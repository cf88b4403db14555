"""Uniform completion interface: backend registry, response cache, counters."""

from __future__ import annotations

import logging
from pathlib import Path

from .backends import Backend, CompletionRequest, CompletionResult, truncate_at_stop
from .cache import FileCache, NullCache, cache_key
from .errors import ConfigError, GatewayError

logger = logging.getLogger(__name__)


class LlmGateway:
    """Routes completion requests to registered backends through the cache.

    ``backend_calls`` counts actual backend invocations (cache misses), which
    is what warm-cache determinism checks assert against.
    """

    def __init__(self, cache_dir: str | Path | None = None):
        self._backends: dict[str, Backend] = {}
        self._cache = FileCache(cache_dir) if cache_dir is not None else NullCache()
        self.backend_calls = 0
        self.cache_hits = 0

    def register(self, backend: Backend) -> None:
        self._backends[backend.backend_id] = backend

    def backend_ids(self) -> list[str]:
        return sorted(self._backends)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        """Resolve one completion, serving from the cache when possible."""
        if request.backend_id not in self._backends:
            raise ConfigError(f"unknown backend {request.backend_id!r}")
        digest = cache_key(request)
        cached = self._cache.get(digest)
        if cached is not None:
            self.cache_hits += 1
            return cached
        backend = self._backends[request.backend_id]
        try:
            result = backend.generate(request)
        except GatewayError as exc:
            if not exc.digest:
                exc.digest = digest
            raise
        self.backend_calls += 1
        text, stopped = truncate_at_stop(result.text, request.stop_sequences)
        if stopped:
            result = CompletionResult(text=text, finish_reason="stop")
        self._cache.put(digest, request, result)
        return result
