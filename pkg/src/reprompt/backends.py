"""Completion requests/results and the remote OpenAI-compatible backends.

Two HTTP transports are supported behind the same interface: the plain
completions endpoint (prompt in, text out) and the chat endpoint, where the
whole prompt is placed in a single user turn. Both honor a per-backend
concurrency ceiling, a minimum inter-request interval, and retry transient
failures with exponential backoff.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

import httpx

from .errors import AuthError, BackendError, RateLimitExhausted

logger = logging.getLogger(__name__)

API_KEY_ENV = "REPROMPT_API_KEY"

# Retry policy for remote calls: timeouts, 429 and 5xx only.
RETRY_ATTEMPTS = 5
RETRY_BASE_DELAY = 1.0

FINISH_STOP = "stop"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"


@dataclass(frozen=True)
class CompletionRequest:
    """One decoding call. Defaults follow the experimental decoding settings:

    500 max output tokens, top-p 0.5, no frequency/presence penalty, "END" as
    the stop word, temperature 1.0 for sampling runs and 0.0 for testing.
    """

    backend_id: str
    prompt: str
    max_tokens: int = 500
    top_p: float = 0.5
    temperature: float = 1.0
    stop_sequences: tuple[str, ...] = ("END",)
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0
    draw_index: int = 0

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "prompt": self.prompt,
            "max_tokens": self.max_tokens,
            "top_p": self.top_p,
            "temperature": self.temperature,
            "stop_sequences": list(self.stop_sequences),
            "frequency_penalty": self.frequency_penalty,
            "presence_penalty": self.presence_penalty,
            "draw_index": self.draw_index,
        }


@dataclass
class CompletionResult:
    text: str
    finish_reason: str = FINISH_STOP
    from_cache: bool = False


def truncate_at_stop(text: str, stop_sequences: tuple[str, ...]) -> tuple[str, bool]:
    """Cut the text at the earliest stop sequence. Returns (text, stopped)."""
    cut = len(text)
    for stop in stop_sequences:
        idx = text.find(stop)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut], cut < len(text)


class Backend(Protocol):
    backend_id: str

    def generate(self, request: CompletionRequest) -> CompletionResult: ...


class RateLimiter:
    """Concurrency ceiling plus a minimum interval between request starts."""

    def __init__(self, max_concurrent: int = 4, min_interval: float = 0.0):
        self._semaphore = threading.Semaphore(max_concurrent)
        self._min_interval = min_interval
        self._clock_lock = threading.Lock()
        self._next_start = 0.0

    def __enter__(self):
        self._semaphore.acquire()
        if self._min_interval > 0:
            with self._clock_lock:
                now = time.monotonic()
                wait = self._next_start - now
                self._next_start = max(now, self._next_start) + self._min_interval
            if wait > 0:
                time.sleep(wait)
        return self

    def __exit__(self, *exc_info):
        self._semaphore.release()
        return False


@dataclass
class HttpBackendConfig:
    base_url: str
    model: str
    transport: str = "completions"  # or "chat"
    timeout: float = 60.0
    max_concurrent: int = 4
    min_interval: float = 0.0
    api_key_env: str = API_KEY_ENV


class HttpBackend:
    """OpenAI-compatible completion client with retries and rate limiting."""

    def __init__(
        self,
        backend_id: str,
        config: HttpBackendConfig,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend_id = backend_id
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)
        self._sleep = sleep
        self._limiter = RateLimiter(config.max_concurrent, config.min_interval)

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise AuthError(
                f"backend {self.backend_id!r}: credential missing "
                f"(set {self.config.api_key_env})"
            )
        return key

    def _request_body(self, request: CompletionRequest) -> tuple[str, dict]:
        common = {
            "model": self.config.model,
            "max_tokens": request.max_tokens,
            "top_p": request.top_p,
            "temperature": request.temperature,
            "stop": list(request.stop_sequences),
            "frequency_penalty": request.frequency_penalty,
            "presence_penalty": request.presence_penalty,
        }
        if self.config.transport == "chat":
            url = self.config.base_url.rstrip("/") + "/chat/completions"
            body = {"messages": [{"role": "user", "content": request.prompt}], **common}
        else:
            url = self.config.base_url.rstrip("/") + "/completions"
            body = {"prompt": request.prompt, **common}
        return url, body

    def _parse_response(self, payload: dict) -> CompletionResult:
        try:
            choice = payload["choices"][0]
            if self.config.transport == "chat":
                text = choice["message"]["content"]
            else:
                text = choice["text"]
            finish = choice.get("finish_reason") or FINISH_STOP
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"backend {self.backend_id!r}: malformed response") from exc
        if finish not in (FINISH_STOP, FINISH_LENGTH):
            finish = FINISH_STOP
        return CompletionResult(text=text, finish_reason=finish)

    def generate(self, request: CompletionRequest) -> CompletionResult:
        url, body = self._request_body(request)
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last_error: Exception | None = None
        for attempt in range(RETRY_ATTEMPTS):
            if attempt > 0:
                self._sleep(RETRY_BASE_DELAY * 2 ** (attempt - 1))
            try:
                with self._limiter:
                    response = self._client.post(url, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last_error = exc
                logger.warning("backend %s timeout (attempt %d)", self.backend_id, attempt + 1)
                continue
            except httpx.HTTPError as exc:
                raise BackendError(f"backend {self.backend_id!r}: transport failure: {exc}") from exc
            if response.status_code in (401, 403):
                raise AuthError(f"backend {self.backend_id!r}: credential rejected")
            if response.status_code == 429 or response.status_code >= 500:
                last_error = BackendError(
                    f"backend {self.backend_id!r}: status {response.status_code}"
                )
                logger.warning(
                    "backend %s status %d (attempt %d)",
                    self.backend_id,
                    response.status_code,
                    attempt + 1,
                )
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"backend {self.backend_id!r}: status {response.status_code}"
                )
            result = self._parse_response(response.json())
            text, stopped = truncate_at_stop(result.text, request.stop_sequences)
            if stopped:
                result = CompletionResult(text=text, finish_reason=FINISH_STOP)
            else:
                result = CompletionResult(text=text, finish_reason=result.finish_reason)
            return result
        raise RateLimitExhausted(
            f"backend {self.backend_id!r}: retry budget spent ({RETRY_ATTEMPTS} attempts): "
            f"{last_error}"
        )
