"""Cache, HTTP backend retry/rate-limit behavior, and gateway routing."""

from __future__ import annotations

import json
import threading

import httpx
import pytest

from reprompt.backends import (
    CompletionRequest,
    CompletionResult,
    HttpBackend,
    HttpBackendConfig,
    RateLimiter,
    truncate_at_stop,
)
from reprompt.cache import FileCache, cache_key
from reprompt.errors import AuthError, ConfigError, RateLimitExhausted
from reprompt.gateway import LlmGateway


def make_request(**overrides) -> CompletionRequest:
    defaults = dict(backend_id="b", prompt="hello")
    defaults.update(overrides)
    return CompletionRequest(**defaults)


class EchoBackend:
    """Test double: echoes the prompt, counts invocations."""

    def __init__(self, backend_id="b", text="echo"):
        self.backend_id = backend_id
        self.text = text
        self.calls = 0

    def generate(self, request: CompletionRequest) -> CompletionResult:
        self.calls += 1
        return CompletionResult(text=self.text)


def test_request_defaults_match_decoding_settings():
    request = make_request()
    assert request.max_tokens == 500
    assert request.top_p == 0.5
    assert request.temperature == 1.0
    assert request.stop_sequences == ("END",)
    assert request.frequency_penalty == 0.0
    assert request.presence_penalty == 0.0


def test_cache_key_stable_and_sensitive():
    assert cache_key(make_request()) == cache_key(make_request())
    assert cache_key(make_request()) != cache_key(make_request(prompt="other"))
    assert cache_key(make_request()) != cache_key(make_request(draw_index=1))


def test_cache_key_ignores_draw_index_at_temperature_zero():
    a = cache_key(make_request(temperature=0.0, draw_index=0))
    b = cache_key(make_request(temperature=0.0, draw_index=7))
    assert a == b


def test_file_cache_round_trip(tmp_path):
    cache = FileCache(tmp_path)
    request = make_request()
    digest = cache_key(request)
    assert cache.get(digest) is None
    cache.put(digest, request, CompletionResult(text="stored", finish_reason="stop"))
    hit = cache.get(digest)
    assert hit is not None
    assert hit.text == "stored"
    assert hit.from_cache is True
    # Idempotent put.
    cache.put(digest, request, CompletionResult(text="stored", finish_reason="stop"))
    assert cache.get(digest).text == "stored"


def test_file_cache_layout(tmp_path):
    cache = FileCache(tmp_path)
    request = make_request()
    digest = cache_key(request)
    cache.put(digest, request, CompletionResult(text="x"))
    path = tmp_path / digest[:2] / f"{digest}.json"
    assert path.exists()
    entry = json.loads(path.read_text())
    assert set(entry) == {"request", "result", "timestamp"}
    assert entry["request"]["prompt"] == "hello"


def test_gateway_serves_second_call_from_cache(tmp_path):
    gateway = LlmGateway(cache_dir=tmp_path)
    backend = EchoBackend()
    gateway.register(backend)
    first = gateway.complete(make_request(temperature=0.0))
    second = gateway.complete(make_request(temperature=0.0))
    assert backend.calls == 1
    assert gateway.backend_calls == 1
    assert first.text == second.text
    assert not first.from_cache
    assert second.from_cache


def test_gateway_unknown_backend():
    gateway = LlmGateway()
    with pytest.raises(ConfigError):
        gateway.complete(make_request(backend_id="nope"))


def test_gateway_truncates_stop_sequences(tmp_path):
    gateway = LlmGateway(cache_dir=tmp_path)
    gateway.register(EchoBackend(text="solution <answer>5</answer>\nEND junk"))
    result = gateway.complete(make_request())
    assert result.text == "solution <answer>5</answer>\n"
    assert result.finish_reason == "stop"
    assert "END" not in result.text


def test_truncate_at_stop_earliest_sequence():
    text, stopped = truncate_at_stop("abc STOP def END", ("END", "STOP"))
    assert text == "abc "
    assert stopped


def make_http_backend(handler, transport_kind="completions", **config_overrides):
    transport = httpx.MockTransport(handler)
    config = HttpBackendConfig(
        base_url="https://api.test/v1",
        model="test-model",
        transport=transport_kind,
        **config_overrides,
    )
    client = httpx.Client(transport=transport)
    sleeps: list[float] = []
    backend = HttpBackend("remote", config, client=client, sleep=sleeps.append)
    return backend, sleeps


def test_http_backend_requires_credential(monkeypatch):
    monkeypatch.delenv("REPROMPT_API_KEY", raising=False)
    backend, _ = make_http_backend(lambda request: httpx.Response(200, json={}))
    with pytest.raises(AuthError):
        backend.generate(make_request(backend_id="remote"))


def test_http_backend_completions_payload(monkeypatch):
    monkeypatch.setenv("REPROMPT_API_KEY", "k")
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers["Authorization"]
        return httpx.Response(
            200, json={"choices": [{"text": "out END", "finish_reason": "stop"}]}
        )

    backend, _ = make_http_backend(handler)
    result = backend.generate(make_request(backend_id="remote", prompt="P"))
    assert seen["url"].endswith("/completions")
    assert seen["auth"] == "Bearer k"
    assert seen["body"]["prompt"] == "P"
    assert seen["body"]["stop"] == ["END"]
    assert seen["body"]["top_p"] == 0.5
    assert seen["body"]["max_tokens"] == 500
    assert result.text == "out "
    assert result.finish_reason == "stop"


def test_http_backend_chat_payload(monkeypatch):
    monkeypatch.setenv("REPROMPT_API_KEY", "k")
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        return httpx.Response(
            200,
            json={"choices": [{"message": {"content": "hi"}, "finish_reason": "stop"}]},
        )

    backend, _ = make_http_backend(handler, transport_kind="chat")
    result = backend.generate(make_request(backend_id="remote", prompt="P"))
    assert seen["url"].endswith("/chat/completions")
    assert seen["body"]["messages"] == [{"role": "user", "content": "P"}]
    assert result.text == "hi"


def test_http_backend_retries_on_429_then_succeeds(monkeypatch):
    monkeypatch.setenv("REPROMPT_API_KEY", "k")
    attempts = []

    def handler(request: httpx.Request) -> httpx.Response:
        attempts.append(1)
        if len(attempts) < 3:
            return httpx.Response(429, json={})
        return httpx.Response(200, json={"choices": [{"text": "ok", "finish_reason": "stop"}]})

    backend, sleeps = make_http_backend(handler)
    result = backend.generate(make_request(backend_id="remote"))
    assert result.text == "ok"
    assert len(attempts) == 3
    assert sleeps == [1.0, 2.0]  # exponential backoff starting at 1s


def test_http_backend_exhausts_retry_budget(monkeypatch):
    monkeypatch.setenv("REPROMPT_API_KEY", "k")

    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(500, json={})

    backend, sleeps = make_http_backend(handler)
    with pytest.raises(RateLimitExhausted):
        backend.generate(make_request(backend_id="remote"))
    assert sleeps == [1.0, 2.0, 4.0, 8.0]  # 5 attempts total


def test_http_backend_auth_failure_not_retried(monkeypatch):
    monkeypatch.setenv("REPROMPT_API_KEY", "bad")
    attempts = []

    def handler(request: httpx.Request) -> httpx.Response:
        attempts.append(1)
        return httpx.Response(401, json={})

    backend, _ = make_http_backend(handler)
    with pytest.raises(AuthError):
        backend.generate(make_request(backend_id="remote"))
    assert len(attempts) == 1


def test_rate_ceiling_never_exceeded(monkeypatch):
    monkeypatch.setenv("REPROMPT_API_KEY", "k")
    in_flight = 0
    peak = 0
    lock = threading.Lock()

    def handler(request: httpx.Request) -> httpx.Response:
        nonlocal in_flight, peak
        with lock:
            in_flight += 1
            peak = max(peak, in_flight)
        try:
            return httpx.Response(
                200, json={"choices": [{"text": "ok", "finish_reason": "stop"}]}
            )
        finally:
            with lock:
                in_flight -= 1

    backend, _ = make_http_backend(handler, max_concurrent=2)
    threads = [
        threading.Thread(
            target=lambda: backend.generate(make_request(backend_id="remote"))
        )
        for _ in range(8)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak <= 2


def test_rate_limiter_is_reentrant_across_threads():
    limiter = RateLimiter(max_concurrent=1)
    order = []

    def worker(tag):
        with limiter:
            order.append(tag)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(order) == [0, 1, 2, 3]


def test_error_carries_request_digest(tmp_path):
    class FailingBackend:
        backend_id = "b"

        def generate(self, request):
            raise RateLimitExhausted("spent")

    gateway = LlmGateway(cache_dir=tmp_path)
    gateway.register(FailingBackend())
    request = make_request()
    with pytest.raises(RateLimitExhausted) as excinfo:
        gateway.complete(request)
    assert excinfo.value.digest == cache_key(request)


def test_min_interval_spaces_request_starts(monkeypatch):
    monkeypatch.setenv("REPROMPT_API_KEY", "k")
    import time as time_mod

    starts = []

    def handler(request: httpx.Request) -> httpx.Response:
        starts.append(time_mod.monotonic())
        return httpx.Response(200, json={"choices": [{"text": "ok", "finish_reason": "stop"}]})

    backend, _ = make_http_backend(handler, min_interval=0.02)
    for _ in range(3):
        backend.generate(make_request(backend_id="remote"))
    gaps = [b - a for a, b in zip(starts, starts[1:])]
    assert all(gap >= 0.015 for gap in gaps)
