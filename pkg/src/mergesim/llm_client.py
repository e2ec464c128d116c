"""Provider-agnostic chat-completion transport.

Adapters translate a :class:`CompletionRequest` into a vendor's HTTP+JSON
chat protocol. :class:`LLMClient` adds retry with exponential backoff and a
per-provider cap on in-flight requests. :class:`Cassette` records and
replays completions keyed by request digest so past LLM experiments can be
re-run without network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Protocol

import httpx

log = logging.getLogger(__name__)


class LLMError(RuntimeError):
    pass


class AuthError(LLMError):
    """Missing or rejected credentials. Never retried."""


class TransientError(LLMError):
    """Rate limit, server error or transport failure; safe to retry."""


class RetryExhausted(TransientError):
    def __init__(self, attempts: int, last: Exception):
        super().__init__(f"gave up after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


class MalformedResponse(LLMError):
    pass


class CassetteMiss(LLMError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    system_text: str
    user_text: str
    temperature: float = 1.0
    model_id: str = ""
    max_output_tokens: int = 8192
    # identifies the caller (trial/side) so identical prompts in different
    # trials get separate cassette entries; never sent to the provider
    tag: str = ""

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if not self.system_text or not self.user_text:
            raise ValueError("request texts must be non-empty")

    def digest(self, provider: str = "") -> str:
        payload = json.dumps(
            [provider, self.model_id, self.system_text, self.user_text,
             self.temperature, self.max_output_tokens, self.tag],
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionResult:
    raw_text: str
    latency: float = 0.0
    token_usage: dict = field(default_factory=dict)
    provider_metadata: dict = field(default_factory=dict)
    attempts: int = 1


class Provider(Protocol):
    name: str

    def send(self, request: CompletionRequest) -> CompletionResult: ...


RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


def _raise_for_status(resp: httpx.Response) -> None:
    if resp.status_code in (401, 403):
        raise AuthError(f"HTTP {resp.status_code}: {resp.text[:200]}")
    if resp.status_code in RETRYABLE_STATUS:
        raise TransientError(f"HTTP {resp.status_code}: {resp.text[:200]}")
    if resp.status_code >= 400:
        raise LLMError(f"HTTP {resp.status_code}: {resp.text[:200]}")


class _HttpProvider:
    name = "http"
    env_var = ""

    def __init__(self, api_key: Optional[str] = None, base_url: Optional[str] = None,
                 transport: Optional[httpx.BaseTransport] = None, timeout: float = 600.0):
        self.api_key = api_key if api_key is not None else os.environ.get(self.env_var)
        if base_url:
            self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def _key(self) -> str:
        if not self.api_key:
            raise AuthError(f"{self.env_var} is not set")
        return self.api_key

    def _post(self, url: str, payload: dict, headers: dict) -> dict:
        try:
            resp = self._client.post(url, json=payload, headers=headers)
        except httpx.TransportError as exc:
            raise TransientError(f"transport error: {exc}") from exc
        _raise_for_status(resp)
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"response body is not JSON: {resp.text[:200]}") from exc


class OpenAIProvider(_HttpProvider):
    name = "openai"
    env_var = "OPENAI_API_KEY"
    base_url = "https://api.openai.com/v1"

    def send(self, request: CompletionRequest) -> CompletionResult:
        payload = {
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_completion_tokens": request.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {self._key()}"}
        body = self._post(f"{self.base_url}/chat/completions", payload, headers)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected payload shape: {str(body)[:200]}") from exc
        if not isinstance(text, str):
            raise MalformedResponse("message content is not text")
        return CompletionResult(text, token_usage=dict(body.get("usage") or {}),
                                provider_metadata={"id": body.get("id"), "model": body.get("model")})


class GeminiProvider(_HttpProvider):
    name = "gemini"
    env_var = "GEMINI_API_KEY"
    base_url = "https://generativelanguage.googleapis.com/v1beta"

    def send(self, request: CompletionRequest) -> CompletionResult:
        payload = {
            "systemInstruction": {"parts": [{"text": request.system_text}]},
            "contents": [{"role": "user", "parts": [{"text": request.user_text}]}],
            "generationConfig": {
                "temperature": request.temperature,
                "maxOutputTokens": request.max_output_tokens,
            },
        }
        headers = {"x-goog-api-key": self._key()}
        body = self._post(f"{self.base_url}/models/{request.model_id}:generateContent", payload, headers)
        try:
            parts = body["candidates"][0]["content"]["parts"]
            text = "".join(p.get("text", "") for p in parts if not p.get("thought"))
        except (KeyError, IndexError, TypeError, AttributeError) as exc:
            raise MalformedResponse(f"unexpected payload shape: {str(body)[:200]}") from exc
        usage = body.get("usageMetadata") or {}
        return CompletionResult(text, token_usage=dict(usage),
                                provider_metadata={"modelVersion": body.get("modelVersion")})


class MockProvider:
    """Offline stand-in producing schema-conformant replies.

    ``mode="hash"`` derives the reply from the request digest, so it is a
    pure function of the prompt. ``mode="random"`` draws from an unseeded
    RNG and is only reproducible through a cassette.
    """

    name = "mock"

    def __init__(self, mode: str = "hash", n: int = 20, amplitude: float = 0.4):
        if mode not in ("hash", "random"):
            raise ValueError(f"unknown mock mode {mode!r}")
        self.mode, self.n, self.amplitude = mode, n, amplitude

    def send(self, request: CompletionRequest) -> CompletionResult:
        if self.mode == "hash":
            rng = random.Random(request.digest(self.name))
        else:
            rng = random.Random()
        level = rng.uniform(-self.amplitude, self.amplitude)
        values = [round(level, 2)] * self.n
        token = "M" if level >= 0 else "Y"
        text = (
            f"{token}\nI will {'keep my speed up' if token == 'M' else 'ease off'} to settle the merge. "
            f"The plan stays smooth.\n```python\n[{', '.join(f'{v:.2f}' for v in values)}]\n```\n"
        )
        return CompletionResult(text, provider_metadata={"mock": self.mode})


class ScriptedProvider:
    """Serves canned texts in order; with ``failures`` it raises first. For tests."""

    name = "scripted"

    def __init__(self, texts: list[str], failures: Optional[list[Exception]] = None):
        self.texts = list(texts)
        self.failures = list(failures or [])
        self.calls = 0
        self.requests: list[CompletionRequest] = []
        self._lock = threading.Lock()

    def send(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.calls += 1
            self.requests.append(request)
            if self.failures:
                raise self.failures.pop(0)
            if not self.texts:
                raise LLMError("scripted provider ran out of replies")
            return CompletionResult(self.texts.pop(0))


def make_provider(name: str, model: str = "", **kwargs: Any) -> Provider:
    if name == "openai":
        return OpenAIProvider(**kwargs)
    if name == "gemini":
        return GeminiProvider(**kwargs)
    if name == "mock":
        return MockProvider(mode=model or "hash", **kwargs)
    raise ValueError(f"unknown provider {name!r}; choose openai, gemini or mock")


class Cassette:
    """Line-delimited JSON store of ``digest -> raw_text``.

    Each line is ``{"digest": ..., "index": k, "raw_text": ...}``; ``index``
    counts repeats of the same digest so identical requests issued several
    times replay in their original order.
    """

    def __init__(self, path: Path, mode: str):
        if mode not in ("record", "replay"):
            raise ValueError(f"cassette mode must be record or replay, got {mode!r}")
        self.path = Path(path)
        self.mode = mode
        self._lock = threading.Lock()
        self._entries: dict[str, list[str]] = defaultdict(list)
        self._served: dict[str, int] = defaultdict(int)
        if mode == "replay":
            if not self.path.exists():
                raise FileNotFoundError(f"cassette not found: {self.path}")
            with self.path.open(encoding="utf-8") as fh:
                rows = [json.loads(line) for line in fh if line.strip()]
            for row in sorted(rows, key=lambda r: (r["digest"], r["index"])):
                self._entries[row["digest"]].append(row["raw_text"])
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def lookup(self, digest: str) -> str:
        with self._lock:
            k = self._served[digest]
            texts = self._entries.get(digest, [])
            if k >= len(texts):
                raise CassetteMiss(f"no recorded response for request {digest[:12]} (occurrence {k})")
            self._served[digest] = k + 1
            return texts[k]

    def store(self, digest: str, raw_text: str) -> None:
        with self._lock:
            index = len(self._entries[digest])
            self._entries[digest].append(raw_text)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"digest": digest, "index": index, "raw_text": raw_text}, ensure_ascii=False) + "\n")


class LLMClient:
    """Retrying, rate-limited front end over one provider.

    ``max_attempts`` counts the first try. Auth errors surface immediately.
    """

    def __init__(self, provider: Provider, *, max_attempts: int = 4, base_delay: float = 1.0,
                 max_delay: float = 30.0, max_in_flight: int = 4, cassette: Optional[Cassette] = None,
                 sleep: Callable[[float], None] = time.sleep):
        if max_attempts < 1 or max_in_flight < 1:
            raise ValueError("max_attempts and max_in_flight must be >= 1")
        self.provider = provider
        self.max_attempts = max_attempts
        self.base_delay = base_delay
        self.max_delay = max_delay
        self.cassette = cassette
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._sleep = sleep
        self.stats = {"requests": 0, "attempts": 0, "latency": 0.0}
        self._stats_lock = threading.Lock()

    @property
    def provider_name(self) -> str:
        return self.provider.name

    def complete(self, request: CompletionRequest) -> CompletionResult:
        digest = request.digest(self.provider.name)
        if self.cassette is not None and self.cassette.mode == "replay":
            return CompletionResult(self.cassette.lookup(digest), provider_metadata={"replayed": True})
        result = self._complete_with_retry(request)
        if self.cassette is not None:
            self.cassette.store(digest, result.raw_text)
        return result

    def _complete_with_retry(self, request: CompletionRequest) -> CompletionResult:
        last: Optional[Exception] = None
        for attempt in range(1, self.max_attempts + 1):
            start = time.monotonic()
            try:
                with self._gate:
                    result = self.provider.send(request)
            except AuthError:
                raise
            except TransientError as exc:
                last = exc
                log.warning("%s attempt %d/%d failed: %s", self.provider.name, attempt, self.max_attempts, exc)
                if attempt < self.max_attempts:
                    delay = min(self.max_delay, self.base_delay * 2 ** (attempt - 1))
                    self._sleep(random.uniform(0.5 * delay, delay))
                continue
            latency = time.monotonic() - start
            with self._stats_lock:
                self.stats["requests"] += 1
                self.stats["attempts"] += attempt
                self.stats["latency"] += latency
            log.debug("%s ok after %d attempt(s), %.2fs", self.provider.name, attempt, latency)
            return CompletionResult(result.raw_text, latency, result.token_usage,
                                    result.provider_metadata, attempts=attempt)
        assert last is not None
        raise RetryExhausted(self.max_attempts, last)
