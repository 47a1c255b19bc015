"""Chat-completion backends: remote HTTP, scripted replay, and (in ``mock``) a deterministic stand-in."""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import httpx

from . import prompts

log = logging.getLogger(__name__)

API_KEY_ENV = "STREETAGENTS_API_KEY"
TRANSIENT_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})

PURPOSES = {
    prompts.SUMMARY_SYSTEM: "summary",
    prompts.DECISION_SYSTEM: "decision",
    prompts.IMPORTANCE_SYSTEM: "importance",
    prompts.MEMORY_SYSTEM: "memory",
    prompts.INTERVIEW_SYSTEM: "interview",
    prompts.RATING_SYSTEM: "rating",
}


def estimate_tokens(text: str) -> int:
    """Approximate token count: one token per four characters, rounded up."""
    return math.ceil(len(text) / 4)


class LLMError(RuntimeError):
    pass


class RetriesExhaustedError(LLMError):
    pass


class TranscriptExhaustedError(LLMError):
    pass


class BackendConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatExchange:
    system: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_reply_tokens: int = 512

    def __post_init__(self) -> None:
        if not self.system:
            raise ValueError("system prompt must be non-empty")
        if not self.messages:
            raise ValueError("an exchange needs at least one message")
        for i, m in enumerate(self.messages):
            expected = "user" if i % 2 == 0 else "assistant"
            if m.role != expected:
                raise ValueError(f"message {i} has role {m.role!r}; roles must alternate starting with user")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.max_reply_tokens <= 0:
            raise ValueError("max_reply_tokens must be positive")

    @classmethod
    def ask(cls, system: str, text: str, temperature: float = 0.0, max_reply_tokens: int = 512) -> "ChatExchange":
        return cls(system, (Message("user", text),), temperature, max_reply_tokens)

    def followup(self, reply: str, text: str) -> "ChatExchange":
        """The same conversation extended with the assistant's reply and a new user turn."""
        msgs = self.messages + (Message("assistant", reply), Message("user", text))
        return ChatExchange(self.system, msgs, self.temperature, self.max_reply_tokens)

    @property
    def prompt_text(self) -> str:
        return "\n\n".join([self.system] + [m.content for m in self.messages])

    @property
    def first_user(self) -> str:
        return self.messages[0].content

    @property
    def purpose(self) -> str:
        return PURPOSES.get(self.system, "other")


class Backend:
    """Base class; subclasses implement ``complete``."""

    kind = "abstract"
    default_temperature = 0.0

    def complete(self, exchange: ChatExchange) -> str:
        raise NotImplementedError

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind}


class ReplayBackend(Backend):
    """Emits recorded responses strictly in order.

    Transcript lines are ``{"response": ..., "expect_prompt_contains": ...}``; the
    expectation is advisory and only produces a warning when it does not match.
    """

    kind = "replay"

    def __init__(self, entries: Iterable[dict[str, Any]], source: str = "<memory>"):
        self._entries = [dict(e) for e in entries]
        for i, e in enumerate(self._entries):
            if not isinstance(e.get("response"), str):
                raise BackendConfigError(f"{source}: transcript entry {i + 1} has no string 'response'")
        self.source = source
        self._index = 0
        self._lock = threading.Lock()
        self.mismatches: list[tuple[int, str]] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayBackend":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise BackendConfigError(f"cannot read transcript {path}: {exc.strerror or exc}") from None
        entries = []
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise BackendConfigError(f"{path}:{lineno}: {exc.msg}") from None
        return cls(entries, source=str(path))

    @property
    def remaining(self) -> int:
        return len(self._entries) - self._index

    def complete(self, exchange: ChatExchange) -> str:
        with self._lock:
            if self._index >= len(self._entries):
                raise TranscriptExhaustedError(
                    f"replay transcript {self.source} exhausted after {len(self._entries)} responses"
                )
            entry = self._entries[self._index]
            self._index += 1
            expected = entry.get("expect_prompt_contains")
            if expected and expected not in exchange.prompt_text:
                self.mismatches.append((self._index, expected))
                log.warning("replay entry %d expected a prompt containing %r", self._index, expected)
            return entry["response"]

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "transcript": Path(self.source).name}


class RateLimiter:
    """Sliding one-minute window request cap."""

    def __init__(self, per_minute: int | None, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.per_minute = per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if not self.per_minute:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self._sleep(max(wait, 0.0))


class RemoteBackend(Backend):
    """OpenAI-style chat-completion endpoint with retry and rate caps.

    Transient failures (429, 5xx, transport errors) are retried up to
    ``max_retries`` times with exponential backoff.
    """

    kind = "remote"
    default_temperature = 0.7

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        *,
        max_retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        requests_per_minute: int | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not endpoint or not model:
            raise BackendConfigError("remote backend needs an endpoint and a model name")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))
        self._limiter = RateLimiter(requests_per_minute, sleep=sleep)

    def _payload(self, exchange: ChatExchange) -> dict[str, Any]:
        messages = [{"role": "system", "content": exchange.system}]
        messages += [{"role": m.role, "content": m.content} for m in exchange.messages]
        return {
            "model": self.model,
            "messages": messages,
            "temperature": exchange.temperature,
            "max_tokens": exchange.max_reply_tokens,
        }

    def complete(self, exchange: ChatExchange) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        payload = self._payload(exchange)
        last_error = "no attempt made"
        with self._slots:
            for attempt in range(self.max_retries + 1):
                self._limiter.acquire()
                try:
                    resp = self._client.post(self.endpoint, json=payload, headers=headers)
                except httpx.TransportError as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                else:
                    if resp.status_code == 200:
                        return _first_choice(resp)
                    if resp.status_code not in TRANSIENT_STATUS:
                        raise LLMError(f"HTTP {resp.status_code} from {self.endpoint}: {resp.text[:200]}")
                    last_error = f"HTTP {resp.status_code}"
                if attempt < self.max_retries:
                    delay = self.backoff * 2**attempt
                    log.warning("chat completion failed (%s); retrying in %.1fs", last_error, delay)
                    self._sleep(delay)
        raise RetriesExhaustedError(f"gave up after {self.max_retries + 1} attempts: {last_error}")

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "endpoint": self.endpoint, "model": self.model}


def _first_choice(resp: httpx.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise LLMError(f"unexpected chat-completion payload: {resp.text[:200]}") from None
    if not isinstance(content, str):
        raise LLMError("chat-completion content is not a string")
    return content


@dataclass(frozen=True)
class ExchangeRecord:
    purpose: str
    prompt: str
    reply: str
    prompt_tokens: int
    reply_tokens: int

    @property
    def tokens(self) -> int:
        return self.prompt_tokens + self.reply_tokens


class RecordingBackend(Backend):
    """Wraps a backend and logs every exchange with its token estimate."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.kind = inner.kind
        self.default_temperature = inner.default_temperature
        self.records: list[ExchangeRecord] = []

    def complete(self, exchange: ChatExchange) -> str:
        reply = self.inner.complete(exchange)
        prompt = exchange.prompt_text
        self.records.append(
            ExchangeRecord(exchange.purpose, prompt, reply, estimate_tokens(prompt), estimate_tokens(reply))
        )
        return reply

    def take(self) -> list[ExchangeRecord]:
        out, self.records = self.records, []
        return out

    def describe(self) -> dict[str, Any]:
        return self.inner.describe()


def make_backend(kind: str, *, seed: int = 0, transcript: str | Path | None = None,
                 endpoint: str | None = None, model: str | None = None,
                 api_key: str | None = None, **remote_options: Any) -> Backend:
    if kind == "mock":
        from .mock import MockBackend

        return MockBackend(seed)
    if kind == "replay":
        if not transcript:
            raise BackendConfigError("replay backend needs a transcript path")
        return ReplayBackend.from_file(transcript)
    if kind == "remote":
        key = api_key or os.environ.get(API_KEY_ENV)
        if not key:
            raise BackendConfigError(f"remote backend needs an API key in ${API_KEY_ENV}")
        return RemoteBackend(endpoint or "", model or "", key, **remote_options)
    raise BackendConfigError(f"unknown backend kind {kind!r}")


def complete_text(backend: Backend, system: str, text: str, temperature: float | None = None,
                  max_reply_tokens: int = 512) -> tuple[ChatExchange, str]:
    """Single-turn helper returning the exchange (for follow-ups) and the reply."""
    temp = backend.default_temperature if temperature is None else temperature
    exchange = ChatExchange.ask(system, text, temp, max_reply_tokens)
    return exchange, backend.complete(exchange)


def total_tokens(records: Sequence[ExchangeRecord]) -> int:
    return sum(r.tokens for r in records)
