"""Uniform completion interface over LLM providers.

Three modes share one entry point: ``Live`` talks to the provider with
bounded retries, ``Record`` additionally persists every completion to an
append-only cache, and ``Replay`` serves cached responses byte-exactly and
never touches the network. A scripted mock provider makes the whole pipeline
deterministic for offline tests.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import httpx


class GatewayMode(Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


class GatewayError(RuntimeError):
    pass


class TokenBudgetError(GatewayError):
    """The prompt plus the reserved output would not fit the context window."""


class TransportError(GatewayError):
    """The provider could not be reached, even after retries."""


class ReplayMissError(GatewayError):
    """Replay mode found no recorded completion for this prompt."""


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str
    model_name: str
    endpoint: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 1024
    context_limit_tokens: int = 200_000
    max_retries: int = 3
    request_timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.context_limit_tokens <= 0:
            raise ValueError("context limit must be positive")


@dataclass(frozen=True)
class CompletionRecord:
    prompt_hash: str
    prompt_text: str
    response_text: str
    provider_id: str
    model_name: str
    temperature: float
    timestamp: float
    latency: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "prompt_hash": self.prompt_hash,
                "prompt_text": self.prompt_text,
                "response_text": self.response_text,
                "provider_id": self.provider_id,
                "model_name": self.model_name,
                "temperature": self.temperature,
                "timestamp": self.timestamp,
                "latency": self.latency,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, raw: str) -> "CompletionRecord":
        data = json.loads(raw)
        return cls(**data)


def estimate_tokens(text: str) -> int:
    """Conservative upper-bound token estimate: one token per three characters."""
    return math.ceil(len(text) / 3)


def prompt_hash(prompt: str, config: ProviderConfig) -> str:
    key = f"{config.provider_id}\x1f{config.model_name}\x1f{config.temperature!r}\x1f{prompt}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


class Transport(Protocol):
    def __call__(self, prompt: str, config: ProviderConfig) -> str: ...


class HttpTransport:
    """Minimal JSON-over-HTTP provider transport.

    Posts ``{model, prompt, temperature, max_tokens}`` and expects a JSON
    body with a ``completion`` field. Credentials come from the environment
    at call sites; they are never persisted.
    """

    def __init__(self, headers: dict[str, str] | None = None) -> None:
        self._headers = headers or {}

    def __call__(self, prompt: str, config: ProviderConfig) -> str:
        try:
            response = httpx.post(
                config.endpoint,
                json={
                    "model": config.model_name,
                    "prompt": prompt,
                    "temperature": config.temperature,
                    "max_tokens": config.max_output_tokens,
                },
                headers=self._headers,
                timeout=config.request_timeout,
            )
            response.raise_for_status()
            return response.json()["completion"]
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc


@dataclass(frozen=True)
class MockRule:
    pattern: str  # plain substring, checked in order
    response: str


class MockProvider:
    """Scripted provider: first matching substring rule wins, else the default."""

    def __init__(self, rules: list[MockRule] | None = None, default: str = "No") -> None:
        self.rules = list(rules or [])
        self.default = default
        self.calls = 0

    def __call__(self, prompt: str, config: ProviderConfig) -> str:
        self.calls += 1
        for rule in self.rules:
            if rule.pattern in prompt:
                return rule.response
        return self.default


class FailingTransport:
    """Always raises; used to prove a code path performs no provider traffic."""

    def __call__(self, prompt: str, config: ProviderConfig) -> str:
        raise AssertionError("transport must not be used in this mode")


class ReplayCache:
    """Append-only line-delimited store of completion records.

    Reads are lock-free against an immutable in-memory index; writes are
    serialized. Looking up by prompt hash returns the first recording.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self._path = Path(path) if path else None
        self._records: dict[str, CompletionRecord] = {}
        self._write_lock = threading.Lock()
        if self._path and self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    record = CompletionRecord.from_json(line)
                    self._records.setdefault(record.prompt_hash, record)

    def __len__(self) -> int:
        return len(self._records)

    def lookup(self, key: str) -> CompletionRecord | None:
        return self._records.get(key)

    def store(self, record: CompletionRecord) -> None:
        with self._write_lock:
            self._records.setdefault(record.prompt_hash, record)
            if self._path:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")


class Gateway:
    """Completion front end with token budgeting, retries, and replay."""

    def __init__(
        self,
        transport: Transport,
        cache: ReplayCache | None = None,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        backoff_base: float = 0.5,
    ) -> None:
        self._transport = transport
        # `or` would treat an empty cache as missing (ReplayCache has __len__).
        self.cache = cache if cache is not None else ReplayCache()
        self._semaphore = threading.Semaphore(max_in_flight)
        self._sleep = sleep
        self._backoff_base = backoff_base

    def complete(
        self, prompt: str, config: ProviderConfig, mode: GatewayMode = GatewayMode.LIVE
    ) -> str:
        budget = estimate_tokens(prompt) + config.max_output_tokens
        if budget > config.context_limit_tokens:
            raise TokenBudgetError(
                f"estimated {budget} tokens exceed the {config.context_limit_tokens}-token "
                f"context limit of {config.model_name}"
            )

        key = prompt_hash(prompt, config)
        if mode is GatewayMode.REPLAY:
            record = self.cache.lookup(key)
            if record is None:
                raise ReplayMissError(f"no recorded completion for prompt hash {key[:12]}")
            return record.response_text

        started = time.time()
        response = self._call_with_retries(prompt, config)
        if mode is GatewayMode.RECORD:
            self.cache.store(
                CompletionRecord(
                    prompt_hash=key,
                    prompt_text=prompt,
                    response_text=response,
                    provider_id=config.provider_id,
                    model_name=config.model_name,
                    temperature=config.temperature,
                    timestamp=started,
                    latency=time.time() - started,
                )
            )
        return response

    def _call_with_retries(self, prompt: str, config: ProviderConfig) -> str:
        last_error: Exception | None = None
        for attempt in range(config.max_retries + 1):
            if attempt > 0:
                self._sleep(self._backoff_base * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    return self._transport(prompt, config)
            except TransportError as exc:
                last_error = exc
        raise TransportError(
            f"provider unreachable after {config.max_retries} retries: {last_error}"
        )
