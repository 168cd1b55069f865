"""Uniform chat-completion client: one live HTTP implementation, one
deterministic mock, both sharing retry policy, call accounting, and an
append-only audit log.

Endpoint configuration for the live gateway comes from environment
variables: ``ACCELBENCH_GATEWAY_URL``, ``ACCELBENCH_GATEWAY_KEY``, and
``ACCELBENCH_GATEWAY_MODEL``.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import requests

from .errors import (
    BudgetExhausted,
    ConfigError,
    GatewayError,
    GatewayTimeout,
    MalformedResponse,
    RateLimited,
)

DEFAULT_MAX_ATTEMPTS = 3
BUDGETED_TAGS = frozenset({"code", "debug"})


@dataclass(frozen=True, slots=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True, slots=True)
class ChatExchange:
    messages: tuple[ChatMessage, ...]
    completion: str
    prompt_tokens: int
    completion_tokens: int
    latency: float
    attempt: int


def _normalize(messages: Sequence[ChatMessage]) -> str:
    parts = []
    for m in messages:
        body = "\n".join(line.rstrip() for line in m.content.strip().splitlines())
        parts.append(f"{m.role}\n{body}")
    return "\n---\n".join(parts)


def fingerprint(messages: Sequence[ChatMessage]) -> str:
    """Stable hash of the normalized message list (trailing whitespace and
    surrounding blank lines do not change it)."""
    return hashlib.sha256(_normalize(messages).encode("utf-8")).hexdigest()[:16]


class AuditLog:
    """Append-only record of every gateway exchange, successful or not."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._records: list[dict[str, Any]] = []

    def append(self, record: Mapping[str, Any]) -> None:
        with self._lock:
            self._records.append(dict(record))

    @property
    def records(self) -> list[dict[str, Any]]:
        with self._lock:
            return list(self._records)

    def count(self, tag: str | None = None, *, scope: str | None = None) -> int:
        with self._lock:
            n = 0
            for r in self._records:
                if tag is not None and r.get("tag") != tag:
                    continue
                if scope is not None and r.get("scope") != scope:
                    continue
                n += 1
            return n

    def tag_counts(self) -> dict[str, int]:
        with self._lock:
            out: dict[str, int] = {}
            for r in self._records:
                out[r.get("tag", "")] = out.get(r.get("tag", ""), 0) + 1
            return out

    def save_jsonl(self, path: str | Path) -> None:
        with self._lock:
            lines = [json.dumps(r, sort_keys=True) for r in self._records]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")


class CallBudget:
    """Per-task cap on budgeted (coding/debugging) gateway calls."""

    def __init__(self, limit: int) -> None:
        self.limit = limit
        self._used = 0
        self._lock = threading.Lock()

    @property
    def used(self) -> int:
        return self._used

    def charge(self) -> None:
        with self._lock:
            if self._used >= self.limit:
                raise BudgetExhausted(f"call budget of {self.limit} exhausted")
            self._used += 1


class ChatGateway(Protocol):
    def complete(
        self,
        messages: Sequence[ChatMessage],
        *,
        temperature: float = 0.0,
        max_tokens: int = 2048,
        model_name: str | None = None,
        tag: str = "",
        scope: str = "",
    ) -> ChatExchange:
        ...


class MockPolicy(Protocol):
    """Deterministic mapping (messages, fingerprint, seed) -> completion."""

    def respond(self, messages: Sequence[ChatMessage], fp: str, seed: int) -> str:
        ...


@dataclass
class ScriptedPolicy:
    """Fixed fingerprint -> completion table, with an optional fallback."""

    by_fingerprint: dict[str, str] = field(default_factory=dict)
    fallback: Callable[[Sequence[ChatMessage], str, int], str] | None = None

    def respond(self, messages: Sequence[ChatMessage], fp: str, seed: int) -> str:
        if fp in self.by_fingerprint:
            return self.by_fingerprint[fp]
        if self.fallback is not None:
            return self.fallback(messages, fp, seed)
        raise MalformedResponse(f"no scripted completion for fingerprint {fp}")


class MockGateway:
    """Deterministic gateway for desk-scale runs.

    Same fingerprint and seed always produce the same completion. The
    failure schedule maps a 1-based call sequence number to how many
    transient failures to inject before that call succeeds, exercising the
    retry path without a network.
    """

    def __init__(
        self,
        policy: MockPolicy,
        *,
        seed: int = 0,
        audit: AuditLog | None = None,
        budget: CallBudget | None = None,
        failure_schedule: Mapping[int, int] | None = None,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    ) -> None:
        self.policy = policy
        self.seed = seed
        self.audit = audit if audit is not None else AuditLog()
        self.budget = budget
        self.failure_schedule = dict(failure_schedule or {})
        self.max_attempts = max_attempts
        self._lock = threading.Lock()
        self._calls = 0

    @property
    def total_calls(self) -> int:
        return self._calls

    def complete(
        self,
        messages: Sequence[ChatMessage],
        *,
        temperature: float = 0.0,
        max_tokens: int = 2048,
        model_name: str | None = None,
        tag: str = "",
        scope: str = "",
    ) -> ChatExchange:
        if not messages:
            raise MalformedResponse("empty message list")
        if self.budget is not None and tag in BUDGETED_TAGS:
            self.budget.charge()
        with self._lock:
            self._calls += 1
            seq = self._calls
        fp = fingerprint(messages)
        inject = self.failure_schedule.get(seq, 0)
        attempt = 0
        while True:
            attempt += 1
            if attempt > self.max_attempts:
                self.audit.append(
                    {"tag": tag, "scope": scope, "fingerprint": fp, "attempt": attempt - 1,
                     "seq": seq, "ok": False, "error": "timeout"}
                )
                raise GatewayTimeout(f"mock injected failure exhausted retries (call {seq})")
            if attempt <= inject:
                continue
            completion = self.policy.respond(messages, fp, self.seed)
            prompt_chars = sum(len(m.content) for m in messages)
            self.audit.append(
                {
                    "tag": tag,
                    "scope": scope,
                    "fingerprint": fp,
                    "attempt": attempt,
                    "seq": seq,
                    "ok": True,
                    "prompt_chars": prompt_chars,
                    "completion_chars": len(completion),
                    "prompt_text": "\n".join(m.content for m in messages),
                }
            )
            return ChatExchange(
                messages=tuple(messages),
                completion=completion,
                prompt_tokens=prompt_chars // 4,
                completion_tokens=len(completion) // 4,
                latency=0.0,
                attempt=attempt,
            )


class HttpGateway:
    """Chat-completion client over an OpenAI-style HTTP endpoint.

    Exponential backoff with jitter, at most ``max_attempts`` tries per
    call; 429 and 5xx responses and timeouts are retried, everything else
    raises immediately.
    """

    def __init__(
        self,
        *,
        url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        audit: AuditLog | None = None,
        budget: CallBudget | None = None,
        max_in_flight: int = 4,
        session: Any | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.url = url or os.environ.get("ACCELBENCH_GATEWAY_URL")
        if not self.url:
            raise ConfigError("gateway URL missing (set ACCELBENCH_GATEWAY_URL)")
        self.api_key = api_key or os.environ.get("ACCELBENCH_GATEWAY_KEY")
        self.model = model or os.environ.get("ACCELBENCH_GATEWAY_MODEL", "default")
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.audit = audit if audit is not None else AuditLog()
        self.budget = budget
        self._session = session or requests.Session()
        self._sleep = sleep
        self._slots = threading.Semaphore(max_in_flight)

    def complete(
        self,
        messages: Sequence[ChatMessage],
        *,
        temperature: float = 0.0,
        max_tokens: int = 2048,
        model_name: str | None = None,
        tag: str = "",
        scope: str = "",
    ) -> ChatExchange:
        if not messages:
            raise MalformedResponse("empty message list")
        if self.budget is not None and tag in BUDGETED_TAGS:
            self.budget.charge()
        fp = fingerprint(messages)
        payload = {
            "model": model_name or self.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Exception | None = None
        rate_limited = False
        with self._slots:
            for attempt in range(1, self.max_attempts + 1):
                start = time.perf_counter()
                try:
                    resp = self._session.post(
                        self.url, json=payload, headers=headers, timeout=self.timeout
                    )
                except requests.Timeout as exc:
                    last_error = exc
                    self._backoff(attempt)
                    continue
                except requests.RequestException as exc:
                    last_error = exc
                    self._backoff(attempt)
                    continue
                if resp.status_code == 429 or resp.status_code >= 500:
                    rate_limited = resp.status_code == 429
                    last_error = GatewayError(f"HTTP {resp.status_code}")
                    self._backoff(attempt)
                    continue
                if resp.status_code >= 400:
                    raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    body = resp.json()
                    completion = body["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise MalformedResponse(f"unexpected response shape: {exc}") from exc
                if not isinstance(completion, str):
                    raise MalformedResponse("completion is not text")
                latency = time.perf_counter() - start
                usage = body.get("usage", {}) if isinstance(body, dict) else {}
                self.audit.append(
                    {
                        "tag": tag,
                        "scope": scope,
                        "fingerprint": fp,
                        "attempt": attempt,
                        "ok": True,
                        "latency": latency,
                        "prompt_text": "\n".join(m.content for m in messages),
                        "completion_chars": len(completion),
                    }
                )
                return ChatExchange(
                    messages=tuple(messages),
                    completion=completion,
                    prompt_tokens=usage.get("prompt_tokens", 0),
                    completion_tokens=usage.get("completion_tokens", 0),
                    latency=latency,
                    attempt=attempt,
                )

        self.audit.append(
            {"tag": tag, "scope": scope, "fingerprint": fp, "attempt": self.max_attempts,
             "ok": False, "error": str(last_error)}
        )
        if rate_limited:
            raise RateLimited(f"still rate limited after {self.max_attempts} attempts")
        raise GatewayTimeout(f"no response after {self.max_attempts} attempts: {last_error}")

    def _backoff(self, attempt: int) -> None:
        if attempt < self.max_attempts:
            self._sleep(2 ** (attempt - 1) + random.random() * 0.25)
