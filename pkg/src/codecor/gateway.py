"""Chat-completion backends.

Two implementations of one ``complete`` contract: an OpenAI-compatible HTTP
client with retries and token accounting, and a scripted replay backend that
makes whole runs deterministic in tests and CI.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import requests

from .errors import (
    AuthError,
    MalformedResponseError,
    NetworkError,
    TranscriptExhaustedError,
)

API_KEY_ENV = "CODECOR_API_KEY"
VALID_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in VALID_ROLES:
            raise ValueError(f"invalid role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.8
    n: int = 1
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message must be system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.n < 1 or self.max_tokens < 1:
            raise ValueError("n and max_tokens must be >= 1")

    def joined_content(self) -> str:
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    completions: tuple[str, ...]
    prompt_tokens: int
    completion_tokens: int
    latency_ms: int

    def __post_init__(self) -> None:
        if not self.completions:
            raise ValueError("completions must be non-empty")
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass(frozen=True)
class LedgerSnapshot:
    prompt_tokens: int
    completion_tokens: int
    requests: int
    wall_ms: int


class RunLedger:
    """Run-level accumulator; wall_ms is cumulative request latency."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._prompt_tokens = 0
        self._completion_tokens = 0
        self._requests = 0
        self._wall_ms = 0

    def record(self, response: ChatResponse) -> None:
        with self._lock:
            self._prompt_tokens += response.prompt_tokens
            self._completion_tokens += response.completion_tokens
            self._requests += 1
            self._wall_ms += response.latency_ms

    def snapshot(self) -> LedgerSnapshot:
        with self._lock:
            return LedgerSnapshot(
                prompt_tokens=self._prompt_tokens,
                completion_tokens=self._completion_tokens,
                requests=self._requests,
                wall_ms=self._wall_ms,
            )


class ChatBackend(Protocol):
    ledger: RunLedger

    def complete(self, request: ChatRequest) -> ChatResponse: ...


class OpenAICompatBackend:
    """POST {base_url}/chat/completions with retry/backoff and a token ledger.

    Auth failures (401/403) and other 4xx responses are never retried; 5xx
    and transport errors retry up to ``max_retries`` with exponential backoff.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str,
        timeout_s: float = 120.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] | None = None,
    ) -> None:
        if not base_url:
            raise ValueError("base_url must be non-empty")
        self.base_url = base_url.rstrip("/")
        self._api_key = api_key
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._session = session or requests.Session()
        self._sleep = sleep if sleep is not None else time.sleep
        self.ledger = RunLedger()

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "n": request.n,
            "max_tokens": request.max_tokens,
        }
        headers = {
            "Authorization": f"Bearer {self._api_key}",
            "Content-Type": "application/json",
        }
        url = f"{self.base_url}/chat/completions"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            start = time.monotonic()
            try:
                http = self._session.post(url, json=payload, headers=headers, timeout=self.timeout_s)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = exc
                if attempt < self.max_retries:
                    self._sleep(self.backoff_s * (2**attempt))
                continue
            latency_ms = int((time.monotonic() - start) * 1000)
            if http.status_code in (401, 403):
                raise AuthError(f"backend rejected credentials (HTTP {http.status_code})")
            if 400 <= http.status_code < 500:
                raise NetworkError(f"HTTP {http.status_code}: {http.text[:200]}")
            if http.status_code >= 500:
                last_error = NetworkError(f"HTTP {http.status_code}")
                if attempt < self.max_retries:
                    self._sleep(self.backoff_s * (2**attempt))
                continue
            response = self._parse_body(http, latency_ms)
            self.ledger.record(response)
            return response
        raise NetworkError(f"giving up after {self.max_retries + 1} attempts: {last_error}")

    @staticmethod
    def _parse_body(http: requests.Response, latency_ms: int) -> ChatResponse:
        try:
            body = http.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response body is not JSON: {exc}") from exc
        try:
            choices = body["choices"]
            completions = tuple(choice["message"]["content"] or "" for choice in choices)
        except (KeyError, TypeError) as exc:
            raise MalformedResponseError(f"missing choices[*].message.content: {exc}") from exc
        if not completions:
            raise MalformedResponseError("response carried zero choices")
        usage = body.get("usage") or {}
        return ChatResponse(
            completions=completions,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=latency_ms,
        )


@dataclass(frozen=True)
class TranscriptEntry:
    matcher: str
    completions: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.completions:
            raise ValueError("transcript entry needs at least one completion")


class ScriptedBackend:
    """Replays canned completions in strict order.

    Each incoming request must contain the next entry's matcher as a
    substring of its joined message content; anything else fails loudly.
    """

    def __init__(self, entries: list[TranscriptEntry] | tuple[TranscriptEntry, ...]) -> None:
        self._entries = tuple(entries)
        self._index = 0
        self._lock = threading.Lock()
        self.ledger = RunLedger()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        return cls(load_transcript(path))

    @property
    def remaining(self) -> int:
        with self._lock:
            return len(self._entries) - self._index

    def complete(self, request: ChatRequest) -> ChatResponse:
        content = request.joined_content()
        with self._lock:
            if self._index >= len(self._entries):
                raise TranscriptExhaustedError(
                    f"no transcript entries left for request: {content[:120]!r}"
                )
            entry = self._entries[self._index]
            if entry.matcher not in content:
                raise TranscriptExhaustedError(
                    f"entry {self._index} matcher {entry.matcher!r} not found in request: {content[:120]!r}"
                )
            self._index += 1
        completions = entry.completions[: request.n]
        response = ChatResponse(
            completions=completions,
            prompt_tokens=len(content.split()),
            completion_tokens=sum(len(c.split()) for c in completions),
            latency_ms=0,
        )
        self.ledger.record(response)
        return response


def load_transcript(path: str | Path) -> list[TranscriptEntry]:
    """Read a transcript file: one JSON record per line, blank/# lines skipped."""
    entries: list[TranscriptEntry] = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            record = json.loads(stripped)
            entries.append(
                TranscriptEntry(
                    matcher=record["matcher"],
                    completions=tuple(record["completions"]),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise TranscriptExhaustedError(f"{path}:{line_no}: bad transcript record: {exc}") from exc
    return entries


def dump_transcript(entries: list[TranscriptEntry] | tuple[TranscriptEntry, ...], path: str | Path) -> None:
    lines = [
        json.dumps({"matcher": e.matcher, "completions": list(e.completions)}, ensure_ascii=False)
        for e in entries
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
