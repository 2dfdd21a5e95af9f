"""Chat-completion gateway.

Every nondeterministic dependency sits behind this boundary: the rest of the
package talks to a ``Provider`` and never performs network I/O itself. Two
providers ship: an HTTP client for any OpenAI-compatible chat-completion
endpoint, and a scripted provider that makes offline runs bit-deterministic.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

API_KEY_ENV = "PTFA_API_KEY"

# Transcript context budget: the most recent posts are kept, bounded by both
# a post count and a serialized-character count.
MAX_CONTEXT_POSTS = 60
MAX_CONTEXT_CHARS = 12_000

DEFAULT_TIMEOUT_MS = 20_000
DEFAULT_TEMPERATURE = 0.7


class GatewayError(Exception):
    """Base class for completion failures; callers fold these to Abstain."""


class Timeout(GatewayError):
    pass


class CredentialMissing(GatewayError):
    pass


class ContextOverflow(GatewayError):
    pass


class ProviderError(GatewayError):
    def __init__(self, status: int, body_excerpt: str):
        self.status = status
        self.body_excerpt = body_excerpt[:200]
        super().__init__(f"provider returned {status}: {self.body_excerpt}")


@dataclass(frozen=True)
class CompletionRequest:
    system_prompt: str
    messages: Sequence[tuple[str, str]]  # (speaker_label, text), transcript order
    max_output_chars: int = 500
    temperature: float = DEFAULT_TEMPERATURE
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency_ms: int
    provider_id: str


def serialized_context_chars(messages: Sequence[tuple[str, str]]) -> int:
    """Characters the transcript window occupies once labels are attached."""
    return sum(len(label) + len(text) + 2 for label, text in messages)


def check_budget(req: CompletionRequest) -> None:
    """Raise ContextOverflow before any network call if the request is too big."""
    if len(req.messages) > MAX_CONTEXT_POSTS:
        raise ContextOverflow(
            f"{len(req.messages)} messages exceed the {MAX_CONTEXT_POSTS}-post budget"
        )
    chars = serialized_context_chars(req.messages)
    if chars > MAX_CONTEXT_CHARS:
        raise ContextOverflow(
            f"context is {chars} chars; budget is {MAX_CONTEXT_CHARS}"
        )


class Provider(Protocol):
    def complete(self, req: CompletionRequest) -> CompletionResult: ...


class ScriptedProvider:
    """Deterministic provider: each call pops the next scripted reply.

    An exhausted script answers "Good" forever, so a drained script can only
    make the facilitator go quiet, never chatty. The cursor is lock-guarded;
    concurrent callers consume entries in call order.
    """

    provider_id = "scripted"

    def __init__(self, script: Sequence[str]):
        if not script:
            raise ValueError("scripted provider needs at least one entry")
        self._script = list(script)
        self._cursor = 0
        self._lock = threading.Lock()

    @property
    def calls_made(self) -> int:
        return self._cursor

    def complete(self, req: CompletionRequest) -> CompletionResult:
        check_budget(req)
        with self._lock:
            if self._cursor < len(self._script):
                text = self._script[self._cursor]
            else:
                text = "Good"
            self._cursor += 1
        return CompletionResult(text=text, latency_ms=0, provider_id=self.provider_id)


class HttpProvider:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint.

    The credential is read from the environment at call time and never logged.
    Failures surface as typed errors; the caller decides what a miss means
    (the scheduler treats any of them as an abstention for that tick).
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = API_KEY_ENV,
        provider_id: str | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.provider_id = provider_id or f"http:{model}"
        self._transport = transport

    def complete(self, req: CompletionRequest) -> CompletionResult:
        check_budget(req)
        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise CredentialMissing(f"environment variable {self.api_key_env} is not set")
        payload = {
            "model": self.model,
            "messages": [{"role": "system", "content": req.system_prompt}]
            + [
                {"role": "user", "content": f"{label}: {text}"}
                for label, text in req.messages
            ],
            "temperature": req.temperature,
            # tokens are never shorter than one character, so this always
            # leaves room for max_output_chars of text
            "max_tokens": max(1, req.max_output_chars),
        }
        started = time.perf_counter()
        try:
            with httpx.Client(
                timeout=req.timeout_ms / 1000.0, transport=self._transport
            ) as client:
                response = client.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers={"Authorization": f"Bearer {api_key}"},
                )
        except httpx.TimeoutException as exc:
            raise Timeout(f"no reply within {req.timeout_ms} ms") from exc
        except httpx.HTTPError as exc:
            raise ProviderError(0, str(exc)) from exc
        latency_ms = int((time.perf_counter() - started) * 1000)
        if response.status_code != 200:
            raise ProviderError(response.status_code, response.text)
        try:
            text = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(response.status_code, f"unparseable body: {response.text[:120]}") from exc
        if not isinstance(text, str):
            raise ProviderError(response.status_code, "completion content is not text")
        return CompletionResult(text=text, latency_ms=latency_ms, provider_id=self.provider_id)
