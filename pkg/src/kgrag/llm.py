"""Chat-completion clients: an OpenAI-style HTTP backend and a scripted mock."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import httpx

logger = logging.getLogger(__name__)


class LlmError(Exception):
    """Base class for LLM client failures."""


class LlmTransportError(LlmError):
    """HTTP backend failed after retries or returned an unusable response."""


class MockScriptError(LlmError):
    """The scripted mock had no response for a prompt."""


@dataclass(frozen=True)
class LlmRequest:
    """A single chat-completion call."""

    user: str
    system: str | None = None
    max_tokens: int = 512
    temperature: float = 0.0


@dataclass(frozen=True)
class LlmResponse:
    """Completion text plus optional (prompt_tokens, completion_tokens) usage."""

    text: str
    usage: tuple[int, int] | None = None


class LlmClient(Protocol):
    def complete(self, request: LlmRequest) -> LlmResponse: ...


def prompt_fingerprint(request: LlmRequest) -> str:
    """Stable short digest of the prompt, used to key scripted responses."""
    payload = (request.system or "") + "\x00" + request.user
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _combined_prompt(request: LlmRequest) -> str:
    return f"{request.system}\n{request.user}" if request.system else request.user


class MockLlmClient:
    """Deterministic mock resolving prompts to scripted responses.

    Resolution order: exact fingerprint match, then the first substring rule
    whose patterns all occur in the prompt, then the default. A miss with no
    default raises MockScriptError naming the fingerprint so the script can
    be extended.
    """

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        rules: Sequence[tuple[str | Sequence[str], str]] | None = None,
        default: str | None = None,
    ) -> None:
        self.responses = dict(responses or {})
        self.rules = [(self._patterns(m), text) for m, text in (rules or [])]
        self.default = default
        self.calls: list[str] = []
        self._lock = threading.Lock()

    @staticmethod
    def _patterns(matcher: str | Sequence[str]) -> list[str]:
        if isinstance(matcher, str):
            return [matcher]
        patterns = [str(p) for p in matcher]
        if not patterns:
            raise ValueError("mock rule matcher must not be empty")
        return patterns

    @classmethod
    def from_file(cls, path: str) -> "MockLlmClient":
        """Load a script file: {"rules": [{"match", "response"}], "responses", "default"}."""
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: mock script must be a JSON object")
        rules = []
        for i, rule in enumerate(doc.get("rules", [])):
            if not isinstance(rule, dict) or "match" not in rule or "response" not in rule:
                raise ValueError(f"{path}: rule {i} needs 'match' and 'response'")
            rules.append((rule["match"], rule["response"]))
        return cls(
            responses=doc.get("responses") or {},
            rules=rules,
            default=doc.get("default"),
        )

    def complete(self, request: LlmRequest) -> LlmResponse:
        fingerprint = prompt_fingerprint(request)
        prompt = _combined_prompt(request)
        with self._lock:
            self.calls.append(fingerprint)
        text = self.responses.get(fingerprint)
        if text is None:
            for patterns, candidate in self.rules:
                if all(p in prompt for p in patterns):
                    text = candidate
                    break
        if text is None:
            text = self.default
        if text is None:
            raise MockScriptError(
                f"no scripted response for prompt fingerprint {fingerprint}"
            )
        return LlmResponse(text=text, usage=(len(prompt.split()), len(text.split())))


class HttpChatClient:
    """OpenAI-style chat-completion client with retries and an in-flight cap.

    Transient failures (network errors, HTTP 5xx and 429) are retried with
    exponential backoff (base 0.5s, 3 attempts total); anything else, or an
    exhausted retry budget, raises LlmTransportError.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key: str | None = None,
        api_key_env: str = "KGRAG_API_KEY",
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        max_inflight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._semaphore = threading.BoundedSemaphore(max_inflight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, request: LlmRequest) -> LlmResponse:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(1, self.max_retries + 1):
            if attempt > 1:
                delay = self.backoff_base * 2 ** (attempt - 2)
                logger.debug("retrying completion in %.2fs (attempt %d)", delay, attempt)
                self._sleep(delay)
            try:
                with self._semaphore:
                    response = self._client.post(
                        self.endpoint, json=payload, headers=self._headers()
                    )
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500 or response.status_code == 429:
                last_error = LlmTransportError(
                    f"server returned {response.status_code}"
                )
                continue
            if response.status_code != 200:
                raise LlmTransportError(
                    f"completion failed with status {response.status_code}: "
                    f"{response.text[:200]}"
                )
            return self._parse(response)
        raise LlmTransportError(f"retries exhausted: {last_error}") from last_error

    @staticmethod
    def _parse(response: httpx.Response) -> LlmResponse:
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise LlmTransportError(f"unexpected response shape: {exc}") from exc
        usage = data.get("usage") or {}
        pair = None
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            pair = (int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
        return LlmResponse(text=str(text), usage=pair)

    def close(self) -> None:
        self._client.close()
