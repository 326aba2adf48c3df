"""Completion backends: a scripted offline mock and an OpenAI-compatible client.

Any model can drive the pipeline as long as it satisfies the text-in /
text-out contract of :class:`CompletionBackend`. The mock never fabricates
output: an unmatched prompt is an error, which keeps tests honest about
exactly which calls a pipeline stage performs.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import httpx

log = logging.getLogger(__name__)

ENV_API_KEY = "LLM_API_KEY"
ENV_BASE_URL = "LLM_BASE_URL"
ENV_MODEL = "LLM_MODEL"

SYSTEM_PREAMBLE = (
    "You are a careful literary annotation assistant. "
    "Follow the requested output format exactly."
)


class BackendError(RuntimeError):
    """A backend failed to produce a completion."""


class ScriptExhaustedError(BackendError):
    pass


class UnmatchedPromptError(BackendError):
    pass


@runtime_checkable
class CompletionBackend(Protocol):
    backend_id: str

    def complete(self, prompt: str) -> str: ...


@dataclass
class ScriptEntry:
    """One canned response; ``match`` is a required substring, None/'*' = any."""

    response: str
    match: str | None = None
    repeat: bool = False

    def accepts(self, prompt: str) -> bool:
        return self.match is None or self.match == "*" or self.match in prompt


class ScriptedMock:
    """Deterministic backend answering from an ordered script.

    Each call consumes the first unconsumed entry whose matcher accepts the
    prompt (entries with ``repeat=True`` are never consumed). Exhausted or
    unmatched prompts raise instead of inventing a response.
    """

    backend_id = "mock"

    def __init__(self, script):
        self._entries: list[ScriptEntry] = []
        for item in script:
            if isinstance(item, ScriptEntry):
                self._entries.append(item)
            elif isinstance(item, str):
                self._entries.append(ScriptEntry(response=item))
            elif isinstance(item, tuple) and len(item) == 2:
                matcher, response = item
                self._entries.append(ScriptEntry(response=response, match=matcher))
            else:
                raise TypeError(f"unsupported script item: {item!r}")
        self._consumed = [False] * len(self._entries)
        self.call_count = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.call_count += 1
            any_unconsumed = False
            for i, entry in enumerate(self._entries):
                if self._consumed[i]:
                    continue
                any_unconsumed = True
                if entry.accepts(prompt):
                    if not entry.repeat:
                        self._consumed[i] = True
                    return entry.response
            if not any_unconsumed:
                raise ScriptExhaustedError(
                    f"mock script exhausted after {self.call_count - 1} calls"
                )
            raise UnmatchedPromptError(
                f"no script entry matches prompt starting {prompt[:80]!r}"
            )

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedMock":
        """Load a script file: a JSON list of strings or
        ``{"response": ..., "match": ..., "repeat": ...}`` objects."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, list):
            raise ValueError("mock script file must contain a JSON list")
        entries = []
        for item in raw:
            if isinstance(item, str):
                entries.append(ScriptEntry(response=item))
            elif isinstance(item, dict):
                entries.append(
                    ScriptEntry(
                        response=str(item["response"]),
                        match=item.get("match"),
                        repeat=bool(item.get("repeat", False)),
                    )
                )
            else:
                raise ValueError(f"unsupported mock script item: {item!r}")
        return cls(entries)


class HttpBackend:
    """OpenAI-compatible chat-completions client.

    The prompt is sent as a single user message below a fixed system
    preamble. Transient failures (network errors, 5xx, 429) are retried with
    exponential backoff; other non-2xx responses surface the body.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        *,
        temperature: float = 0.0,
        max_retries: int = 2,
        timeout: float = 60.0,
        backoff_base: float = 0.5,
    ):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL) or "").rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_MODEL) or "gpt-4o"
        if not self.base_url:
            raise BackendError(
                f"no base URL configured; set {ENV_BASE_URL} or pass base_url"
            )
        self.temperature = temperature
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff_base = backoff_base
        self.backend_id = f"http:{self.model}"

    def complete(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PREAMBLE},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"

        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                response = httpx.post(url, json=payload, headers=headers, timeout=self.timeout)
            except httpx.HTTPError as exc:
                last_error = exc
                log.warning("completion request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code >= 500 or response.status_code == 429:
                last_error = BackendError(
                    f"HTTP {response.status_code}: {response.text[:500]}"
                )
                log.warning("transient HTTP %d (attempt %d)", response.status_code, attempt + 1)
                continue
            if response.status_code >= 400:
                raise BackendError(f"HTTP {response.status_code}: {response.text[:2000]}")
            return self._extract_text(response)
        raise BackendError(f"completion failed after {self.max_retries + 1} attempts: {last_error}")

    @staticmethod
    def _extract_text(response: httpx.Response) -> str:
        try:
            data = response.json()
            return data["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(
                f"unexpected completion response shape: {response.text[:500]}"
            ) from exc


def make_backend(kind: str, *, mock_script: str | Path | None = None, **kwargs) -> CompletionBackend:
    """Factory used by the CLI: ``mock`` (requires a script file) or ``http``."""
    if kind == "mock":
        if mock_script is None:
            raise ValueError("mock backend requires a script file")
        return ScriptedMock.from_file(mock_script)
    if kind == "http":
        return HttpBackend(**kwargs)
    raise ValueError(f"unknown backend kind {kind!r}")
