"""Provider-neutral chat-completion client with a record/replay cache.

Modes:

* ``live``: call the endpoint, never touch the cache.
* ``record``: call the endpoint and persist the reply.
* ``replay``: answer only from the cache; a miss is an error.

The API key is read from the environment on every call and is never stored.
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Protocol

import httpx

from .errors import (
    LlmProviderError,
    LlmTransportError,
    MissingApiKeyError,
    MissingCacheEntryError,
)

log = logging.getLogger(__name__)

MODES = ("live", "record", "replay")
RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str = "http://localhost:8000/v1"
    model_name: str = "gemini-2.5-flash"
    api_key_env: str = "PPM_LLM_API_KEY"
    temperature: float = 0.0
    timeout: float = 120.0
    max_retries: int = 4
    adapter: str = "openai"
    concurrency: int = 4
    backoff_base: float = 0.5


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def cache_key(prompt: str, model_name: str, temperature: float) -> str:
    material = b"\x00".join(
        [prompt.encode("utf-8"), model_name.encode("utf-8"), repr(float(temperature)).encode()]
    )
    return hashlib.sha256(material).hexdigest()


class ReplayCache:
    """One ``<digest>.txt`` file per reply; writes are atomic and serialised."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def path_for(self, key: str) -> Path:
        return self.directory / f"{key}.txt"

    def get(self, key: str) -> str | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        return path.read_bytes().decode("utf-8")

    def put(self, key: str, reply: str) -> None:
        with self._lock:
            self.directory.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(reply.encode("utf-8"))
                os.replace(tmp, self.path_for(key))
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise

    def keys(self) -> list[str]:
        if not self.directory.exists():
            return []
        return sorted(p.stem for p in self.directory.glob("*.txt"))


class Transport(Protocol):
    def __call__(self, prompt: str, config: LlmEndpointConfig) -> str: ...


# Adapters map the neutral request onto a provider schema: (url, headers, body) and reply text.
def _openai_request(prompt: str, config: LlmEndpointConfig, key: str):
    url = config.base_url.rstrip("/") + "/chat/completions"
    body = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
    }
    return url, {"Authorization": f"Bearer {key}"}, body


def _openai_text(payload: dict) -> str:
    return payload["choices"][0]["message"]["content"]


def _gemini_request(prompt: str, config: LlmEndpointConfig, key: str):
    url = f"{config.base_url.rstrip('/')}/models/{config.model_name}:generateContent"
    body = {
        "contents": [{"role": "user", "parts": [{"text": prompt}]}],
        "generationConfig": {"temperature": config.temperature},
    }
    return url, {"x-goog-api-key": key}, body


def _gemini_text(payload: dict) -> str:
    parts = payload["candidates"][0]["content"]["parts"]
    return "".join(p.get("text", "") for p in parts)


ADAPTERS: dict[str, tuple[Callable, Callable[[dict], str]]] = {
    "openai": (_openai_request, _openai_text),
    "gemini": (_gemini_request, _gemini_text),
}


class HttpTransport:
    """Plain-HTTP transport with exponential, jittered backoff on transient failures."""

    def __init__(
        self,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter: Callable[[], float] = random.random,
    ):
        self._client = client
        self._sleep = sleep
        self._jitter = jitter

    def __call__(self, prompt: str, config: LlmEndpointConfig) -> str:
        key = os.environ.get(config.api_key_env)
        if not key:
            raise MissingApiKeyError(f"environment variable {config.api_key_env} is not set")
        try:
            build, extract = ADAPTERS[config.adapter]
        except KeyError:
            raise LlmTransportError(f"no HTTP adapter named {config.adapter!r}") from None
        url, headers, body = build(prompt, config, key)
        client = self._client or httpx.Client(timeout=config.timeout)
        try:
            return self._post(client, url, headers, body, extract, config)
        finally:
            if self._client is None:
                client.close()

    def _post(self, client, url, headers, body, extract, config) -> str:
        last = "no attempt made"
        for attempt in range(config.max_retries + 1):
            if attempt:
                delay = config.backoff_base * (2 ** (attempt - 1)) * (1 + self._jitter())
                log.info("retrying LLM request in %.2fs (attempt %d)", delay, attempt + 1)
                self._sleep(delay)
            try:
                resp = client.post(url, headers=headers, json=body, timeout=config.timeout)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise LlmProviderError(resp.status_code, resp.text)
            try:
                payload = resp.json()
            except ValueError:
                raise LlmProviderError(resp.status_code, resp.text) from None
            if isinstance(payload, dict) and "error" in payload:
                raise LlmProviderError(resp.status_code, resp.text)
            try:
                return extract(payload)
            except (KeyError, IndexError, TypeError):
                raise LlmProviderError(resp.status_code, resp.text) from None
        raise LlmTransportError(f"request failed after {config.max_retries + 1} attempts: {last}")


def complete(
    prompt: str,
    config: LlmEndpointConfig,
    cache: ReplayCache | None,
    mode: str = "replay",
    transport: Transport | None = None,
) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    key = cache_key(prompt, config.model_name, config.temperature)
    if mode == "replay":
        reply = cache.get(key) if cache is not None else None
        if reply is None:
            raise MissingCacheEntryError(f"no cached reply for prompt {prompt_digest(prompt)[:12]}")
        return reply
    transport = transport or HttpTransport()
    reply = transport(prompt, config)
    if mode == "record":
        if cache is None:
            raise ValueError("record mode needs a cache")
        cache.put(key, reply)
    return reply


class Gateway:
    """Bound ``complete`` with a cap on in-flight requests."""

    def __init__(
        self,
        config: LlmEndpointConfig,
        cache: ReplayCache | None,
        mode: str,
        transport: Transport | None = None,
    ):
        self.config = config
        self.cache = cache
        self.mode = mode
        self.transport = transport
        self._slots = threading.BoundedSemaphore(max(1, config.concurrency))
        self.used_keys: set[str] = set()
        self._keys_lock = threading.Lock()

    def __call__(self, prompt: str) -> str:
        with self._slots:
            reply = complete(prompt, self.config, self.cache, self.mode, self.transport)
        with self._keys_lock:
            self.used_keys.add(cache_key(prompt, self.config.model_name, self.config.temperature))
        return reply


class UnmappedPromptError(MissingCacheEntryError):
    kind = "unmapped_prompt"


class ScriptedResponder:
    """In-memory stand-in keyed by :func:`prompt_digest`."""

    def __init__(self, script: Mapping[str, str]):
        self.script = dict(script)
        self.calls: list[str] = []

    def __call__(self, prompt: str, config: LlmEndpointConfig | None = None) -> str:
        digest = prompt_digest(prompt)
        self.calls.append(digest)
        try:
            return self.script[digest]
        except KeyError:
            raise UnmappedPromptError(f"no scripted reply for prompt {digest[:12]}") from None


def mock_responder(script: Mapping[str, str]) -> ScriptedResponder:
    return ScriptedResponder(script)
