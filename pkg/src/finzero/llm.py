"""Completion gateway: live OpenAI-compatible endpoint, deterministic
replay store, and an on-disk response cache.

Every request is identified by a fingerprint — a sha256 over a canonical
serialization of (model, params, prompt) — which keys both the cache and
fingerprint-style replay files. Replay files may instead key by
(record_id, stage), which stays stable when templates change.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import ConfigError, GatewayError, ReplayMissError

DEFAULT_MODEL = "gpt-3.5-turbo"
API_KEY_VAR = "LLM_API_KEY"


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    top_p: float = 0.95
    max_tokens: int = 1000
    model: str = DEFAULT_MODEL

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ConfigError("max_tokens must be positive")


@dataclass(frozen=True)
class LLMResponse:
    text: str
    backend: str  # live | replay | cache
    request_fingerprint: str


def fingerprint(prompt: str, params: GenerationParams) -> str:
    """Stable hash of a canonical serialization of the request."""
    canonical = json.dumps(
        {
            "max_tokens": params.max_tokens,
            "model": params.model,
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
        },
        sort_keys=True,
        ensure_ascii=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ResponseCache:
    """Directory of fingerprint-named UTF-8 text files, written atomically."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.txt"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, key: str, text: str) -> None:
        tmp = self.directory / f".{key}.{uuid.uuid4().hex}.tmp"
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, self._path(key))


class ReplayBackend:
    """Serve completions from a JSONL fixture.

    Rows are either {"fingerprint": …, "text": …} or
    {"record_id": …, "stage": …, "text": …}; a file may mix both.
    """

    name = "replay"

    def __init__(self, path):
        self.path = Path(path)
        self.by_fingerprint: dict[str, str] = {}
        self.by_stage: dict[tuple[str, str], str] = {}
        try:
            content = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read replay file {self.path}: {exc}")
        for lineno, line in enumerate(content.splitlines(), 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{self.path}:{lineno}: bad JSON: {exc}")
            if "text" not in row:
                raise ConfigError(f"{self.path}:{lineno}: row has no 'text'")
            if "fingerprint" in row:
                self.by_fingerprint[row["fingerprint"]] = row["text"]
            elif "record_id" in row and "stage" in row:
                self.by_stage[(row["record_id"], row["stage"])] = row["text"]
            else:
                raise ConfigError(
                    f"{self.path}:{lineno}: row needs fingerprint or record_id+stage"
                )

    def generate(self, prompt, params, request_fingerprint, record_id, stage) -> str:
        text = self.by_fingerprint.get(request_fingerprint)
        if text is not None:
            return text
        if record_id is not None and stage is not None:
            text = self.by_stage.get((record_id, stage))
            if text is not None:
                return text
        raise ReplayMissError(
            f"replay store has no entry for fingerprint {request_fingerprint}"
            f" (record_id={record_id!r}, stage={stage!r})",
            request_fingerprint,
        )


class LiveBackend:
    """OpenAI-compatible HTTP backend supporting chat and completion framings."""

    name = "live"

    def __init__(
        self,
        endpoint: str,
        framing: str = "chat",
        api_key: str | None = None,
        max_retries: int = 3,
        timeout: float = 60.0,
        backoff_base: float = 0.5,
    ):
        if framing not in ("chat", "completion"):
            raise ConfigError(f"unknown framing {framing!r}")
        self.endpoint = endpoint.rstrip("/")
        self.framing = framing
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_VAR)
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff_base = backoff_base

    def _request(self, prompt: str, params: GenerationParams):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": params.model,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        if self.framing == "chat":
            url = f"{self.endpoint}/chat/completions"
            body["messages"] = [{"role": "user", "content": prompt}]
        else:
            url = f"{self.endpoint}/completions"
            body["prompt"] = prompt
        return requests.post(url, json=body, headers=headers, timeout=self.timeout)

    def _extract_text(self, payload: dict) -> str:
        try:
            choice = payload["choices"][0]
            if self.framing == "chat":
                return choice["message"]["content"]
            return choice["text"]
        except (KeyError, IndexError, TypeError):
            raise GatewayError(f"response shape not understood: {str(payload)[:200]}")

    def generate(self, prompt, params, request_fingerprint, record_id, stage) -> str:
        last_error: GatewayError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                response = self._request(prompt, params)
            except requests.RequestException as exc:
                last_error = GatewayError(f"transport failure: {exc}")
                continue
            if response.status_code == 200:
                try:
                    return self._extract_text(response.json())
                except ValueError as exc:
                    raise GatewayError(f"non-JSON 200 response: {exc}", status=200)
            last_error = GatewayError(
                f"HTTP {response.status_code}: {response.text[:200]}",
                status=response.status_code,
            )
            if response.status_code not in (429, 500, 502, 503, 504):
                break
        raise last_error if last_error else GatewayError("no attempts made")


class LlmGateway:
    """Front door for completions: cache first, then the backend.

    ``backend`` may be None for cache-only operation, where a cache miss
    is an error. Successful live responses are persisted to the cache;
    replayed responses are not (the fixture already is one).
    """

    def __init__(self, backend=None, cache: ResponseCache | None = None, max_in_flight: int = 4):
        self.backend = backend
        self.cache = cache
        self._gate = threading.Semaphore(max_in_flight)

    def complete(
        self,
        prompt: str,
        params: GenerationParams | None = None,
        record_id: str | None = None,
        stage: str | None = None,
    ) -> LLMResponse:
        params = params if params is not None else GenerationParams()
        key = fingerprint(prompt, params)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return LLMResponse(hit, "cache", key)
        if self.backend is None:
            raise GatewayError(f"cache-only backend has no entry for {key}")
        with self._gate:
            text = self.backend.generate(prompt, params, key, record_id, stage)
        if self.cache is not None and self.backend.name == "live":
            self.cache.put(key, text)
        return LLMResponse(text, self.backend.name, key)
