"""Pluggable text-generation backends.

``HttpBackend`` speaks the OpenAI-compatible chat-completions wire protocol
(``POST <base>/v1/chat/completions``).  ``MockBackend`` replays a canned
script.  ``TemplateBackend`` deterministically assembles a CREATE/INSERT/
SELECT triple from a feature selection so the whole pipeline can run
offline.
"""

from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass

import requests

from .catalog import FeatureSelection
from .errors import (
    BackendRefusal,
    ConfigError,
    PatternError,
    ProtocolError,
    TransportError,
)

DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 1024
DEFAULT_TIMEOUT_SECS = 120.0

ENV_BASE_URL = "MIST_LLM_BASE_URL"
ENV_API_KEY = "MIST_LLM_API_KEY"
ENV_MODEL = "MIST_LLM_MODEL"


@dataclass(frozen=True)
class GenerationRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class GenerationResponse:
    raw_text: str
    backend_id: str
    latency_secs: float


def generate(backend, req: GenerationRequest) -> GenerationResponse:
    """Ask the backend for one completion; text is returned verbatim."""
    return backend.generate(req)


class HttpBackend:
    """OpenAI-compatible chat-completions client with bounded retries."""

    parallel_safe = True

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        timeout_secs: float = DEFAULT_TIMEOUT_SECS,
        max_retries: int = 2,
        backoff_secs: float = 0.5,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout_secs = timeout_secs
        self.max_retries = max_retries
        self.backoff_secs = backoff_secs
        self.backend_id = f"http:{model}"
        self._session = requests.Session()

    @classmethod
    def from_env(cls, timeout_secs: float = DEFAULT_TIMEOUT_SECS) -> HttpBackend:
        base_url = os.environ.get(ENV_BASE_URL, "")
        if not base_url:
            raise ConfigError(f"{ENV_BASE_URL} is not set; cannot use a live backend")
        model = os.environ.get(ENV_MODEL, "") or "default"
        api_key = os.environ.get(ENV_API_KEY, "")
        return cls(base_url, model, api_key=api_key, timeout_secs=timeout_secs)

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/v1/chat/completions"

        last_exc: Exception | None = None
        start = time.monotonic()
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._session.post(
                    url, json=payload, headers=headers, timeout=self.timeout_secs
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_secs * (2**attempt))
                continue
            return self._parse_response(resp, start)
        raise TransportError(f"backend unreachable after {self.max_retries + 1} attempts: {last_exc}")

    def _parse_response(self, resp: requests.Response, start: float) -> GenerationResponse:
        if resp.status_code != 200:
            raise ProtocolError(f"backend returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed completion body: {exc}") from exc
        if content is None or content == "":
            raise BackendRefusal("backend returned an empty completion")
        if not isinstance(content, str):
            raise ProtocolError(f"completion content is not text: {type(content).__name__}")
        return GenerationResponse(content, self.backend_id, time.monotonic() - start)


@dataclass
class MockScript:
    responses: tuple[str, ...]
    exhaustion: str = "cycle"  # "cycle" | "error"

    def __post_init__(self):
        if not self.responses:
            raise ValueError("mock script needs at least one response")
        if self.exhaustion not in ("cycle", "error"):
            raise ValueError("exhaustion policy must be 'cycle' or 'error'")


class MockBackend:
    """Replays a scripted list of completions; records every request."""

    parallel_safe = False
    backend_id = "mock"

    def __init__(self, script: MockScript):
        self.script = script
        self.requests: list[GenerationRequest] = []
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> MockBackend:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(MockScript(tuple(doc["responses"]), doc.get("exhaustion", "cycle")))

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        with self._lock:
            self.requests.append(req)
            if self._cursor >= len(self.script.responses):
                if self.script.exhaustion == "error":
                    raise BackendRefusal(
                        f"mock script exhausted after {len(self.script.responses)} responses"
                    )
                self._cursor = 0
            text = self.script.responses[self._cursor]
            self._cursor += 1
        return GenerationResponse(text, self.backend_id, 0.0)


_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")
_BASE_TABLE = "t0"
_BASE_COLUMNS = ("c0", "c1", "c2")


def instantiate_pattern(pattern: str, rng: random.Random) -> str:
    """Replace ``{table}``/``{column}``/``{int}``/``{small}``/``{text}``/``{value}``."""

    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name == "table":
            return _BASE_TABLE
        if name == "column":
            return _BASE_COLUMNS[rng.randrange(len(_BASE_COLUMNS))]
        if name == "int":
            return str(rng.randint(-99, 99))
        if name == "uint":
            return str(rng.randint(0, 999))
        if name == "small":
            return str(rng.randint(1, 9))
        if name == "text":
            return "'s%d'" % rng.randint(0, 999)
        if name == "value":
            return str(rng.randint(-99, 99)) if rng.random() < 0.5 else "'v%d'" % rng.randint(0, 99)
        raise PatternError(f"unknown placeholder {{{name}}} in pattern {pattern!r}")

    return _PLACEHOLDER_RE.sub(sub, pattern)


_FALLBACK_TRIPLE = (
    "CREATE TABLE t0 (c0 INTEGER, c1 TEXT, c2 REAL);\n"
    "INSERT INTO t0 VALUES (1, 's1', 0.5);\n"
    "SELECT c0, c1, c2 FROM t0;"
)

_STATEMENT_HEAD_RE = re.compile(
    r"^\s*(CREATE|ALTER|DROP|INSERT|UPDATE|DELETE|SELECT|WITH|PRAGMA|EXPLAIN|BEGIN|COMMIT|ROLLBACK|VACUUM|ANALYZE|REINDEX)\b",
    re.IGNORECASE,
)


class TemplateBackend:
    """Offline stand-in that expands feature syntax patterns into a test case.

    Output always contains at least one DDL, one DML, and one DQL statement
    and embeds every selected feature's (instantiated) syntax pattern.
    """

    parallel_safe = True
    backend_id = "template"

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        return GenerationResponse(f"```sql\n{_FALLBACK_TRIPLE}\n```", self.backend_id, 0.0)

    def generate_for_selection(
        self, selection: FeatureSelection, rng: random.Random
    ) -> GenerationResponse:
        stmts: list[str] = [f"CREATE TABLE {_BASE_TABLE} (c0 INTEGER, c1 TEXT, c2 REAL);"]
        rows = 2 + rng.randrange(3)
        values = ", ".join(
            f"({i}, 's{rng.randint(0, 99)}', {rng.randint(0, 99)}.{rng.randint(0, 9)})"
            for i in range(rows)
        )
        stmts.append(f"INSERT INTO {_BASE_TABLE} (c0, c1, c2) VALUES {values};")
        for _, feature in selection.features:
            rendered = instantiate_pattern(feature.syntax_pattern, rng).strip()
            if not _STATEMENT_HEAD_RE.match(rendered):
                rendered = f"SELECT {rendered}"
            if not rendered.endswith(";"):
                rendered += ";"
            stmts.append(rendered)
        stmts.append(f"SELECT c0, c1, c2 FROM {_BASE_TABLE} ORDER BY c0;")
        return GenerationResponse("```sql\n" + "\n".join(stmts) + "\n```", self.backend_id, 0.0)


def template_generate(
    backend: TemplateBackend, selection: FeatureSelection, rng: random.Random
) -> GenerationResponse:
    return backend.generate_for_selection(selection, rng)
