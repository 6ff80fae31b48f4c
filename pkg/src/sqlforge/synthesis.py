"""Stage-I synthesis: prompts, error memory, and SQL extraction.

The generation loop is closed: execution failures are normalized into a
bounded error memory whose top entries are embedded in every subsequent
prompt, steering the backend away from repeated dialect mistakes.
"""

from __future__ import annotations

import random
import re
import threading
from dataclasses import dataclass, field
from enum import Enum

from .cases import SynthesizedProvenance, TestCase
from .catalog import (
    FeatureCatalog,
    FeatureSelection,
    SamplingConfig,
    sample_random_flat,
    sample_selection,
)
from .errors import NoSqlFound, SynthesisFailure
from .llm import DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, GenerationRequest
from .statements import STATEMENT_KEYWORDS, classify, split_sql

SYSTEM_PROMPT = (
    "You are an expert database testing engineer. You write SQL test cases "
    "that exercise unusual code paths in a target database engine."
)

OUTPUT_REQUIREMENTS = (
    "Output requirements:\n"
    "- Respond with executable SQL only: schema statements (DDL), data statements (DML), "
    "and queries (DQL).\n"
    "- Terminate every statement with a semicolon.\n"
    "- Do not include explanations, comments, or markdown fences."
)

NO_KNOWN_ERRORS = "Known failures to avoid: none recorded yet."


class ErrorKind(Enum):
    SYNTAX = "syntax"
    RUNTIME = "runtime"
    CRASH = "crash"


@dataclass
class ErrorEntry:
    kind: ErrorKind
    normalized_message: str
    occurrence_count: int
    example_sql: str
    last_seen: int = 0


_QUOTED_DOUBLE_RE = re.compile(r'"[^"]*"')
_QUOTED_SINGLE_RE = re.compile(r"'[^']*'")
_DIGITS_RE = re.compile(r"\d+")


def normalize_error_message(message: str) -> str:
    """Lowercase and mask quoted literals and digit runs for deduplication."""
    text = message.lower()
    text = _QUOTED_DOUBLE_RE.sub('"?"', text)
    text = _QUOTED_SINGLE_RE.sub("'?'", text)
    text = _DIGITS_RE.sub("#", text)
    return text


class ErrorMemory:
    """Bounded, deduplicated store of normalized execution errors.

    Thread-safe: updates are serialized, reads take a snapshot.
    """

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._entries: dict[str, ErrorEntry] = {}
        self._clock = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, kind: ErrorKind, message: str, sql: str) -> ErrorEntry:
        if not message:
            raise ValueError("error message must be non-empty")
        normalized = normalize_error_message(message)
        with self._lock:
            self._clock += 1
            entry = self._entries.get(normalized)
            if entry is not None:
                entry.occurrence_count += 1
                entry.last_seen = self._clock
                return entry
            entry = ErrorEntry(kind, normalized, 1, sql, self._clock)
            if len(self._entries) >= self.capacity:
                victim = min(
                    self._entries.values(), key=lambda e: (e.occurrence_count, e.last_seen)
                )
                if victim.occurrence_count > entry.occurrence_count:
                    # established entries outrank a first-time newcomer
                    return entry
                del self._entries[victim.normalized_message]
            self._entries[normalized] = entry
            return entry

    def top(self, k: int) -> list[ErrorEntry]:
        """The k most frequent entries; ties broken by recency (newest first)."""
        with self._lock:
            ranked = sorted(
                self._entries.values(),
                key=lambda e: (-e.occurrence_count, -e.last_seen),
            )
            return ranked[: max(k, 0)]

    def snapshot(self) -> list[ErrorEntry]:
        with self._lock:
            return list(self._entries.values())


def record_error(memory: ErrorMemory, kind: ErrorKind, message: str, sql: str) -> ErrorEntry:
    return memory.record(kind, message, sql)


@dataclass(frozen=True)
class PromptBundle:
    system_prompt: str
    user_prompt: str


def build_prompt(selection: FeatureSelection, memory: ErrorMemory, k: int) -> PromptBundle:
    """Prompt with feature list, top-k error digest, and output requirements."""
    lines = [f"Target DBMS dialect: {selection.dialect}", ""]
    lines.append("Write one SQL test case that uses ALL of the following features together:")
    for category, feat in selection.features:
        desc = f" -- {feat.description}" if feat.description else ""
        lines.append(f"- {feat.name} [{category}]{desc}")
        lines.append(f"  example syntax: {feat.syntax_pattern}")
    lines.append("")
    entries = memory.top(k) if k > 0 else []
    if entries:
        lines.append("Known failures to avoid (do not repeat these mistakes):")
        for entry in entries:
            lines.append(
                f"- [{entry.kind.value}] {entry.normalized_message} "
                f"(seen {entry.occurrence_count}x)"
            )
    else:
        lines.append(NO_KNOWN_ERRORS)
    lines.append("")
    lines.append(OUTPUT_REQUIREMENTS)
    return PromptBundle(SYSTEM_PROMPT, "\n".join(lines))


def build_simple_prompt(dialect: str) -> PromptBundle:
    """Bare instruction prompt: no features, no error memory."""
    user = (
        f"Generate a SQL test case for {dialect}.\n"
        "Include schema creation, data population, and queries.\n\n" + OUTPUT_REQUIREMENTS
    )
    return PromptBundle(SYSTEM_PROMPT, user)


_FENCE_RE = re.compile(r"^\s*```")


def _strip_fences(raw: str) -> str:
    kept = [line for line in raw.splitlines() if not _FENCE_RE.match(line)]
    return "\n".join(kept)


def _strip_comments(text: str) -> str:
    """Remove ``--`` and ``/* */`` comments outside string literals."""
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "'" or ch == '"' or ch == "`":
            j = i + 1
            while j < n:
                if text[j] == ch:
                    if j + 1 < n and text[j + 1] == ch:
                        j += 2
                        continue
                    j += 1
                    break
                j += 1
            else:
                j = n
            out.append(text[i:j])
            i = j
        elif ch == "-" and text.startswith("--", i):
            j = text.find("\n", i)
            i = n if j < 0 else j
        elif ch == "/" and text.startswith("/*", i):
            j = text.find("*/", i + 2)
            i = n if j < 0 else j + 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")


def _statement_start(segment: str) -> int | None:
    """Offset of the first statement keyword, preferring line-initial matches.

    Prose lines between or before statements become a prefix of the segment
    once comments and fences are gone; cutting at the first line-initial
    statement keyword drops them without touching multi-line statements.
    """
    line_initial: int | None = None
    anywhere: int | None = None
    quote: str | None = None
    at_line_start = True
    i = 0
    n = len(segment)
    while i < n:
        ch = segment[i]
        if quote:
            if ch == quote:
                if i + 1 < n and segment[i + 1] == quote:
                    i += 2
                    continue
                quote = None
            i += 1
            continue
        if ch in ("'", '"', "`"):
            quote = ch
            at_line_start = False
            i += 1
            continue
        if ch == "\n":
            at_line_start = True
            i += 1
            continue
        if ch.isalpha() or ch == "_":
            match = _WORD_RE.match(segment, i)
            word = match.group(0)
            if word.upper() in STATEMENT_KEYWORDS:
                if at_line_start and line_initial is None:
                    line_initial = i
                if anywhere is None:
                    anywhere = i
            at_line_start = False
            i = match.end()
            continue
        if not ch.isspace():
            at_line_start = False
        i += 1
    return line_initial if line_initial is not None else anywhere


def extract_sql(raw: str) -> list[str]:
    """Post-process raw generation output into executable statements.

    Fence markers are stripped (contents kept), comments removed, text is
    split on semicolons outside string literals, prose prefixes are cut,
    and only segments beginning with a known statement keyword survive.
    Every returned statement is semicolon-terminated.
    """
    text = _strip_comments(_strip_fences(raw))
    statements: list[str] = []
    for segment in split_sql(text):
        segment = segment.rstrip()
        if segment.endswith(";"):
            segment = segment[:-1]
        start = _statement_start(segment)
        if start is None:
            continue
        stmt = segment[start:].strip()
        if stmt:
            statements.append(stmt + ";")
    if not statements:
        raise NoSqlFound("no SQL statement found in generation output")
    return statements


@dataclass(frozen=True)
class SynthesisConfig:
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    strategy: str = "hierarchical"  # hierarchical | random-feature | simple
    error_digest_k: int = 5
    max_retries: int = 3
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS


def synthesize_one(
    catalog: FeatureCatalog,
    memory: ErrorMemory,
    backend,
    rng: random.Random,
    cfg: SynthesisConfig,
    case_id: str | None = None,
) -> TestCase:
    """Sample features, prompt the backend, and extract one test case.

    Retries with fresh samples up to ``cfg.max_retries`` times when the
    output yields no SQL; raises ``SynthesisFailure`` once exhausted.
    """
    last_reason = "no attempts made"
    for _attempt in range(cfg.max_retries + 1):
        selection: FeatureSelection | None
        if cfg.strategy == "hierarchical":
            selection = sample_selection(catalog, rng, cfg.sampling)
            bundle = build_prompt(selection, memory, cfg.error_digest_k)
        elif cfg.strategy == "random-feature":
            selection = sample_random_flat(catalog, rng, cfg.sampling)
            bundle = build_prompt(selection, memory, cfg.error_digest_k)
        elif cfg.strategy == "simple":
            selection = None
            bundle = build_simple_prompt(catalog.dialect)
        else:
            raise SynthesisFailure(f"unknown synthesis strategy {cfg.strategy!r}")

        request = GenerationRequest(
            bundle.system_prompt,
            bundle.user_prompt,
            temperature=cfg.temperature,
            max_tokens=cfg.max_tokens,
        )
        if selection is not None and hasattr(backend, "generate_for_selection"):
            response = backend.generate_for_selection(selection, rng)
        else:
            response = backend.generate(request)
        try:
            texts = extract_sql(response.raw_text)
        except NoSqlFound as exc:
            last_reason = str(exc)
            continue
        ident = case_id if case_id is not None else f"syn-{rng.getrandbits(32):08x}"
        provenance = SynthesizedProvenance(selection, cfg.strategy)
        return TestCase(ident, tuple(classify(t) for t in texts), provenance)
    raise SynthesisFailure(f"synthesis failed after {cfg.max_retries + 1} attempts: {last_reason}")
