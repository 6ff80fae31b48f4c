"""Execute test cases against a target DBMS in isolation.

Every case runs against a fresh, empty database.  Outcomes follow the
implicit oracle: a case passes when no statement hits a syntax error,
runtime exception, crash, or timeout.  Syntax and runtime failures do not
halt the case; crashes and timeouts do.
"""

from __future__ import annotations

import multiprocessing
import re
import subprocess
import tempfile
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .cases import TestCase
from .errors import DriverUnavailable


class StatementStatus(Enum):
    OK = "ok"
    SYNTAX_ERROR = "syntax_error"
    RUNTIME_ERROR = "runtime_error"
    CRASH = "crash"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class StatementOutcome:
    status: StatementStatus
    detail: str = ""
    rows: int = 0


@dataclass(frozen=True)
class ExecutionReport:
    outcomes: tuple[StatementOutcome, ...]
    wall_time_secs: float

    def statuses(self) -> list[StatementStatus]:
        return [o.status for o in self.outcomes]


class CaseOutcome(Enum):
    PASS = "pass"
    SYNTAX_FAIL = "syntax_fail"
    RUNTIME_FAIL = "runtime_fail"
    CRASH_FAIL = "crash_fail"
    TIMEOUT_FAIL = "timeout_fail"


_SEVERITY = [
    (StatementStatus.CRASH, CaseOutcome.CRASH_FAIL),
    (StatementStatus.TIMEOUT, CaseOutcome.TIMEOUT_FAIL),
    (StatementStatus.RUNTIME_ERROR, CaseOutcome.RUNTIME_FAIL),
    (StatementStatus.SYNTAX_ERROR, CaseOutcome.SYNTAX_FAIL),
]


def classify_outcome(report: ExecutionReport) -> CaseOutcome:
    """Pass iff every statement is Ok; otherwise the most severe failure."""
    statuses = set(report.statuses())
    for status, outcome in _SEVERITY:
        if status in statuses:
            return outcome
    return CaseOutcome.PASS


_SYNTAX_MARKERS = ("syntax error", "unrecognized token", "incomplete input")


def classify_error_message(message: str) -> StatementStatus:
    low = message.lower()
    if any(marker in low for marker in _SYNTAX_MARKERS):
        return StatementStatus.SYNTAX_ERROR
    return StatementStatus.RUNTIME_ERROR


def _run_sqlite_statements(texts: list[str], timeout_secs: float, emit) -> None:
    """Run statements on a fresh in-memory database, emitting one outcome each.

    Emits ``(status_value, detail, rows)`` tuples in statement order and
    stops after a timeout.  Syntax/runtime errors keep going.
    """
    import sqlite3

    deadline = time.monotonic() + max(timeout_secs, 0.0)
    # autocommit: the SQL under test owns transaction control (BEGIN/COMMIT)
    db = sqlite3.connect(":memory:", isolation_level=None)

    def watchdog():
        return 1 if time.monotonic() > deadline else 0

    db.set_progress_handler(watchdog, 1000)
    for text in texts:
        if timeout_secs <= 0 or time.monotonic() >= deadline:
            emit((StatementStatus.TIMEOUT.value, "per-case timeout exceeded", 0))
            break
        try:
            cur = db.execute(text)
            if cur.description is not None:
                rows = len(cur.fetchall())
            else:
                rows = cur.rowcount if cur.rowcount > 0 else 0
            emit((StatementStatus.OK.value, "", rows))
        except sqlite3.Error as exc:
            message = str(exc)
            if "interrupted" in message.lower():
                emit((StatementStatus.TIMEOUT.value, "statement interrupted by timeout", 0))
                break
            emit((classify_error_message(message).value, message, 0))
    db.close()


def _sqlite_worker(pipe, texts: list[str], timeout_secs: float) -> None:
    try:
        _run_sqlite_statements(texts, timeout_secs, pipe.send)
        pipe.send(("done",))
    finally:
        pipe.close()


def _assemble_report(
    raw_outcomes: list[tuple],
    finished: bool,
    exitcode: int | None,
    statement_count: int,
    wall_time: float,
) -> ExecutionReport:
    """Turn streamed outcomes plus the child's fate into a report.

    When the child died mid-case the statement being executed gets a Crash
    outcome; when the parent watchdog fired it gets a Timeout.
    """
    outcomes = [
        StatementOutcome(StatementStatus(status), detail, rows)
        for status, detail, rows in raw_outcomes
    ]
    if not finished and len(outcomes) < statement_count:
        if exitcode is not None and exitcode != 0:
            detail = f"worker terminated (exit code {exitcode})"
            outcomes.append(StatementOutcome(StatementStatus.CRASH, detail))
        else:
            outcomes.append(
                StatementOutcome(StatementStatus.TIMEOUT, "worker unresponsive; killed")
            )
    return ExecutionReport(tuple(outcomes), wall_time)


class SqliteDriver:
    """In-process SQLite reference driver.

    With ``supervised=True`` (the default) each case runs in a forked child
    so an engine abort surfaces as a Crash outcome instead of taking the
    harness down.
    """

    def __init__(self, supervised: bool = True):
        self.supervised = supervised
        self._ctx = multiprocessing.get_context("fork")

    def execute_case(self, case: TestCase, timeout_secs: float = 10.0) -> ExecutionReport:
        texts = [s.text for s in case.statements]
        start = time.monotonic()
        if not self.supervised:
            raw: list[tuple] = []
            _run_sqlite_statements(texts, timeout_secs, raw.append)
            return _assemble_report(raw, True, 0, len(texts), time.monotonic() - start)

        parent_end, child_end = self._ctx.Pipe(duplex=False)
        proc = self._ctx.Process(
            target=_sqlite_worker, args=(child_end, texts, timeout_secs)
        )
        proc.start()
        child_end.close()

        raw = []
        finished = False
        grace = max(timeout_secs, 0.0) + 5.0
        deadline = time.monotonic() + grace
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            try:
                if not parent_end.poll(remaining):
                    break
                message = parent_end.recv()
            except (EOFError, OSError):
                break
            if message[0] == "done":
                finished = True
                break
            raw.append(message)
        proc.join(timeout=1.0)
        if proc.is_alive():
            proc.terminate()
            proc.join(timeout=1.0)
        if proc.is_alive():
            proc.kill()
            proc.join(timeout=1.0)
        parent_end.close()
        return _assemble_report(
            raw, finished, proc.exitcode, len(texts), time.monotonic() - start
        )


class ExternalProcessDriver:
    """Wrap any DBMS CLI that takes SQL on standard input.

    ``{db}`` in the argv expands to a per-case temporary path so cases stay
    isolated.  Exit codes listed in ``crash_exit_codes`` and negative exit
    codes (signals) map to Crash.  Per-statement attribution is best-effort:
    stderr lines carrying ``line N`` markers are mapped back to statements
    by their input line offsets.
    """

    def __init__(
        self,
        command: list[str],
        crash_exit_codes: tuple[int, ...] = (),
        sql_via: str = "stdin",
    ):
        if sql_via != "stdin":
            raise DriverUnavailable(f"unsupported sql_via {sql_via!r}")
        if not command:
            raise DriverUnavailable("external driver needs a command")
        self.command = list(command)
        self.crash_exit_codes = tuple(crash_exit_codes)

    def execute_case(self, case: TestCase, timeout_secs: float = 10.0) -> ExecutionReport:
        texts = [s.text for s in case.statements]
        line_starts: list[int] = []
        line = 1
        for text in texts:
            line_starts.append(line)
            line += text.count("\n") + 1
        stdin_text = "\n".join(texts) + "\n"

        start = time.monotonic()
        with tempfile.TemporaryDirectory(prefix="sqlforge-ext-") as tmp:
            argv = [arg.replace("{db}", str(Path(tmp) / "case.db")) for arg in self.command]
            try:
                proc = subprocess.run(
                    argv,
                    input=stdin_text,
                    capture_output=True,
                    text=True,
                    timeout=timeout_secs if timeout_secs > 0 else 0.001,
                )
            except FileNotFoundError as exc:
                raise DriverUnavailable(f"cannot start {argv[0]!r}: {exc}") from exc
            except PermissionError as exc:
                raise DriverUnavailable(f"cannot start {argv[0]!r}: {exc}") from exc
            except subprocess.TimeoutExpired:
                outcomes = [StatementOutcome(StatementStatus.OK)] * (len(texts) - 1)
                outcomes.append(
                    StatementOutcome(StatementStatus.TIMEOUT, "external process timed out")
                )
                return ExecutionReport(tuple(outcomes), time.monotonic() - start)

        wall = time.monotonic() - start
        crashed = proc.returncode < 0 or proc.returncode in self.crash_exit_codes
        if crashed:
            outcomes = [StatementOutcome(StatementStatus.OK)] * (len(texts) - 1)
            detail = f"process exited with {proc.returncode}: {proc.stderr.strip()[:200]}"
            outcomes.append(StatementOutcome(StatementStatus.CRASH, detail))
            return ExecutionReport(tuple(outcomes), wall)

        per_stmt: dict[int, StatementOutcome] = {}
        unattributed: list[str] = []
        for err_line in proc.stderr.splitlines():
            if "error" not in err_line.lower():
                continue
            idx = _statement_for_error(err_line, line_starts)
            status = classify_error_message(err_line)
            if idx is None:
                unattributed.append(err_line)
            else:
                per_stmt.setdefault(idx, StatementOutcome(status, err_line.strip()))
        if proc.returncode != 0 and not per_stmt and not unattributed:
            unattributed.append(f"exit code {proc.returncode}")
        for err_line in unattributed:
            per_stmt.setdefault(
                len(texts) - 1,
                StatementOutcome(classify_error_message(err_line), err_line.strip()),
            )
        outcomes = [
            per_stmt.get(i, StatementOutcome(StatementStatus.OK)) for i in range(len(texts))
        ]
        return ExecutionReport(tuple(outcomes), wall)


_LINE_MARKER_RE = re.compile(r"\bline\s+(\d+)\b", re.IGNORECASE)


def _statement_for_error(err_line: str, line_starts: list[int]) -> int | None:
    match = _LINE_MARKER_RE.search(err_line)
    if not match:
        return None
    line_no = int(match.group(1))
    idx = None
    for i, start in enumerate(line_starts):
        if start <= line_no:
            idx = i
        else:
            break
    return idx


def execute_case(driver, case: TestCase, timeout_secs: float = 10.0) -> ExecutionReport:
    return driver.execute_case(case, timeout_secs)
