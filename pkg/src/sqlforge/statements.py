"""Lightweight SQL statement model.

No grammar, no AST: statements are split, classified by their leading
keyword, and tokenized losslessly so mutation rules can locate and splice
target sites without ever touching the inside of string literals.
Validity of the result is the target engine's problem, not ours.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from enum import Enum

from .errors import EmptyStatement, UnterminatedLiteral


class StatementKind(Enum):
    DDL = "ddl"
    DML = "dml"
    DQL = "dql"
    OTHER = "other"


class TokenKind(Enum):
    KEYWORD = "keyword"
    IDENTIFIER = "identifier"
    NUMBER = "number"
    STRING = "string"
    OPERATOR = "operator"
    PUNCT = "punct"
    WHITESPACE = "whitespace"
    COMMENT = "comment"


# Words recognized as keywords during tokenization.  Everything wordy that
# is not in here (function names, table names, ...) is an identifier.
KEYWORDS = frozenset(
    """
    ABORT ADD AFTER ALL ALTER ALWAYS ANALYZE AND AS ASC BEFORE BEGIN BETWEEN
    BY CASCADE CASE CAST CHECK COLLATE COLUMN COMMIT CONSTRAINT CREATE CROSS
    CURRENT DEFAULT DEFERRED DELETE DESC DISTINCT DROP EACH ELSE END ESCAPE
    EXCEPT EXISTS EXPLAIN FAIL FILTER FIRST FOLLOWING FOR FOREIGN FROM FULL
    GENERATED GLOB GROUP HAVING IF IGNORE IMMEDIATE IN INDEX INDEXED INNER
    INSERT INSTEAD INTERSECT INTO IS ISNULL JOIN KEY LAST LEFT LIKE LIMIT
    MATERIALIZED NATURAL NO NOT NOTNULL NULL NULLS OF OFFSET ON OR ORDER
    OUTER OVER PARTITION PLAN PRAGMA PRECEDING PRIMARY QUERY RAISE RANGE
    RECURSIVE REFERENCES REGEXP REINDEX RENAME REPLACE RESTRICT RETURNING
    RIGHT ROLLBACK ROW ROWID ROWS SELECT SET STORED TABLE TEMP TEMPORARY
    THEN TO TRANSACTION TRIGGER UNBOUNDED UNION UNIQUE UPDATE USING VACUUM
    VALUES VIEW VIRTUAL WHEN WHERE WINDOW WITH WITHOUT
    """.split()
)

# Keywords that may begin a retained statement.
STATEMENT_KEYWORDS = frozenset(
    """
    CREATE ALTER DROP INSERT UPDATE DELETE SELECT WITH PRAGMA EXPLAIN BEGIN
    COMMIT ROLLBACK VACUUM ANALYZE REINDEX
    """.split()
)

_KIND_BY_HEAD = {
    "CREATE": StatementKind.DDL,
    "ALTER": StatementKind.DDL,
    "DROP": StatementKind.DDL,
    "INSERT": StatementKind.DML,
    "UPDATE": StatementKind.DML,
    "DELETE": StatementKind.DML,
    "SELECT": StatementKind.DQL,
    "WITH": StatementKind.DQL,
}

_MULTI_OPERATORS = ("->>", "<=", ">=", "<>", "!=", "==", "||", "<<", ">>", "->")
_SINGLE_OPERATORS = frozenset("=<>+-*/%&|~!")
_COMPARISON_OPS = frozenset({"=", "==", "<>", "!=", "<", ">", "<=", ">="})
_AGGREGATE_FUNCS = frozenset({"COUNT", "SUM", "AVG", "MIN", "MAX", "TOTAL", "GROUP_CONCAT"})


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    start: int

    @property
    def end(self) -> int:
        return self.start + len(self.text)

    def upper(self) -> str:
        return self.text.upper()


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch in "_$"


def tokenize(text: str) -> tuple[Token, ...]:
    """Split SQL text into lossless spans: ``"".join(spans) == text``."""
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        start = i
        if ch.isspace():
            while i < n and text[i].isspace():
                i += 1
            tokens.append(Token(TokenKind.WHITESPACE, text[start:i], start))
        elif ch == "-" and text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            tokens.append(Token(TokenKind.COMMENT, text[start:i], start))
        elif ch == "/" and text.startswith("/*", i):
            close = text.find("*/", i + 2)
            i = n if close < 0 else close + 2
            tokens.append(Token(TokenKind.COMMENT, text[start:i], start))
        elif ch == "'":
            i = _scan_quoted(text, i, "'")
            tokens.append(Token(TokenKind.STRING, text[start:i], start))
        elif ch in ('"', "`"):
            i = _scan_quoted(text, i, ch)
            tokens.append(Token(TokenKind.IDENTIFIER, text[start:i], start))
        elif ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            i = _scan_number(text, i)
            tokens.append(Token(TokenKind.NUMBER, text[start:i], start))
        elif ch.isalpha() or ch == "_":
            while i < n and _is_word_char(text[i]):
                i += 1
            word = text[start:i]
            kind = TokenKind.KEYWORD if word.upper() in KEYWORDS else TokenKind.IDENTIFIER
            tokens.append(Token(kind, word, start))
        else:
            for op in _MULTI_OPERATORS:
                if text.startswith(op, i):
                    i += len(op)
                    tokens.append(Token(TokenKind.OPERATOR, op, start))
                    break
            else:
                i += 1
                kind = TokenKind.OPERATOR if ch in _SINGLE_OPERATORS else TokenKind.PUNCT
                tokens.append(Token(kind, ch, start))
    return tuple(tokens)


def _scan_quoted(text: str, i: int, quote: str) -> int:
    """Return the index one past the closing quote, honoring doubling escapes."""
    j = i + 1
    n = len(text)
    while j < n:
        if text[j] == quote:
            if j + 1 < n and text[j + 1] == quote:
                j += 2
                continue
            return j + 1
        j += 1
    raise UnterminatedLiteral(f"unterminated {quote}...{quote} literal starting at offset {i}")


def _scan_number(text: str, i: int) -> int:
    n = len(text)
    if text.startswith(("0x", "0X"), i):
        j = i + 2
        while j < n and (text[j].isdigit() or text[j].lower() in "abcdef"):
            j += 1
        return j
    j = i
    while j < n and text[j].isdigit():
        j += 1
    if j < n and text[j] == ".":
        j += 1
        while j < n and text[j].isdigit():
            j += 1
    if j < n and text[j] in "eE":
        k = j + 1
        if k < n and text[k] in "+-":
            k += 1
        if k < n and text[k].isdigit():
            j = k
            while j < n and text[j].isdigit():
                j += 1
    return j


@dataclass(frozen=True)
class ClassifiedStatement:
    """One SQL statement with its kind and lossless token spans."""

    text: str
    kind: StatementKind
    tokens: tuple[Token, ...]

    def head_keyword(self) -> str | None:
        for tok in self.tokens:
            if tok.kind is TokenKind.KEYWORD:
                return tok.upper()
            if tok.kind not in (TokenKind.WHITESPACE, TokenKind.COMMENT):
                return None
        return None

    def keywords(self) -> set[str]:
        return {t.upper() for t in self.tokens if t.kind is TokenKind.KEYWORD}


def classify(statement_text: str) -> ClassifiedStatement:
    """Classify a statement by its leading keyword (total over extractor output)."""
    if not statement_text or not statement_text.strip():
        raise EmptyStatement("cannot classify an empty statement")
    tokens = tokenize(statement_text)
    head = None
    for tok in tokens:
        if tok.kind in (TokenKind.WHITESPACE, TokenKind.COMMENT):
            continue
        if tok.kind is TokenKind.KEYWORD:
            head = tok.upper()
        break
    kind = _KIND_BY_HEAD.get(head or "", StatementKind.OTHER)
    return ClassifiedStatement(statement_text, kind, tokens)


TokenRange = tuple[int, int]  # [start, end) indexes into ClassifiedStatement.tokens


@dataclass(frozen=True)
class StatementTargets:
    """Token-level mutable sites found in one statement.

    All indexes refer to the statement's token tuple, so nothing here can
    ever point inside a string literal.
    """

    joins: tuple[TokenRange, ...]
    comparisons: tuple[int, ...]
    numbers: tuple[int, ...]
    strings: tuple[int, ...]
    select_list: TokenRange | None
    where_kw: int | None
    group_by_kw: int | None
    order_by_kw: int | None
    limit_kw: int | None
    value_tuples: tuple[TokenRange, ...]
    from_tables: tuple[int, ...]
    set_ops: tuple[int, ...]
    has_distinct: bool
    has_aggregate: bool


_JOIN_MODIFIERS = frozenset({"INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL"})
_CLAUSE_BREAKERS = frozenset(
    {"FROM", "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT", "UNION", "EXCEPT", "INTERSECT"}
)


def _significant(tokens: tuple[Token, ...]) -> list[int]:
    return [
        i
        for i, t in enumerate(tokens)
        if t.kind not in (TokenKind.WHITESPACE, TokenKind.COMMENT)
    ]


def next_significant(tokens: tuple[Token, ...], i: int) -> int | None:
    """Index of the next non-whitespace, non-comment token after ``i``."""
    for j in range(i + 1, len(tokens)):
        if tokens[j].kind not in (TokenKind.WHITESPACE, TokenKind.COMMENT):
            return j
    return None


@functools.lru_cache(maxsize=8192)
def locate_targets(stmt: ClassifiedStatement) -> StatementTargets:
    """Find every mutable site in the statement by token-span matching."""
    tokens = stmt.tokens
    sig = _significant(tokens)

    joins: list[TokenRange] = []
    comparisons: list[int] = []
    numbers: list[int] = []
    strings: list[int] = []
    value_tuples: list[TokenRange] = []
    from_tables: list[int] = []
    set_ops: list[int] = []
    select_list: TokenRange | None = None
    where_kw = group_by_kw = order_by_kw = limit_kw = None
    has_distinct = False
    has_aggregate = False

    depth = 0
    select_start: int | None = None
    for pos, i in enumerate(sig):
        tok = tokens[i]
        up = tok.upper()
        if tok.kind is TokenKind.PUNCT and tok.text == "(":
            depth += 1
            continue
        if tok.kind is TokenKind.PUNCT and tok.text == ")":
            depth -= 1
            continue
        if tok.kind is TokenKind.NUMBER:
            numbers.append(i)
        elif tok.kind is TokenKind.STRING:
            strings.append(i)
        elif tok.kind is TokenKind.OPERATOR and tok.text in _COMPARISON_OPS:
            comparisons.append(i)
        elif tok.kind is TokenKind.KEYWORD:
            if up == "JOIN":
                start = i
                back = pos - 1
                while back >= 0 and tokens[sig[back]].upper() in _JOIN_MODIFIERS:
                    start = sig[back]
                    back -= 1
                joins.append((start, i + 1))
            elif depth == 0:
                if up == "SELECT" and select_start is None:
                    nxt = next_significant(tokens, i)
                    if nxt is not None and tokens[nxt].upper() in ("DISTINCT", "ALL"):
                        if tokens[nxt].upper() == "DISTINCT":
                            has_distinct = True
                        nxt = next_significant(tokens, nxt)
                    select_start = nxt
                elif up in _CLAUSE_BREAKERS and select_start is not None and select_list is None:
                    select_list = (select_start, i)
                if up == "WHERE" and where_kw is None:
                    where_kw = i
                elif up == "GROUP" and group_by_kw is None:
                    group_by_kw = i
                elif up == "ORDER" and order_by_kw is None:
                    order_by_kw = i
                elif up == "LIMIT" and limit_kw is None:
                    limit_kw = i
                elif up in ("UNION", "EXCEPT", "INTERSECT"):
                    set_ops.append(i)
                elif up == "VALUES":
                    _collect_value_tuples(tokens, i, value_tuples)
                elif up in ("FROM", "INTO") or (up == "UPDATE" and pos == 0):
                    nxt = next_significant(tokens, i)
                    if nxt is not None and tokens[nxt].kind is TokenKind.IDENTIFIER:
                        from_tables.append(nxt)
        if tok.kind is TokenKind.IDENTIFIER and select_start is not None and select_list is None:
            if tok.upper() in _AGGREGATE_FUNCS:
                nxt = next_significant(tokens, i)
                if nxt is not None and tokens[nxt].text == "(":
                    has_aggregate = True

    if select_start is not None and select_list is None:
        # projection runs to the end of the statement (before the ';')
        end = len(tokens)
        while end > 0 and tokens[end - 1].kind in (
            TokenKind.WHITESPACE,
            TokenKind.COMMENT,
        ):
            end -= 1
        if end > 0 and tokens[end - 1].text == ";":
            end -= 1
        select_list = (select_start, end)

    return StatementTargets(
        joins=tuple(joins),
        comparisons=tuple(comparisons),
        numbers=tuple(numbers),
        strings=tuple(strings),
        select_list=select_list,
        where_kw=where_kw,
        group_by_kw=group_by_kw,
        order_by_kw=order_by_kw,
        limit_kw=limit_kw,
        value_tuples=tuple(value_tuples),
        from_tables=tuple(from_tables),
        set_ops=tuple(set_ops),
        has_distinct=has_distinct,
        has_aggregate=has_aggregate,
    )


def _collect_value_tuples(
    tokens: tuple[Token, ...], values_idx: int, out: list[TokenRange]
) -> None:
    i = values_idx + 1
    depth = 0
    start: int | None = None
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind is TokenKind.PUNCT and tok.text == "(":
            if depth == 0:
                start = i
            depth += 1
        elif tok.kind is TokenKind.PUNCT and tok.text == ")":
            depth -= 1
            if depth == 0 and start is not None:
                out.append((start, i + 1))
                start = None
        elif depth == 0 and tok.kind not in (
            TokenKind.WHITESPACE,
            TokenKind.COMMENT,
        ):
            if tok.text != ",":
                break
        i += 1


def splice(stmt: ClassifiedStatement, edits: list[tuple[int, int, str]]) -> str:
    """Rebuild statement text replacing char ranges ``[start, end)`` with new text."""
    pieces: list[str] = []
    cursor = 0
    for start, end, new in sorted(edits):
        pieces.append(stmt.text[cursor:start])
        pieces.append(new)
        cursor = end
    pieces.append(stmt.text[cursor:])
    return "".join(pieces)


def token_span(stmt: ClassifiedStatement, rng_: TokenRange) -> tuple[int, int]:
    """Char offsets covered by a token index range."""
    start_tok = stmt.tokens[rng_[0]]
    end_tok = stmt.tokens[rng_[1] - 1]
    return start_tok.start, end_tok.end


def split_sql(text: str) -> list[str]:
    """Split text on semicolons outside string literals and comments.

    Trigger bodies (``CREATE TRIGGER ... BEGIN stmt; ... END;``) keep their
    internal semicolons: inside a trigger body a ``;`` only terminates the
    statement when the preceding word is ``END``.
    """
    parts: list[str] = []
    buf: list[str] = []
    i = 0
    n = len(text)
    saw_create = False
    trigger_pending = False
    in_trigger_body = False
    last_word = ""

    def flush() -> None:
        nonlocal saw_create, trigger_pending, in_trigger_body, last_word
        segment = "".join(buf)
        buf.clear()
        parts.append(segment)
        saw_create = trigger_pending = in_trigger_body = False
        last_word = ""

    while i < n:
        ch = text[i]
        if ch == "'":
            j = _skip_quoted_raw(text, i, "'")
            buf.append(text[i:j])
            i = j
        elif ch in ('"', "`"):
            j = _skip_quoted_raw(text, i, ch)
            buf.append(text[i:j])
            i = j
        elif ch == "-" and text.startswith("--", i):
            j = text.find("\n", i)
            j = n if j < 0 else j
            buf.append(text[i:j])
            i = j
        elif ch == "/" and text.startswith("/*", i):
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            buf.append(text[i:j])
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and _is_word_char(text[j]):
                j += 1
            word = text[i:j].upper()
            if word == "CREATE":
                saw_create = True
            elif word == "TRIGGER" and saw_create:
                trigger_pending = True
            elif word == "BEGIN" and trigger_pending:
                in_trigger_body = True
            last_word = word
            buf.append(text[i:j])
            i = j
        elif ch == ";":
            buf.append(ch)
            if in_trigger_body and last_word != "END":
                i += 1
                continue
            flush()
            i += 1
        else:
            buf.append(ch)
            i += 1
    if buf:
        parts.append("".join(buf))
    return parts


def _skip_quoted_raw(text: str, i: int, quote: str) -> int:
    """Like ``_scan_quoted`` but lenient: unterminated literals run to EOF."""
    j = i + 1
    n = len(text)
    while j < n:
        if text[j] == quote:
            if j + 1 < n and text[j + 1] == quote:
                j += 2
                continue
            return j + 1
        j += 1
    return n
