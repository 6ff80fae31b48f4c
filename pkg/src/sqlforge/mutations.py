"""Dialect-scoped mutation rule catalog.

Rules are code registered under stable ids, grouped as DDL (schema), DML
(data), and DQL (query) transforms, each with an applicability predicate
and a deterministic seeded transform.  Rules aim for valid output but are
not guaranteed valid: the execution oracle is the arbiter.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from .cases import TestCase
from .errors import NotApplicable, UnknownDialect, ValidationError
from .statements import (
    ClassifiedStatement,
    StatementKind,
    Token,
    TokenKind,
    classify,
    locate_targets,
    next_significant,
    splice,
)

Category = StatementKind  # rules are categorized DDL / DML / DQL

StmtPatch = "ClassifiedStatement | str"


@dataclass(frozen=True)
class MutationRule:
    id: str
    category: StatementKind
    dialects: frozenset[str]
    description: str
    stmt_delta: tuple[int, int]  # (min, max) statement-count change
    is_applicable: Callable[[TestCase], bool]
    transform: Callable[[TestCase, random.Random], tuple[list, list[int]]]
    is_noop: bool = False


@dataclass(frozen=True)
class MutationOutcome:
    mutated: TestCase
    applied_rule: str
    changed_statements: tuple[int, ...]


class RuleRegistry:
    """Immutable-after-startup index of rules by id and (dialect, category)."""

    def __init__(self):
        self._rules: dict[str, MutationRule] = {}

    def register(self, rule: MutationRule) -> None:
        if rule.id in self._rules:
            raise ValidationError(f"duplicate rule id {rule.id!r}")
        self._rules[rule.id] = rule

    def get(self, rule_id: str) -> MutationRule:
        try:
            return self._rules[rule_id]
        except KeyError:
            raise ValidationError(f"unknown rule id {rule_id!r}") from None

    def __contains__(self, rule_id: str) -> bool:
        return rule_id in self._rules

    def dialects(self) -> set[str]:
        out: set[str] = set()
        for rule in self._rules.values():
            out.update(rule.dialects)
        return out

    def rules_for(self, dialect: str, category: StatementKind) -> list[MutationRule]:
        return [
            r
            for r in self._rules.values()
            if dialect in r.dialects and r.category is category
        ]

    def menu(self, dialect: str, category: StatementKind) -> list[str]:
        """Stable lexicographic action menu, category NoOp included."""
        if dialect not in self.dialects():
            raise UnknownDialect(f"no rules registered for dialect {dialect!r}")
        return sorted(r.id for r in self.rules_for(dialect, category))

    def counts(self, dialect: str) -> dict[StatementKind, int]:
        out: dict[StatementKind, int] = {}
        for cat in (StatementKind.DDL, StatementKind.DML, StatementKind.DQL):
            out[cat] = sum(1 for r in self.rules_for(dialect, cat) if not r.is_noop)
        return out

    def noop_for(self, category: StatementKind) -> MutationRule:
        return self.get(f"{category.value}.noop")

    def restrict(self, enabled_ids: list[str]) -> RuleRegistry:
        """Registry view limited to the manifest's enabled ids plus NoOps."""
        sub = RuleRegistry()
        for rule_id in enabled_ids:
            sub.register(self.get(rule_id))
        for rule in self._rules.values():
            if rule.is_noop and rule.id not in sub:
                sub.register(rule)
        return sub


def rule_menu(registry: RuleRegistry, dialect: str, category: StatementKind) -> list[str]:
    return registry.menu(dialect, category)


def applicable(rule: MutationRule, case: TestCase) -> bool:
    return rule.is_applicable(case)


def apply(rule: MutationRule, case: TestCase, rng: random.Random) -> MutationOutcome:
    """Apply a rule deterministically; raises ``NotApplicable`` otherwise."""
    if not rule.is_applicable(case):
        raise NotApplicable(f"rule {rule.id!r} is not applicable to case {case.id!r}")
    patches, changed = rule.transform(case, rng)
    statements: list[ClassifiedStatement] = []
    for patch in patches:
        if isinstance(patch, ClassifiedStatement):
            statements.append(patch)
        else:
            statements.append(classify(patch))
    new_id = f"mut-{rng.getrandbits(32):08x}"
    mutated = case.with_statements(tuple(statements), new_id, rule.id)
    return MutationOutcome(mutated, rule.id, tuple(sorted(changed)))


DEFAULT_REGISTRY = RuleRegistry()


def _register(
    rule_id: str,
    category: StatementKind,
    description: str,
    applicable_fn: Callable[[TestCase], bool],
    delta: tuple[int, int] = (0, 0),
    dialects: tuple[str, ...] = ("sqlite",),
    is_noop: bool = False,
):
    def deco(fn):
        DEFAULT_REGISTRY.register(
            MutationRule(
                id=rule_id,
                category=category,
                dialects=frozenset(dialects),
                description=description,
                stmt_delta=delta,
                is_applicable=applicable_fn,
                transform=fn,
                is_noop=is_noop,
            )
        )
        return fn

    return deco


# ---------------------------------------------------------------------------
# shared helpers

def _always(_case: TestCase) -> bool:
    return True


def _stmts_of_kind(case: TestCase, kind: StatementKind) -> list[tuple[int, ClassifiedStatement]]:
    return [(i, s) for i, s in enumerate(case.statements) if s.kind is kind]


def _body(stmt: ClassifiedStatement) -> str:
    """Statement text without its terminating semicolon."""
    text = stmt.text.rstrip()
    return text[:-1].rstrip() if text.endswith(";") else text


def _body_end(stmt: ClassifiedStatement) -> int:
    """Char offset just before the terminating semicolon."""
    text = stmt.text
    i = len(text)
    while i > 0 and text[i - 1].isspace():
        i -= 1
    if i > 0 and text[i - 1] == ";":
        i -= 1
    while i > 0 and text[i - 1].isspace():
        i -= 1
    return i


def _insert_at(stmt: ClassifiedStatement, pos: int, fragment: str) -> str:
    """Insert a space-delimited fragment at a char position."""
    if pos >= _body_end(stmt):
        return stmt.text[:pos] + " " + fragment + stmt.text[pos:]
    return stmt.text[:pos] + fragment + " " + stmt.text[pos:]


def _clause_pos(stmt: ClassifiedStatement, *stop_tokens: int | None) -> int:
    stops = [stmt.tokens[i].start for i in stop_tokens if i is not None]
    return min(stops) if stops else _body_end(stmt)


def _add_predicate(stmt: ClassifiedStatement, predicate: str) -> str:
    """Extend or introduce the WHERE clause with one predicate."""
    targets = locate_targets(stmt)
    pos = _clause_pos(stmt, targets.group_by_kw, targets.order_by_kw, targets.limit_kw)
    keyword = "AND" if targets.where_kw is not None else "WHERE"
    return _insert_at(stmt, pos, f"{keyword} {predicate}")


def _projection_end(stmt: ClassifiedStatement) -> int | None:
    targets = locate_targets(stmt)
    if targets.select_list is None:
        return None
    start, end = targets.select_list
    for i in range(end - 1, start - 1, -1):
        tok = stmt.tokens[i]
        if tok.kind not in (TokenKind.WHITESPACE, TokenKind.COMMENT):
            return tok.end
    return None


def _append_projection(stmt: ClassifiedStatement, expr_sql: str) -> str:
    pos = _projection_end(stmt)
    assert pos is not None
    return stmt.text[:pos] + f", {expr_sql}" + stmt.text[pos:]


def _projection_identifier(stmt: ClassifiedStatement) -> str | None:
    """First plain (possibly dotted) column reference in the projection."""
    targets = locate_targets(stmt)
    if targets.select_list is None:
        return None
    start, end = targets.select_list
    i = start
    prev_was_as = False
    while i is not None and i < end:
        tok = stmt.tokens[i]
        if tok.kind in (TokenKind.WHITESPACE, TokenKind.COMMENT):
            i += 1
            continue
        if tok.kind is TokenKind.KEYWORD and tok.upper() == "AS":
            prev_was_as = True
            i += 1
            continue
        if tok.kind is TokenKind.IDENTIFIER and not prev_was_as:
            chain = [tok.text]
            j: int | None = i
            while True:
                j = next_significant(stmt.tokens, j)
                if j is None or j >= end or stmt.tokens[j].text != ".":
                    break
                k = next_significant(stmt.tokens, j)
                if k is None or k >= end or stmt.tokens[k].kind is not TokenKind.IDENTIFIER:
                    chain = None  # dangling "tbl.*" style reference
                    break
                chain.append(stmt.tokens[k].text)
                j = k
            if chain is not None and j is not None and j < end and stmt.tokens[j].text == "(":
                chain = None  # function call, not a column
            if chain:
                return ".".join(chain)
        prev_was_as = False
        i += 1
    return None


def _schema_tables(case: TestCase) -> list[tuple[str, list[str]]]:
    """(table, columns) pairs parsed from CREATE TABLE statements, following renames."""
    tables: dict[str, list[str]] = {}
    order: list[str] = []
    for stmt in case.statements:
        head = stmt.head_keyword()
        if head == "CREATE":
            parsed = _parse_create_table(stmt)
            if parsed is not None:
                name, cols = parsed
                if name not in tables:
                    order.append(name)
                tables[name] = cols
        elif head == "ALTER":
            rename = _parse_rename(stmt)
            if rename is not None and rename[0] in tables:
                old, new = rename
                tables[new] = tables.pop(old)
                order[order.index(old)] = new
    return [(name, tables[name]) for name in order]


def _parse_create_table(stmt: ClassifiedStatement) -> tuple[str, list[str]] | None:
    tokens = stmt.tokens
    sig = [i for i, t in enumerate(tokens) if t.kind not in (TokenKind.WHITESPACE, TokenKind.COMMENT)]
    words = [tokens[i].upper() for i in sig]
    if "TABLE" not in words[:4]:
        return None
    ti = words.index("TABLE")
    j = ti + 1
    if words[j : j + 3] == ["IF", "NOT", "EXISTS"]:
        j += 3
    if j >= len(sig) or tokens[sig[j]].kind is not TokenKind.IDENTIFIER:
        return None
    name = tokens[sig[j]].text
    if j + 1 >= len(sig) or tokens[sig[j + 1]].text != "(":
        return None  # CREATE TABLE ... AS SELECT has no column list
    cols: list[str] = []
    depth = 0
    expecting_column = False
    for k in sig[j + 1 :]:
        tok = tokens[k]
        if tok.text == "(":
            depth += 1
            if depth == 1:
                expecting_column = True
            continue
        if tok.text == ")":
            depth -= 1
            if depth == 0:
                break
            continue
        if depth == 1 and tok.text == ",":
            expecting_column = True
            continue
        if depth == 1 and expecting_column:
            if tok.kind is TokenKind.IDENTIFIER:
                cols.append(tok.text)
            expecting_column = False
    return (name, cols) if cols else None


def _parse_rename(stmt: ClassifiedStatement) -> tuple[str, str] | None:
    sig = [
        t
        for t in stmt.tokens
        if t.kind not in (TokenKind.WHITESPACE, TokenKind.COMMENT)
    ]
    words = [t.upper() for t in sig]
    if words[:2] != ["ALTER", "TABLE"]:
        return None
    try:
        to_i = words.index("TO")
    except ValueError:
        return None
    if "RENAME" not in words or to_i + 1 >= len(sig):
        return None
    return sig[2].text, sig[to_i + 1].text


def _replace_token(stmt: ClassifiedStatement, token: Token, new_text: str) -> str:
    return splice(stmt, [(token.start, token.end, new_text)])


def _value_span(stmt: ClassifiedStatement, token: Token) -> tuple[int, int]:
    """Char span of a literal including a preceding unary sign.

    Replacing the ``99`` of ``-99`` with a negative literal would otherwise
    produce ``--...``, which SQL reads as a comment.
    """
    sig = [
        t
        for t in stmt.tokens
        if t.kind not in (TokenKind.WHITESPACE, TokenKind.COMMENT) and t.start < token.start
    ]
    if sig and sig[-1].kind is TokenKind.OPERATOR and sig[-1].text in ("-", "+"):
        before = sig[-2] if len(sig) >= 2 else None
        is_unary = before is None or not (
            before.kind in (TokenKind.IDENTIFIER, TokenKind.NUMBER, TokenKind.STRING)
            or before.text == ")"
        )
        if is_unary:
            return sig[-1].start, token.end
    return token.start, token.end


def _replace_value(stmt: ClassifiedStatement, token: Token, new_text: str) -> str:
    start, end = _value_span(stmt, token)
    return splice(stmt, [(start, end, new_text)])


def _pick(rng: random.Random, items):
    return items[rng.randrange(len(items))]


def _value_token_sites(
    case: TestCase, kinds: tuple[TokenKind, ...]
) -> list[tuple[int, Token]]:
    """(statement index, token) pairs inside INSERT value tuples."""
    sites: list[tuple[int, Token]] = []
    for i, stmt in _stmts_of_kind(case, StatementKind.DML):
        if stmt.head_keyword() != "INSERT":
            continue
        targets = locate_targets(stmt)
        for start, end in targets.value_tuples:
            for k in range(start, end):
                tok = stmt.tokens[k]
                if tok.kind in kinds:
                    sites.append((i, tok))
    return sites


def _dml_token_sites(case: TestCase, kinds: tuple[TokenKind, ...]) -> list[tuple[int, Token]]:
    sites: list[tuple[int, Token]] = []
    for i, stmt in _stmts_of_kind(case, StatementKind.DML):
        for tok in stmt.tokens:
            if tok.kind in kinds:
                sites.append((i, tok))
    return sites


def _patchset(case: TestCase, replacements: dict[int, str], inserts: dict[int, list[str]] | None = None):
    """Build the transform return value: patches list plus changed indexes.

    ``replacements`` maps statement index -> new text; ``inserts`` maps
    insertion position -> new statement texts placed before that index
    (``len(statements)`` appends).
    """
    inserts = inserts or {}
    patches: list = []
    changed: list[int] = []
    for i, stmt in enumerate(case.statements):
        for new_text in inserts.get(i, []):
            changed.append(len(patches))
            patches.append(new_text)
        if i in replacements:
            changed.append(len(patches))
            patches.append(replacements[i])
        else:
            patches.append(stmt)
    for new_text in inserts.get(len(case.statements), []):
        changed.append(len(patches))
        patches.append(new_text)
    return patches, changed


# ---------------------------------------------------------------------------
# NoOp rules (one per category)

def _make_noop(category: StatementKind) -> None:
    @_register(
        f"{category.value}.noop",
        category,
        "Identity transform keeping the action space layer-uniform",
        _always,
        is_noop=True,
    )
    def _noop(case: TestCase, _rng: random.Random):
        return list(case.statements), []


for _cat in (StatementKind.DDL, StatementKind.DML, StatementKind.DQL):
    _make_noop(_cat)


# ---------------------------------------------------------------------------
# DDL rules

def _has_tables(case: TestCase) -> bool:
    return bool(_schema_tables(case))


_EXOTIC_TYPES = (
    "BLOB",
    "NUMERIC",
    "DOUBLE PRECISION",
    "VARCHAR(7)",
    "DECIMAL(10,5)",
    "BOOLEAN",
    "CLOB",
)


@_register(
    "ddl.add_column",
    StatementKind.DDL,
    "Add a column with an exotic type affinity",
    _has_tables,
    delta=(1, 1),
)
def _ddl_add_column(case: TestCase, rng: random.Random):
    table, _cols = _pick(rng, _schema_tables(case))
    col_type = _pick(rng, _EXOTIC_TYPES)
    stmt = f"ALTER TABLE {table} ADD COLUMN mx_c{rng.randrange(1000)} {col_type};"
    return _patchset(case, {}, {len(case.statements): [stmt]})


@_register(
    "ddl.add_not_null_default",
    StatementKind.DDL,
    "Add a NOT NULL column with a DEFAULT",
    _has_tables,
    delta=(1, 1),
)
def _ddl_add_not_null(case: TestCase, rng: random.Random):
    table, _cols = _pick(rng, _schema_tables(case))
    stmt = (
        f"ALTER TABLE {table} ADD COLUMN mx_d{rng.randrange(1000)} "
        f"INTEGER NOT NULL DEFAULT {rng.randint(-5, 5)};"
    )
    return _patchset(case, {}, {len(case.statements): [stmt]})


@_register(
    "ddl.create_index",
    StatementKind.DDL,
    "Create a single, compound, or partial index",
    _has_tables,
    delta=(1, 1),
)
def _ddl_create_index(case: TestCase, rng: random.Random):
    table, cols = _pick(rng, _schema_tables(case))
    name = f"mx_ix{rng.randrange(10000)}"
    variant = rng.randrange(3)
    if variant == 1 and len(cols) >= 2:
        spec = ", ".join(cols[:2])
        stmt = f"CREATE INDEX {name} ON {table} ({spec});"
    elif variant == 2:
        stmt = f"CREATE INDEX {name} ON {table} ({cols[0]}) WHERE {cols[0]} IS NOT NULL;"
    else:
        stmt = f"CREATE INDEX {name} ON {table} ({_pick(rng, cols)});"
    return _patchset(case, {}, {len(case.statements): [stmt]})


def _has_dql(case: TestCase) -> bool:
    return bool(_stmts_of_kind(case, StatementKind.DQL))


@_register(
    "ddl.create_view",
    StatementKind.DDL,
    "Create a view over one of the case's queries",
    _has_dql,
    delta=(1, 1),
)
def _ddl_create_view(case: TestCase, rng: random.Random):
    _i, stmt = _pick(rng, _stmts_of_kind(case, StatementKind.DQL))
    view = f"CREATE VIEW mx_vw{rng.randrange(10000)} AS {_body(stmt)};"
    return _patchset(case, {}, {len(case.statements): [view]})


def _checkable_create(case: TestCase) -> list[tuple[int, ClassifiedStatement, str]]:
    out = []
    for i, stmt in enumerate(case.statements):
        if stmt.kind is not StatementKind.DDL:
            continue
        parsed = _parse_create_table(stmt)
        if parsed is not None:
            out.append((i, stmt, parsed[1][0]))
    return out


@_register(
    "ddl.add_check",
    StatementKind.DDL,
    "Attach a CHECK constraint to the first column definition",
    lambda case: bool(_checkable_create(case)),
)
def _ddl_add_check(case: TestCase, rng: random.Random):
    i, stmt, first_col = _pick(rng, _checkable_create(case))
    # insert before the ',' or ')' closing the first column definition
    depth = 0
    insert_at: int | None = None
    for tok in stmt.tokens:
        if tok.text == "(":
            depth += 1
        elif tok.text == ")":
            if depth == 1:
                insert_at = tok.start
                break
            depth -= 1
        elif tok.text == "," and depth == 1:
            insert_at = tok.start
            break
    assert insert_at is not None
    check = f" CHECK ({first_col} IS NULL OR {first_col} IS NOT NULL)"
    new_text = stmt.text[:insert_at].rstrip() + check + stmt.text[insert_at:]
    return _patchset(case, {i: new_text})


@_register(
    "ddl.create_unique_index",
    StatementKind.DDL,
    "Create a UNIQUE index on the first column",
    _has_tables,
    delta=(1, 1),
)
def _ddl_unique_index(case: TestCase, rng: random.Random):
    table, cols = _pick(rng, _schema_tables(case))
    stmt = f"CREATE UNIQUE INDEX mx_uq{rng.randrange(10000)} ON {table} ({cols[0]});"
    return _patchset(case, {}, {len(case.statements): [stmt]})


def _renameable(case: TestCase) -> list[tuple[int, str]]:
    out = []
    for i, stmt in enumerate(case.statements):
        if stmt.kind is StatementKind.DDL:
            parsed = _parse_create_table(stmt)
            if parsed is not None:
                out.append((i, parsed[0]))
    return out


@_register(
    "ddl.rename_table",
    StatementKind.DDL,
    "Rename a table and rewrite later references",
    lambda case: bool(_renameable(case)),
    delta=(1, 1),
)
def _ddl_rename_table(case: TestCase, rng: random.Random):
    i, table = _pick(rng, _renameable(case))
    new_name = f"{table}_r{rng.randrange(100)}"
    replacements: dict[int, str] = {}
    for j in range(i + 1, len(case.statements)):
        stmt = case.statements[j]
        edits = [
            (tok.start, tok.end, new_name)
            for tok in stmt.tokens
            if tok.kind is TokenKind.IDENTIFIER and tok.text.upper() == table.upper()
        ]
        if edits:
            replacements[j] = splice(stmt, edits)
    inserts = {i + 1: [f"ALTER TABLE {table} RENAME TO {new_name};"]}
    return _patchset(case, replacements, inserts)


@_register(
    "ddl.create_trigger",
    StatementKind.DDL,
    "Create an AFTER INSERT trigger with a no-op body",
    _has_tables,
    delta=(1, 1),
)
def _ddl_create_trigger(case: TestCase, rng: random.Random):
    tables = _schema_tables(case)
    table, cols = _pick(rng, tables)
    create_idx = 0
    for i, stmt in enumerate(case.statements):
        parsed = _parse_create_table(stmt) if stmt.kind is StatementKind.DDL else None
        if parsed is not None and parsed[0] == table:
            create_idx = i
            break
    trigger = (
        f"CREATE TRIGGER mx_tg{rng.randrange(10000)} AFTER INSERT ON {table} "
        f"BEGIN UPDATE {table} SET {cols[0]} = {cols[0]} WHERE 0; END;"
    )
    return _patchset(case, {}, {create_idx + 1: [trigger]})


def _rowid_candidates(case: TestCase) -> list[tuple[int, ClassifiedStatement]]:
    out = []
    for i, stmt in enumerate(case.statements):
        if stmt.kind is not StatementKind.DDL:
            continue
        if _parse_create_table(stmt) is None:
            continue
        if "WITHOUT" in stmt.keywords():
            continue
        out.append((i, stmt))
    return out


@_register(
    "ddl.without_rowid",
    StatementKind.DDL,
    "Recreate a table as WITHOUT ROWID (adding a primary key if needed)",
    lambda case: bool(_rowid_candidates(case)),
)
def _ddl_without_rowid(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _rowid_candidates(case))
    text = stmt.text
    if "PRIMARY" not in stmt.keywords():
        parsed = _parse_create_table(stmt)
        assert parsed is not None
        depth = 0
        close_at = None
        for tok in stmt.tokens:
            if tok.text == "(":
                depth += 1
            elif tok.text == ")":
                depth -= 1
                if depth == 0:
                    close_at = tok.start
                    break
        assert close_at is not None
        text = text[:close_at].rstrip() + f", PRIMARY KEY ({parsed[1][0]})" + text[close_at:]
    stub = classify(text)
    end = _body_end(stub)
    text = text[:end] + " WITHOUT ROWID" + text[end:]
    return _patchset(case, {i: text})


@_register(
    "ddl.add_generated_column",
    StatementKind.DDL,
    "Add a virtual generated column",
    _has_tables,
    delta=(1, 1),
)
def _ddl_generated_column(case: TestCase, rng: random.Random):
    table, cols = _pick(rng, _schema_tables(case))
    stmt = (
        f"ALTER TABLE {table} ADD COLUMN mx_g{rng.randrange(1000)} INTEGER "
        f"GENERATED ALWAYS AS (length({cols[0]}) + {rng.randint(0, 9)}) VIRTUAL;"
    )
    return _patchset(case, {}, {len(case.statements): [stmt]})


# ---------------------------------------------------------------------------
# DML rules

_BOUNDARY_VALUES = (
    "NULL",
    "0",
    "-1",
    "9223372036854775807",
    "-9223372036854775808",
    "1e308",
    "-1e308",
    "''",
    "'" + "x" * 120 + "'",
)


def _has_value_sites(case: TestCase) -> bool:
    return bool(_value_token_sites(case, (TokenKind.NUMBER, TokenKind.STRING)))


@_register(
    "dml.boundary_values",
    StatementKind.DML,
    "Replace an inserted value with a boundary value",
    _has_value_sites,
)
def _dml_boundary(case: TestCase, rng: random.Random):
    sites = _value_token_sites(case, (TokenKind.NUMBER, TokenKind.STRING))
    i, tok = _pick(rng, sites)
    value = _pick(rng, _BOUNDARY_VALUES)
    while value == tok.text:
        value = _pick(rng, _BOUNDARY_VALUES)
    return _patchset(case, {i: _replace_value(case.statements[i], tok, value)})


@_register(
    "dml.null_injection",
    StatementKind.DML,
    "Replace an inserted value with NULL",
    _has_value_sites,
)
def _dml_null(case: TestCase, rng: random.Random):
    sites = _value_token_sites(case, (TokenKind.NUMBER, TokenKind.STRING))
    i, tok = _pick(rng, sites)
    return _patchset(case, {i: _replace_value(case.statements[i], tok, "NULL")})


@_register(
    "dml.bulk_insert",
    StatementKind.DML,
    "Append a multi-row INSERT",
    _has_tables,
    delta=(1, 1),
)
def _dml_bulk_insert(case: TestCase, rng: random.Random):
    table, cols = _pick(rng, _schema_tables(case))
    rows = []
    for r in range(3 + rng.randrange(4)):
        vals = []
        for j, _col in enumerate(cols):
            if j == 0:
                vals.append(str(rng.randint(100, 999)))
            elif rng.random() < 0.5:
                vals.append(str(rng.randint(-99, 99)))
            else:
                vals.append(f"'b{rng.randint(0, 99)}'")
        rows.append("(" + ", ".join(vals) + ")")
    stmt = f"INSERT INTO {table} ({', '.join(cols)}) VALUES {', '.join(rows)};"
    return _patchset(case, {}, {len(case.statements): [stmt]})


@_register(
    "dml.update_expression",
    StatementKind.DML,
    "Append an UPDATE with a computed expression",
    _has_tables,
    delta=(1, 1),
)
def _dml_update(case: TestCase, rng: random.Random):
    table, cols = _pick(rng, _schema_tables(case))
    col = _pick(rng, cols)
    expr = _pick(rng, (f"{col} + 1", f"{col} * 2", f"-{col}", f"{col} || '_m'"))
    where = f" WHERE {col} IS NOT NULL" if rng.random() < 0.5 else ""
    stmt = f"UPDATE {table} SET {col} = {expr}{where};"
    return _patchset(case, {}, {len(case.statements): [stmt]})


@_register(
    "dml.delete_predicate",
    StatementKind.DML,
    "Append a DELETE with a selective predicate",
    _has_tables,
    delta=(1, 1),
)
def _dml_delete(case: TestCase, rng: random.Random):
    table, cols = _pick(rng, _schema_tables(case))
    col = _pick(rng, cols)
    predicate = _pick(rng, (f"{col} > 900", f"{col} IS NULL", f"{col} < -900"))
    stmt = f"DELETE FROM {table} WHERE {predicate};"
    return _patchset(case, {}, {len(case.statements): [stmt]})


def _plain_inserts(case: TestCase) -> list[tuple[int, Token]]:
    out = []
    for i, stmt in _stmts_of_kind(case, StatementKind.DML):
        tokens = stmt.tokens
        for k, tok in enumerate(tokens):
            if tok.kind is TokenKind.KEYWORD and tok.upper() == "INSERT":
                nxt = next_significant(tokens, k)
                if nxt is not None and tokens[nxt].upper() == "INTO":
                    out.append((i, tok))
                break
    return out


@_register(
    "dml.insert_or_replace",
    StatementKind.DML,
    "Turn an INSERT into INSERT OR REPLACE",
    lambda case: bool(_plain_inserts(case)),
)
def _dml_insert_or_replace(case: TestCase, rng: random.Random):
    i, tok = _pick(rng, _plain_inserts(case))
    return _patchset(case, {i: _replace_token(case.statements[i], tok, "INSERT OR REPLACE")})


_EXTREME_NUMBERS = (
    "9223372036854775807",
    "-9223372036854775808",
    "1e308",
    "-1e308",
    "0.0000000001",
    "99999999999999999999",
)


@_register(
    "dml.extreme_numerics",
    StatementKind.DML,
    "Replace a numeric literal with an extreme magnitude",
    lambda case: bool(_dml_token_sites(case, (TokenKind.NUMBER,))),
)
def _dml_extreme(case: TestCase, rng: random.Random):
    sites = _dml_token_sites(case, (TokenKind.NUMBER,))
    i, tok = _pick(rng, sites)
    value = _pick(rng, _EXTREME_NUMBERS)
    while value == tok.text:
        value = _pick(rng, _EXTREME_NUMBERS)
    return _patchset(case, {i: _replace_value(case.statements[i], tok, value)})


_UNICODE_STRINGS = (
    "'ü漢字𝄞'",
    "'" + "у" * 80 + "'",
    "'it''s quoted'",
    "'" + "long" * 64 + "'",
)


@_register(
    "dml.unicode_strings",
    StatementKind.DML,
    "Replace a string literal with unicode or long text",
    lambda case: bool(_dml_token_sites(case, (TokenKind.STRING,))),
)
def _dml_unicode(case: TestCase, rng: random.Random):
    sites = _dml_token_sites(case, (TokenKind.STRING,))
    i, tok = _pick(rng, sites)
    value = _pick(rng, _UNICODE_STRINGS)
    while value == tok.text:
        value = _pick(rng, _UNICODE_STRINGS)
    return _patchset(case, {i: _replace_value(case.statements[i], tok, value)})


@_register(
    "dml.type_mismatch",
    StatementKind.DML,
    "Insert a literal of the wrong type",
    _has_value_sites,
)
def _dml_type_mismatch(case: TestCase, rng: random.Random):
    sites = _value_token_sites(case, (TokenKind.NUMBER, TokenKind.STRING))
    i, tok = _pick(rng, sites)
    value = "'not_a_number'" if tok.kind is TokenKind.NUMBER else str(rng.randint(100, 999))
    return _patchset(case, {i: _replace_value(case.statements[i], tok, value)})


def _wrappable_dml(case: TestCase) -> bool:
    heads = {s.head_keyword() for s in case.statements}
    if heads & {"BEGIN", "COMMIT", "ROLLBACK"}:
        return False
    return bool(_stmts_of_kind(case, StatementKind.DML))


@_register(
    "dml.transaction_wrap",
    StatementKind.DML,
    "Wrap the DML block in an explicit transaction",
    _wrappable_dml,
    delta=(2, 2),
)
def _dml_transaction(case: TestCase, _rng: random.Random):
    dml_idx = [i for i, _ in _stmts_of_kind(case, StatementKind.DML)]
    inserts = {dml_idx[0]: ["BEGIN;"], dml_idx[-1] + 1: ["COMMIT;"]}
    return _patchset(case, {}, inserts)


# ---------------------------------------------------------------------------
# DQL rules

def _dql_candidates(case: TestCase, want=None) -> list[tuple[int, ClassifiedStatement]]:
    out = []
    for i, stmt in _stmts_of_kind(case, StatementKind.DQL):
        if want is None or want(stmt):
            out.append((i, stmt))
    return out


def _no_set_ops(stmt: ClassifiedStatement) -> bool:
    return not locate_targets(stmt).set_ops


def _plain_projection(stmt: ClassifiedStatement) -> bool:
    targets = locate_targets(stmt)
    return targets.select_list is not None and not targets.set_ops


def _dql_applicable(want=None):
    return lambda case: bool(_dql_candidates(case, want))


def _filter_expr(stmt: ClassifiedStatement, case: TestCase, rng: random.Random) -> str:
    """Column reference usable in a predicate, falling back to a literal."""
    ident = _projection_identifier(stmt)
    if ident is not None:
        return ident
    for table, cols in _schema_tables(case):
        targets = locate_targets(stmt)
        for tok_i in targets.from_tables:
            if stmt.tokens[tok_i].text.upper() == table.upper():
                return _pick(rng, cols)
    return str(rng.randint(1, 9))


_JOIN_CHOICES = ("INNER JOIN", "LEFT JOIN", "CROSS JOIN")


@_register(
    "dql.join_flip",
    StatementKind.DQL,
    "Swap the join type of one join",
    _dql_applicable(lambda s: bool(locate_targets(s).joins)),
)
def _dql_join_flip(case: TestCase, rng: random.Random):
    sites = [
        (i, stmt, join)
        for i, stmt in _dql_candidates(case, lambda s: bool(locate_targets(s).joins))
        for join in locate_targets(stmt).joins
    ]
    i, stmt, join = _pick(rng, sites)
    start_tok, end_tok = stmt.tokens[join[0]], stmt.tokens[join[1] - 1]
    current = " ".join(
        stmt.tokens[k].upper()
        for k in range(join[0], join[1])
        if stmt.tokens[k].kind is TokenKind.KEYWORD
    )
    choices = [c for c in _JOIN_CHOICES if c != current]
    new_join = _pick(rng, choices)
    new_text = splice(stmt, [(start_tok.start, end_tok.end, new_join)])
    return _patchset(case, {i: new_text})


@_register(
    "dql.self_join",
    StatementKind.DQL,
    "Join the query's own derived table with itself",
    _dql_applicable(),
)
def _dql_self_join(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case))
    body = _body(stmt)
    n = rng.randrange(100)
    new_text = (
        f"SELECT * FROM ({body}) AS mx_sa{n} JOIN ({body}) AS mx_sb{n} ON 1 = 1;"
    )
    return _patchset(case, {i: new_text})


@_register(
    "dql.where_subquery",
    StatementKind.DQL,
    "Add an IN (subquery) predicate",
    _dql_applicable(_no_set_ops),
)
def _dql_where_subquery(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _no_set_ops))
    k = rng.randint(1, 9)
    predicate = _pick(
        rng,
        (
            f"{k} IN (SELECT {k})",
            f"{k} IN (SELECT {k} UNION SELECT {k + 1})",
            f"{k} NOT IN (SELECT {k + 1})",
        ),
    )
    return _patchset(case, {i: _add_predicate(stmt, predicate)})


def _correlatable(case: TestCase) -> list[tuple[int, ClassifiedStatement, str, str, str]]:
    """(idx, stmt, table, outer_ref, column) where the FROM table has known schema."""
    schema = {t.upper(): (t, cols) for t, cols in _schema_tables(case)}
    out = []
    for i, stmt in _dql_candidates(case, _no_set_ops):
        targets = locate_targets(stmt)
        for tok_i in targets.from_tables:
            name = stmt.tokens[tok_i].text
            if name.upper() not in schema:
                continue
            table, cols = schema[name.upper()]
            ref = name
            nxt = next_significant(stmt.tokens, tok_i)
            if nxt is not None:
                tok = stmt.tokens[nxt]
                if tok.kind is TokenKind.KEYWORD and tok.upper() == "AS":
                    alias_i = next_significant(stmt.tokens, nxt)
                    if alias_i is not None and stmt.tokens[alias_i].kind is TokenKind.IDENTIFIER:
                        ref = stmt.tokens[alias_i].text
                elif tok.kind is TokenKind.IDENTIFIER:
                    ref = tok.text
            out.append((i, stmt, table, ref, cols[0]))
            break
    return out


@_register(
    "dql.correlated_subquery",
    StatementKind.DQL,
    "Add an EXISTS predicate correlated with the outer query",
    lambda case: bool(_correlatable(case)),
)
def _dql_correlated(case: TestCase, rng: random.Random):
    i, stmt, table, ref, col = _pick(rng, _correlatable(case))
    n = rng.randrange(100)
    predicate = (
        f"EXISTS (SELECT 1 FROM {table} AS mx_cs{n} WHERE mx_cs{n}.{col} >= {ref}.{col})"
    )
    return _patchset(case, {i: _add_predicate(stmt, predicate)})


@_register(
    "dql.exists_predicate",
    StatementKind.DQL,
    "Add an EXISTS / NOT EXISTS predicate",
    _dql_applicable(_no_set_ops),
)
def _dql_exists(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _no_set_ops))
    predicate = _pick(
        rng,
        ("EXISTS (SELECT 1)", "NOT EXISTS (SELECT 1 WHERE 0)", "EXISTS (SELECT NULL)"),
    )
    return _patchset(case, {i: _add_predicate(stmt, predicate)})


@_register(
    "dql.in_list",
    StatementKind.DQL,
    "Add an IN-list predicate",
    _dql_applicable(_no_set_ops),
)
def _dql_in_list(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _no_set_ops))
    expr = _filter_expr(stmt, case, rng)
    values = ", ".join(str(rng.randint(-9, 99)) for _ in range(3))
    negate = "NOT " if rng.random() < 0.3 else ""
    return _patchset(case, {i: _add_predicate(stmt, f"{expr} {negate}IN ({values})")})


@_register(
    "dql.scalar_subquery",
    StatementKind.DQL,
    "Add a scalar subquery to the projection",
    _dql_applicable(_plain_projection),
)
def _dql_scalar_subquery(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _plain_projection))
    expr = f"(SELECT {rng.randint(1, 99)}) AS mx_s{rng.randrange(100)}"
    return _patchset(case, {i: _append_projection(stmt, expr)})


@_register(
    "dql.cte_wrap",
    StatementKind.DQL,
    "Wrap the query in a common table expression",
    _dql_applicable(),
)
def _dql_cte_wrap(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case))
    n = rng.randrange(100)
    new_text = f"WITH mx_w{n} AS ({_body(stmt)}) SELECT * FROM mx_w{n};"
    return _patchset(case, {i: new_text})


@_register(
    "dql.window_function",
    StatementKind.DQL,
    "Add a window function to the projection",
    _dql_applicable(_plain_projection),
)
def _dql_window(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _plain_projection))
    n = rng.randrange(100)
    expr = _pick(
        rng,
        (
            f"COUNT(*) OVER () AS mx_wf{n}",
            f"ROW_NUMBER() OVER (ORDER BY 1) AS mx_wf{n}",
            f"SUM(1) OVER (PARTITION BY 1) AS mx_wf{n}",
        ),
    )
    return _patchset(case, {i: _append_projection(stmt, expr)})


def _groupable(stmt: ClassifiedStatement) -> bool:
    targets = locate_targets(stmt)
    return (
        targets.select_list is not None
        and not targets.set_ops
        and targets.group_by_kw is None
        and not targets.has_aggregate
    )


@_register(
    "dql.group_by_having",
    StatementKind.DQL,
    "Group by the first output column and filter with HAVING",
    _dql_applicable(_groupable),
)
def _dql_group_by(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _groupable))
    targets = locate_targets(stmt)
    pos = _clause_pos(stmt, targets.order_by_kw, targets.limit_kw)
    clause = f"GROUP BY 1 HAVING COUNT(*) >= {rng.randint(0, 1)}"
    return _patchset(case, {i: _insert_at(stmt, pos, clause)})


@_register(
    "dql.aggregate_wrap",
    StatementKind.DQL,
    "Aggregate over the query as a derived table",
    _dql_applicable(),
)
def _dql_aggregate(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case))
    agg = _pick(rng, ("COUNT(*)", "COUNT(*), MIN(1)", "SUM(1)", "MAX(1)"))
    new_text = f"SELECT {agg} FROM ({_body(stmt)}) AS mx_ag{rng.randrange(100)};"
    return _patchset(case, {i: new_text})


def _distinctable(stmt: ClassifiedStatement) -> bool:
    targets = locate_targets(stmt)
    return targets.select_list is not None and not targets.has_distinct


@_register(
    "dql.distinct",
    StatementKind.DQL,
    "Make the outer SELECT DISTINCT",
    _dql_applicable(_distinctable),
)
def _dql_distinct(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _distinctable))
    depth = 0
    pos = None
    for tok in stmt.tokens:
        if tok.text == "(":
            depth += 1
        elif tok.text == ")":
            depth -= 1
        elif depth == 0 and tok.kind is TokenKind.KEYWORD and tok.upper() == "SELECT":
            pos = tok.end
            break
    assert pos is not None
    return _patchset(case, {i: stmt.text[:pos] + " DISTINCT" + stmt.text[pos:]})


_ORDER_TERMS = ("1", "1 COLLATE NOCASE", "1 DESC", "1 COLLATE RTRIM ASC")


@_register(
    "dql.order_by_collate",
    StatementKind.DQL,
    "Add or extend ORDER BY, optionally with a COLLATE term",
    _dql_applicable(),
)
def _dql_order_by(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case))
    targets = locate_targets(stmt)
    term = _pick(rng, _ORDER_TERMS)
    pos = _clause_pos(stmt, targets.limit_kw)
    if targets.order_by_kw is not None:
        if pos >= _body_end(stmt):
            new_text = stmt.text[:pos] + f", {term}" + stmt.text[pos:]
        else:
            text_before = stmt.text[:pos].rstrip()
            new_text = text_before + f", {term} " + stmt.text[pos:]
    else:
        new_text = _insert_at(stmt, pos, f"ORDER BY {term}")
    return _patchset(case, {i: new_text})


@_register(
    "dql.limit_offset",
    StatementKind.DQL,
    "Add LIMIT and OFFSET",
    _dql_applicable(lambda s: locate_targets(s).limit_kw is None),
)
def _dql_limit(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, lambda s: locate_targets(s).limit_kw is None))
    limit = _pick(rng, ("0", "1", "3", "100", "-1"))
    clause = f"LIMIT {limit}"
    if rng.random() < 0.5:
        clause += f" OFFSET {rng.randint(0, 5)}"
    return _patchset(case, {i: _insert_at(stmt, _body_end(stmt), clause)})


@_register(
    "dql.case_when",
    StatementKind.DQL,
    "Add a CASE WHEN expression to the projection",
    _dql_applicable(_plain_projection),
)
def _dql_case_when(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _plain_projection))
    cond = _pick(rng, ("1 = 1", "2 < 1", "length('ab') = 2"))
    expr = (
        f"CASE WHEN {cond} THEN {rng.randint(0, 9)} ELSE {rng.randint(10, 99)} END "
        f"AS mx_k{rng.randrange(100)}"
    )
    return _patchset(case, {i: _append_projection(stmt, expr)})


@_register(
    "dql.null_predicate",
    StatementKind.DQL,
    "Add an IS [NOT] NULL predicate",
    _dql_applicable(_no_set_ops),
)
def _dql_null_predicate(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _no_set_ops))
    expr = _filter_expr(stmt, case, rng)
    op = "IS NOT NULL" if rng.random() < 0.7 else "IS NULL"
    return _patchset(case, {i: _add_predicate(stmt, f"{expr} {op}")})


_FLIP_MAP = {"=": "<>", "==": "<>", "<>": "=", "!=": "=", "<": ">=", ">": "<=", "<=": ">", ">=": "<"}


def _comparison_sites(case: TestCase) -> list[tuple[int, Token]]:
    return [
        (i, stmt.tokens[k])
        for i, stmt in _stmts_of_kind(case, StatementKind.DQL)
        for k in locate_targets(stmt).comparisons
    ]


@_register(
    "dql.operator_flip",
    StatementKind.DQL,
    "Flip a comparison operator",
    lambda case: bool(_comparison_sites(case)),
)
def _dql_operator_flip(case: TestCase, rng: random.Random):
    i, tok = _pick(rng, _comparison_sites(case))
    return _patchset(case, {i: _replace_token(case.statements[i], tok, _FLIP_MAP[tok.text])})


@_register(
    "dql.like_glob",
    StatementKind.DQL,
    "Add a LIKE or GLOB predicate",
    _dql_applicable(_no_set_ops),
)
def _dql_like(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _no_set_ops))
    expr = _filter_expr(stmt, case, rng)
    op, pattern = _pick(
        rng, (("LIKE", "'s%'"), ("LIKE", "'%1%'"), ("GLOB", "'s*'"), ("NOT LIKE", "'_z%'"))
    )
    return _patchset(case, {i: _add_predicate(stmt, f"{expr} {op} {pattern}")})


@_register(
    "dql.cast_projection",
    StatementKind.DQL,
    "Add a CAST expression to the projection",
    _dql_applicable(_plain_projection),
)
def _dql_cast(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _plain_projection))
    target_type = _pick(rng, ("TEXT", "INTEGER", "REAL", "BLOB", "NUMERIC"))
    ident = _projection_identifier(stmt)
    source = ident if ident is not None else str(rng.randint(-99, 99))
    expr = f"CAST({source} AS {target_type}) AS mx_t{rng.randrange(100)}"
    return _patchset(case, {i: _append_projection(stmt, expr)})


@_register(
    "dql.set_operation",
    StatementKind.DQL,
    "Combine the query with itself through a set operation",
    _dql_applicable(),
)
def _dql_set_operation(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case))
    op = _pick(rng, ("UNION", "UNION ALL", "EXCEPT", "INTERSECT"))
    body = _body(stmt)
    n = rng.randrange(100)
    new_text = (
        f"SELECT * FROM ({body}) AS mx_u{n}a {op} SELECT * FROM ({body}) AS mx_u{n}b;"
    )
    return _patchset(case, {i: new_text})


@_register(
    "dql.arithmetic_projection",
    StatementKind.DQL,
    "Add arithmetic to the projection",
    _dql_applicable(_plain_projection),
)
def _dql_arithmetic(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _plain_projection))
    a, b = rng.randint(1, 99), rng.randint(1, 20)
    ident = _projection_identifier(stmt)
    pool = [f"{a} + {b} * 2", f"({a} << {b % 20}) - 1", f"{a} / {b}.0", f"{a} % {b}"]
    if ident is not None:
        pool.append(f"{ident} * 2 + 1")
    expr = f"{_pick(rng, pool)} AS mx_ar{rng.randrange(100)}"
    return _patchset(case, {i: _append_projection(stmt, expr)})


@_register(
    "dql.string_function",
    StatementKind.DQL,
    "Add a string function call to the projection",
    _dql_applicable(_plain_projection),
)
def _dql_string_fn(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _plain_projection))
    ident = _projection_identifier(stmt)
    pool = [
        "substr('abcdef', 2, 3)",
        "upper('mIxEd')",
        "replace('aXbXc', 'X', '_')",
        "trim('  pad  ')",
        "hex('AB')",
        "printf('%d/%s', 7, 'x')",
        "quote('it''s')",
    ]
    if ident is not None:
        pool.append(f"length({ident})")
    expr = f"{_pick(rng, pool)} AS mx_sf{rng.randrange(100)}"
    return _patchset(case, {i: _append_projection(stmt, expr)})


@_register(
    "dql.datetime_function",
    StatementKind.DQL,
    "Add a date/time function call to the projection",
    _dql_applicable(_plain_projection),
)
def _dql_datetime_fn(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case, _plain_projection))
    expr = _pick(
        rng,
        (
            "date('2024-01-15')",
            "time('12:34:56')",
            "datetime('2024-01-15 12:34:56')",
            "strftime('%Y-%m', '2024-01-15')",
            "julianday('2000-01-01')",
        ),
    )
    return _patchset(case, {i: _append_projection(stmt, f"{expr} AS mx_dt{rng.randrange(100)}")})


@_register(
    "dql.derived_table",
    StatementKind.DQL,
    "Nest the query as a derived table",
    _dql_applicable(),
)
def _dql_derived(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case))
    new_text = f"SELECT * FROM ({_body(stmt)}) AS mx_dv{rng.randrange(100)};"
    return _patchset(case, {i: new_text})


@_register(
    "dql.explain_twin",
    StatementKind.DQL,
    "Add an EXPLAIN QUERY PLAN twin of the query",
    _dql_applicable(),
    delta=(1, 1),
)
def _dql_explain(case: TestCase, rng: random.Random):
    i, stmt = _pick(rng, _dql_candidates(case))
    return _patchset(case, {}, {i + 1: [f"EXPLAIN QUERY PLAN {_body(stmt)};"]})


# ---------------------------------------------------------------------------
# manifests

def load_manifest(path) -> tuple[str, list[str]]:
    import json

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    dialect = doc.get("dialect")
    enabled = doc.get("enabled")
    if not isinstance(dialect, str) or not isinstance(enabled, list):
        raise ValidationError(f"{path}: manifest must have 'dialect' and 'enabled'")
    return dialect, list(enabled)


def registry_from_manifest(path, base: RuleRegistry | None = None) -> RuleRegistry:
    base = base if base is not None else DEFAULT_REGISTRY
    _dialect, enabled = load_manifest(path)
    return base.restrict(enabled)
