from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from sqlforge.cases import SynthesizedProvenance
from sqlforge.catalog import Feature, FeatureSelection
from sqlforge.errors import NoSqlFound, SynthesisFailure
from sqlforge.llm import MockBackend, MockScript, TemplateBackend
from sqlforge.synthesis import (
    NO_KNOWN_ERRORS,
    ErrorKind,
    ErrorMemory,
    SynthesisConfig,
    build_prompt,
    build_simple_prompt,
    extract_sql,
    normalize_error_message,
    record_error,
    synthesize_one,
)


def selection_of(names: list[str]) -> FeatureSelection:
    feats = tuple(("cat", Feature(n, f"about {n}", "SELECT 1")) for n in names)
    return FeatureSelection("sqlite", feats, "cat")


class TestBuildPrompt:
    def test_empty_memory_placeholder(self):
        bundle = build_prompt(selection_of(["f1"]), ErrorMemory(), k=5)
        assert NO_KNOWN_ERRORS in bundle.user_prompt

    def test_error_digest_appears_verbatim(self):
        memory = ErrorMemory()
        entry = memory.record(
            ErrorKind.RUNTIME, "no such function: REGEXP_MATCHES", "SELECT 1;"
        )
        bundle = build_prompt(selection_of(["f1"]), memory, k=5)
        assert entry.normalized_message in bundle.user_prompt
        assert "no such function: regexp_matches" in bundle.user_prompt

    def test_all_feature_names_appear(self):
        names = ["feature one", "feature two", "feature three"]
        bundle = build_prompt(selection_of(names), ErrorMemory(), k=0)
        for name in names:
            assert name in bundle.user_prompt

    def test_top_k_limit(self):
        memory = ErrorMemory()
        labels = "abcdefghij"
        for i, label in enumerate(labels):
            for _ in range(i + 1):
                memory.record(ErrorKind.SYNTAX, f"error kind {label} near token", "S;")
        bundle = build_prompt(selection_of(["f"]), memory, k=3)
        assert bundle.user_prompt.count("[syntax]") == 3
        # the three most frequent survive the cut
        for label in "hij":
            assert f"error kind {label} near token" in bundle.user_prompt
        assert "error kind a near token" not in bundle.user_prompt


class TestBuildSimplePrompt:
    def test_contains_dialect_no_features(self):
        bundle = build_simple_prompt("sqlite")
        assert "sqlite" in bundle.user_prompt
        assert "example syntax" not in bundle.user_prompt
        assert NO_KNOWN_ERRORS not in bundle.user_prompt

    def test_byte_stable(self):
        assert build_simple_prompt("sqlite") == build_simple_prompt("sqlite")

    def test_dialect_token_is_the_only_difference(self):
        a = build_simple_prompt("alpha").user_prompt
        b = build_simple_prompt("beta").user_prompt
        assert a.replace("alpha", "beta") == b


class TestExtractSql:
    def test_fenced_block(self):
        assert extract_sql("```sql\nSELECT 1;\n```") == ["SELECT 1;"]

    def test_prose_prefix_same_line(self):
        assert extract_sql("Here is a query: SELECT 'a;b' AS x; done") == [
            "SELECT 'a;b' AS x;"
        ]

    def test_prose_only_raises(self):
        with pytest.raises(NoSqlFound):
            extract_sql("Sure! I recommend indexing.")

    def test_comments_dropped(self):
        raw = "-- preamble\nSELECT 1; /* inline */ SELECT 2;"
        assert extract_sql(raw) == ["SELECT 1;", "SELECT 2;"]

    def test_comment_markers_inside_strings_survive(self):
        raw = "SELECT 'a--b', 'c/*d*/e';"
        assert extract_sql(raw) == ["SELECT 'a--b', 'c/*d*/e';"]

    def test_missing_final_semicolon_added(self):
        assert extract_sql("SELECT 1") == ["SELECT 1;"]

    def test_prose_line_between_statements(self):
        raw = "SELECT 1;\nAnd now the second query:\nSELECT 2;"
        assert extract_sql(raw) == ["SELECT 1;", "SELECT 2;"]

    def test_multiline_statement_kept_whole(self):
        raw = "SELECT c0,\n       c1\nFROM t0;"
        assert extract_sql(raw) == ["SELECT c0,\n       c1\nFROM t0;"]

    def test_non_keyword_statements_dropped(self):
        raw = "GRANT ALL ON x TO y; SELECT 1;"
        assert extract_sql(raw) == ["SELECT 1;"]

    def test_trigger_survives_extraction(self):
        raw = (
            "```sql\nCREATE TRIGGER tg AFTER INSERT ON t "
            "BEGIN UPDATE t SET x = 0 WHERE 0; END;\nSELECT 1;\n```"
        )
        out = extract_sql(raw)
        assert len(out) == 2
        assert out[0].endswith("END;")


_STATEMENT_POOL = [
    "SELECT 1;",
    "SELECT 'a;b' AS x;",
    "INSERT INTO t0 (a, b) VALUES (1, 'it''s');",
    "CREATE TABLE t1 (x INTEGER, y TEXT);",
    "UPDATE t0 SET a = a + 1 WHERE b <> 'q;r';",
    "DELETE FROM t0 WHERE a IS NULL;",
    "WITH c AS (SELECT 2) SELECT * FROM c;",
    "SELECT x,\n  y\nFROM t1 ORDER BY 1;",
    "PRAGMA page_size;",
    "EXPLAIN QUERY PLAN SELECT 1;",
]


class TestExtractRoundTrip:
    @settings(max_examples=150, deadline=None)
    @given(
        st.lists(st.sampled_from(_STATEMENT_POOL), min_size=1, max_size=8),
        st.booleans(),
    )
    def test_round_trip(self, statements, fenced):
        text = "\n".join(statements)
        if fenced:
            text = f"```sql\n{text}\n```"
        assert extract_sql(text) == statements

    def test_round_trip_with_prose_wrapping(self):
        statements = ["SELECT 1;", "INSERT INTO t VALUES (2);"]
        text = "Of course! Here you go:\n```sql\n" + "\n".join(statements) + "\n```\nEnjoy."
        assert extract_sql(text) == statements


class TestNormalizeErrorMessage:
    def test_lowercase_and_masks(self):
        out = normalize_error_message('near "SELEC": syntax error at line 3')
        assert out == 'near "?": syntax error at line #'

    def test_table_names_with_digits_unify(self):
        a = normalize_error_message("no such table: t1")
        b = normalize_error_message("no such table: t2")
        assert a == b

    def test_quoted_literals_unify(self):
        a = normalize_error_message("cannot store 'alpha' here")
        b = normalize_error_message("cannot store 'beta' here")
        assert a == b


class TestErrorMemory:
    def test_dedup_increments_count(self):
        memory = ErrorMemory()
        record_error(memory, ErrorKind.SYNTAX, 'near "SELEC": syntax error', "SELEC 1;")
        entry = record_error(memory, ErrorKind.SYNTAX, 'near "SELEC": syntax error', "SELEC 2;")
        assert len(memory) == 1
        assert entry.occurrence_count == 2

    def test_eviction_keeps_frequent(self):
        # capacity-1 memory, counts 3 vs 1: the count-3 entry survives
        memory = ErrorMemory(capacity=1)
        for _ in range(3):
            memory.record(ErrorKind.RUNTIME, "frequent problem alpha", "S;")
        memory.record(ErrorKind.RUNTIME, "rare problem beta", "S;")
        entries = memory.snapshot()
        assert len(entries) == 1
        assert entries[0].normalized_message == "frequent problem alpha"
        assert entries[0].occurrence_count == 3

    def test_newcomer_displaces_equal_count_entry(self):
        memory = ErrorMemory(capacity=2)
        for _ in range(3):
            memory.record(ErrorKind.RUNTIME, "frequent problem alpha", "S;")
        memory.record(ErrorKind.RUNTIME, "rare one", "S;")
        memory.record(ErrorKind.RUNTIME, "rare two", "S;")
        kept = {e.normalized_message for e in memory.snapshot()}
        assert kept == {"frequent problem alpha", "rare two"}

    def test_counts_never_decrease_and_capacity_respected(self):
        memory = ErrorMemory(capacity=8)
        rng = random.Random(0)
        seen_counts: dict[str, int] = {}
        for _ in range(500):
            msg = f"error variant {rng.randrange(12)} detail"
            entry = memory.record(ErrorKind.RUNTIME, msg, "S;")
            prev = seen_counts.get(entry.normalized_message, 0)
            assert entry.occurrence_count >= 1
            assert entry.occurrence_count >= prev or prev == 0
            seen_counts[entry.normalized_message] = entry.occurrence_count
            assert len(memory) <= 8

    def test_top_orders_by_count_then_recency(self):
        memory = ErrorMemory()
        memory.record(ErrorKind.SYNTAX, "thrice seen", "S;")
        memory.record(ErrorKind.SYNTAX, "thrice seen", "S;")
        memory.record(ErrorKind.SYNTAX, "thrice seen", "S;")
        memory.record(ErrorKind.SYNTAX, "once old", "S;")
        memory.record(ErrorKind.SYNTAX, "once new", "S;")
        top = memory.top(2)
        assert top[0].normalized_message == "thrice seen"
        assert top[1].normalized_message == "once new"  # recency breaks the tie

    def test_empty_message_rejected(self):
        with pytest.raises(ValueError):
            ErrorMemory().record(ErrorKind.SYNTAX, "", "S;")


class TestSynthesizeOne:
    def test_mock_valid_triple(self, sqlite_catalog):
        backend = MockBackend(
            MockScript(
                ("CREATE TABLE t (x INTEGER);\nINSERT INTO t VALUES (1);\nSELECT x FROM t;",)
            )
        )
        case = synthesize_one(
            sqlite_catalog, ErrorMemory(), backend, random.Random(0), SynthesisConfig()
        )
        assert len(case.statements) == 3
        kinds = [s.kind.value for s in case.statements]
        assert kinds == ["ddl", "dml", "dql"]

    def test_prose_only_fails_after_retries(self, sqlite_catalog):
        backend = MockBackend(MockScript(("no sql here, sorry",), exhaustion="cycle"))
        with pytest.raises(SynthesisFailure):
            synthesize_one(
                sqlite_catalog,
                ErrorMemory(),
                backend,
                random.Random(0),
                SynthesisConfig(max_retries=0),
            )

    def test_retry_recovers(self, sqlite_catalog):
        backend = MockBackend(MockScript(("prose only", "SELECT 5;"), exhaustion="error"))
        case = synthesize_one(
            sqlite_catalog,
            ErrorMemory(),
            backend,
            random.Random(0),
            SynthesisConfig(max_retries=1),
        )
        assert case.statements[0].text == "SELECT 5;"

    def test_provenance_carries_selection(self, sqlite_catalog):
        backend = TemplateBackend()
        case = synthesize_one(
            sqlite_catalog, ErrorMemory(), backend, random.Random(3), SynthesisConfig()
        )
        prov = case.provenance
        assert isinstance(prov, SynthesizedProvenance)
        assert prov.selection is not None
        for _, feature in prov.selection.features:
            assert feature.name  # selection preserved intact
        assert prov.strategy == "hierarchical"

    def test_simple_strategy_has_no_selection(self, sqlite_catalog):
        backend = TemplateBackend()
        case = synthesize_one(
            sqlite_catalog,
            ErrorMemory(),
            backend,
            random.Random(3),
            SynthesisConfig(strategy="simple"),
        )
        assert case.provenance.selection is None

    def test_closed_loop_prompt_contains_recorded_error(self, sqlite_catalog):
        memory = ErrorMemory()
        backend = MockBackend(MockScript(("SELECT 1;",), exhaustion="cycle"))
        synthesize_one(sqlite_catalog, memory, backend, random.Random(0), SynthesisConfig())
        entry = memory.record(ErrorKind.SYNTAX, 'near "FROOM": syntax error', "SELECT;")
        synthesize_one(sqlite_catalog, memory, backend, random.Random(1), SynthesisConfig())
        assert entry.normalized_message in backend.requests[-1].user_prompt
