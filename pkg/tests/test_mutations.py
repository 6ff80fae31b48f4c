from __future__ import annotations

import random

import pytest

from sqlforge.errors import NotApplicable, UnknownDialect, ValidationError
from sqlforge.mutations import (
    DEFAULT_REGISTRY,
    applicable,
    apply,
    registry_from_manifest,
    rule_menu,
)
from sqlforge.statements import StatementKind, classify
from sqlforge.synthesis import extract_sql

from conftest import DATA_DIR, make_case, template_corpus


class TestRegistry:
    def test_sqlite_counts_exact(self):
        counts = DEFAULT_REGISTRY.counts("sqlite")
        assert counts[StatementKind.DDL] == 10
        assert counts[StatementKind.DML] == 10
        assert counts[StatementKind.DQL] == 25

    def test_menus_include_noop(self):
        ddl = rule_menu(DEFAULT_REGISTRY, "sqlite", StatementKind.DDL)
        dql = rule_menu(DEFAULT_REGISTRY, "sqlite", StatementKind.DQL)
        assert len(ddl) == 11
        assert len(dql) == 26
        assert "ddl.noop" in ddl
        assert "dql.noop" in dql

    def test_menu_is_sorted_and_stable(self):
        menu = rule_menu(DEFAULT_REGISTRY, "sqlite", StatementKind.DML)
        assert menu == sorted(menu)
        assert menu == rule_menu(DEFAULT_REGISTRY, "sqlite", StatementKind.DML)

    def test_unknown_dialect(self):
        with pytest.raises(UnknownDialect):
            rule_menu(DEFAULT_REGISTRY, "oracle23c", StatementKind.DQL)

    def test_manifest_restriction(self):
        registry = registry_from_manifest(DATA_DIR / "sqlite_rules.json")
        assert registry.counts("sqlite") == DEFAULT_REGISTRY.counts("sqlite")
        sub = DEFAULT_REGISTRY.restrict(["dql.join_flip", "ddl.create_index"])
        assert "dql.join_flip" in sub
        assert "dql.cte_wrap" not in sub
        assert "dql.noop" in sub  # noops always ride along

    def test_unknown_rule_id(self):
        with pytest.raises(ValidationError):
            DEFAULT_REGISTRY.get("dql.imaginary")


class TestApplicability:
    def test_join_flip_needs_a_join(self):
        rule = DEFAULT_REGISTRY.get("dql.join_flip")
        case = make_case(["SELECT 1;"])
        assert not applicable(rule, case)
        case2 = make_case(["SELECT * FROM a INNER JOIN b ON 1 = 1;"])
        assert applicable(rule, case2)

    def test_boundary_needs_insert_values(self):
        rule = DEFAULT_REGISTRY.get("dml.boundary_values")
        assert applicable(rule, make_case(["INSERT INTO t VALUES (1);"]))
        assert not applicable(rule, make_case(["SELECT 1;"]))

    def test_noop_always_applicable(self):
        for cat in ("ddl", "dml", "dql"):
            rule = DEFAULT_REGISTRY.get(f"{cat}.noop")
            assert applicable(rule, make_case(["SELECT 1;"]))

    def test_apply_inapplicable_raises(self):
        rule = DEFAULT_REGISTRY.get("dql.join_flip")
        with pytest.raises(NotApplicable):
            apply(rule, make_case(["SELECT 1;"]), random.Random(0))


class TestRuleExamples:
    def test_join_flip_changes_join_type(self):
        rule = DEFAULT_REGISTRY.get("dql.join_flip")
        case = make_case(["SELECT * FROM a INNER JOIN b ON a.x = b.x;"])
        out = apply(rule, case, random.Random(0))
        text = out.mutated.statements[0].text
        assert "INNER JOIN" not in text
        assert "LEFT JOIN" in text or "CROSS JOIN" in text

    def test_boundary_value_insert(self):
        rule = DEFAULT_REGISTRY.get("dml.boundary_values")
        case = make_case(["CREATE TABLE t (x INTEGER);", "INSERT INTO t VALUES (1);"])
        seen = set()
        for seed in range(30):
            out = apply(rule, case, random.Random(seed))
            seen.add(out.mutated.statements[1].text)
        assert "INSERT INTO t VALUES (NULL);" in seen

    def test_negative_literal_replacement_consumes_unary_sign(self):
        # replacing the 9 of -9 must not leave "--..." (a SQL comment)
        case = make_case(["INSERT INTO t (a, b) VALUES (-9, 'x');"])
        for rule_id in ("dml.boundary_values", "dml.extreme_numerics", "dml.null_injection"):
            rule = DEFAULT_REGISTRY.get(rule_id)
            for seed in range(20):
                out = apply(rule, case, random.Random(seed))
                assert "--" not in out.mutated.statements[0].text, (rule_id, seed)

    def test_binary_minus_is_preserved(self):
        case = make_case(["UPDATE t SET a = a - 5;"])
        rule = DEFAULT_REGISTRY.get("dml.extreme_numerics")
        out = apply(rule, case, random.Random(1))
        text = out.mutated.statements[0].text
        assert text.startswith("UPDATE t SET a = a -")

    def test_null_predicate_wrap(self):
        rule = DEFAULT_REGISTRY.get("dql.null_predicate")
        case = make_case(["SELECT x FROM t;"])
        texts = set()
        for seed in range(20):
            out = apply(rule, case, random.Random(seed))
            texts.add(out.mutated.statements[0].text)
        assert "SELECT x FROM t WHERE x IS NOT NULL;" in texts

    def test_noop_returns_same_statements(self, simple_case):
        rule = DEFAULT_REGISTRY.get("dql.noop")
        out = apply(rule, simple_case, random.Random(0))
        assert [s.text for s in out.mutated.statements] == [
            s.text for s in simple_case.statements
        ]
        assert out.changed_statements == ()

    def test_rename_rewrites_references(self):
        rule = DEFAULT_REGISTRY.get("ddl.rename_table")
        case = make_case(
            [
                "CREATE TABLE t0 (c0 INTEGER);",
                "INSERT INTO t0 (c0) VALUES (1);",
                "SELECT c0 FROM t0;",
            ]
        )
        out = apply(rule, case, random.Random(1))
        texts = [s.text for s in out.mutated.statements]
        assert any("RENAME TO" in t for t in texts)
        new_name = texts[1].split("RENAME TO")[1].strip().rstrip(";")
        assert f"INSERT INTO {new_name}" in texts[2]
        assert f"FROM {new_name}" in texts[3]

    def test_transaction_wrap_brackets_dml(self):
        rule = DEFAULT_REGISTRY.get("dml.transaction_wrap")
        case = make_case(
            [
                "CREATE TABLE t (x INTEGER);",
                "INSERT INTO t VALUES (1);",
                "SELECT x FROM t;",
            ]
        )
        out = apply(rule, case, random.Random(0))
        texts = [s.text for s in out.mutated.statements]
        assert texts[1] == "BEGIN;"
        assert texts[3] == "COMMIT;"

    def test_explain_twin_added_after_query(self):
        rule = DEFAULT_REGISTRY.get("dql.explain_twin")
        case = make_case(["CREATE TABLE t (x INTEGER);", "SELECT x FROM t;"])
        out = apply(rule, case, random.Random(0))
        texts = [s.text for s in out.mutated.statements]
        assert texts[2].startswith("EXPLAIN QUERY PLAN SELECT")

    def test_mutated_provenance_extends_trajectory(self, simple_case):
        first = apply(DEFAULT_REGISTRY.get("dql.distinct"), simple_case, random.Random(0))
        second = apply(DEFAULT_REGISTRY.get("dql.limit_offset"), first.mutated, random.Random(0))
        assert second.mutated.applied_rules == ("dql.distinct", "dql.limit_offset")
        assert second.mutated.seed_origin == simple_case.id


class TestDeterminism:
    def test_identical_seed_identical_outcome(self, sqlite_catalog):
        corpus = template_corpus(sqlite_catalog, 3)
        for case in corpus:
            for rule_id in ("dql.cte_wrap", "dml.boundary_values", "ddl.create_index"):
                rule = DEFAULT_REGISTRY.get(rule_id)
                if not applicable(rule, case):
                    continue
                a = apply(rule, case, random.Random(77))
                b = apply(rule, case, random.Random(77))
                assert [s.text for s in a.mutated.statements] == [
                    s.text for s in b.mutated.statements
                ]
                assert a.changed_statements == b.changed_statements


def non_noop_rules():
    return [
        DEFAULT_REGISTRY.get(rid)
        for cat in (StatementKind.DDL, StatementKind.DML, StatementKind.DQL)
        for rid in DEFAULT_REGISTRY.menu("sqlite", cat)
        if not DEFAULT_REGISTRY.get(rid).is_noop
    ]


class TestClosure:
    """Every applicable rule application survives re-extraction and re-classification
    with the statement count shifted by exactly the rule's declared delta."""

    def test_closure_over_corpus(self, sqlite_catalog):
        corpus = template_corpus(sqlite_catalog, 12)
        rules = non_noop_rules()
        applied = 0
        for case in corpus:
            for rule in rules:
                if not applicable(rule, case):
                    continue
                out = apply(rule, case, random.Random(hash(rule.id) & 0xFFFF))
                applied += 1
                assert out.mutated.statements, rule.id
                # every statement stays semicolon-terminated and classifiable
                for stmt in out.mutated.statements:
                    reparsed = classify(stmt.text)
                    assert reparsed.kind is stmt.kind
                joined = "\n".join(s.text for s in out.mutated.statements)
                re_extracted = extract_sql(joined)
                assert len(re_extracted) == len(out.mutated.statements), rule.id
                lo, hi = rule.stmt_delta
                delta = len(out.mutated.statements) - len(case.statements)
                assert lo <= delta <= hi, f"{rule.id}: delta {delta} not in [{lo}, {hi}]"
                if not out.changed_statements:
                    pytest.fail(f"{rule.id} reported no changed statements")
        assert applied > 100  # the corpus must actually exercise the catalog

    def test_every_rule_has_an_applicable_corpus_case(self, sqlite_catalog):
        corpus = template_corpus(sqlite_catalog, 40)
        for rule in non_noop_rules():
            assert any(applicable(rule, case) for case in corpus), (
                f"{rule.id} never applicable on the corpus"
            )
