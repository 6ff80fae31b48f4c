from __future__ import annotations

import random
from pathlib import Path

import pytest

from sqlforge.cases import SynthesizedProvenance, TestCase, case_from_texts
from sqlforge.catalog import FeatureCatalog, load_catalog
from sqlforge.llm import TemplateBackend
from sqlforge.synthesis import ErrorMemory, SynthesisConfig, synthesize_one

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "sqlforge" / "data"


@pytest.fixture(scope="session")
def sqlite_catalog() -> FeatureCatalog:
    return load_catalog(DATA_DIR / "sqlite_catalog.json")


@pytest.fixture(scope="session")
def catalog_path() -> Path:
    return DATA_DIR / "sqlite_catalog.json"


def make_case(texts: list[str], case_id: str = "fixture-0") -> TestCase:
    return case_from_texts(case_id, texts, SynthesizedProvenance(None, "fixture"))


@pytest.fixture
def simple_case() -> TestCase:
    return make_case(
        [
            "CREATE TABLE t0 (c0 INTEGER, c1 TEXT, c2 REAL);",
            "INSERT INTO t0 (c0, c1, c2) VALUES (1, 's1', 0.5), (2, 's2', 1.5);",
            "SELECT c0, c1 FROM t0 WHERE c0 > 0 ORDER BY c0;",
        ]
    )


def template_corpus(catalog: FeatureCatalog, count: int, seed: int = 7) -> list[TestCase]:
    """Deterministic corpus of synthesized cases for rule/closure tests."""
    backend = TemplateBackend()
    memory = ErrorMemory()
    cases = []
    for i in range(count):
        rng = random.Random(seed * 100_003 + i)
        cases.append(
            synthesize_one(
                catalog, memory, backend, rng, SynthesisConfig(), case_id=f"corpus-{i:04d}"
            )
        )
    return cases
