"""Test cases: ordered classified statements plus provenance.

Cases are persisted as one ``.sql`` file per case with a JSON sidecar
carrying id, provenance, and creation time.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from .catalog import FeatureSelection
from .errors import ValidationError
from .statements import ClassifiedStatement, classify


@dataclass(frozen=True)
class SynthesizedProvenance:
    selection: FeatureSelection | None
    strategy: str = "hierarchical"

    def to_dict(self) -> dict:
        return {
            "type": "synthesized",
            "strategy": self.strategy,
            "selection": self.selection.to_dict() if self.selection else None,
        }


@dataclass(frozen=True)
class MutatedProvenance:
    parent_id: str
    trajectory: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "type": "mutated",
            "parent_id": self.parent_id,
            "trajectory": list(self.trajectory),
        }


Provenance = SynthesizedProvenance | MutatedProvenance


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # despite the name, not a pytest class

    id: str
    statements: tuple[ClassifiedStatement, ...]
    provenance: Provenance

    def __post_init__(self):
        if not self.statements:
            raise ValidationError(f"test case {self.id!r} has no statements")
        for stmt in self.statements:
            if not stmt.text.rstrip().endswith(";"):
                raise ValidationError(
                    f"test case {self.id!r}: statement not semicolon-terminated: {stmt.text!r}"
                )

    def sql_text(self) -> str:
        return "\n".join(s.text for s in self.statements)

    @property
    def seed_origin(self) -> str:
        """Id of the seed this case descends from (itself when synthesized)."""
        if isinstance(self.provenance, MutatedProvenance):
            return self.provenance.parent_id
        return self.id

    @property
    def applied_rules(self) -> tuple[str, ...]:
        if isinstance(self.provenance, MutatedProvenance):
            return self.provenance.trajectory
        return ()

    def with_statements(
        self, statements: tuple[ClassifiedStatement, ...], new_id: str, rule_id: str
    ) -> TestCase:
        """Derived case extending the mutation trajectory by one rule."""
        if isinstance(self.provenance, MutatedProvenance):
            prov = MutatedProvenance(
                self.provenance.parent_id, self.provenance.trajectory + (rule_id,)
            )
        else:
            prov = MutatedProvenance(self.id, (rule_id,))
        return TestCase(new_id, statements, prov)


def case_from_texts(case_id: str, texts: list[str], provenance: Provenance) -> TestCase:
    return TestCase(case_id, tuple(classify(t) for t in texts), provenance)


def save_case(case: TestCase, directory: Path, created_at: float | None = None) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    sql_path = directory / f"{case.id}.sql"
    sql_path.write_text(case.sql_text() + "\n", encoding="utf-8")
    meta = {
        "id": case.id,
        "provenance": case.provenance.to_dict(),
        "created_at": created_at if created_at is not None else time.time(),
    }
    (directory / f"{case.id}.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return sql_path


def load_case(directory: Path, case_id: str) -> TestCase:
    from .synthesis import extract_sql  # local import: synthesis depends on this module

    raw = (directory / f"{case_id}.sql").read_text(encoding="utf-8")
    meta = json.loads((directory / f"{case_id}.json").read_text(encoding="utf-8"))
    prov_d = meta.get("provenance", {})
    if prov_d.get("type") == "mutated":
        prov: Provenance = MutatedProvenance(
            prov_d["parent_id"], tuple(prov_d.get("trajectory", []))
        )
    else:
        prov = SynthesizedProvenance(None, prov_d.get("strategy", "unknown"))
    return case_from_texts(meta["id"], extract_sql(raw), prov)


def load_cases(directory: Path) -> list[TestCase]:
    cases = []
    for meta_path in sorted(directory.glob("*.json")):
        cases.append(load_case(directory, meta_path.stem))
    return cases
