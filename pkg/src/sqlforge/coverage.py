"""Coverage ingestion and accounting.

Reads and writes lcov tracefiles, maintains immutable set-based snapshots
that merge monotonically, attributes hits to DBMS modules, detects
coverage plateaus, and provides a deterministic synthetic oracle so the
whole pipeline can be exercised without an instrumented target.
"""

from __future__ import annotations

import fnmatch
import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .cases import TestCase
from .errors import ParseError, UniverseMismatch, ValidationError

LineKey = tuple[str, int]
FunctionKey = tuple[str, str]
BranchKey = tuple[str, int, int, int]


@dataclass(frozen=True)
class CoverageSnapshot:
    lines: frozenset[LineKey]
    functions: frozenset[FunctionKey]
    branches: frozenset[BranchKey]
    instrumented_lines: frozenset[LineKey]
    instrumented_functions: frozenset[FunctionKey]
    instrumented_branches: frozenset[BranchKey]

    def __post_init__(self):
        if not self.lines <= self.instrumented_lines:
            raise ValidationError("covered lines exceed instrumented lines")
        if not self.functions <= self.instrumented_functions:
            raise ValidationError("covered functions exceed instrumented functions")
        if not self.branches <= self.instrumented_branches:
            raise ValidationError("covered branches exceed instrumented branches")

    @classmethod
    def empty(cls) -> CoverageSnapshot:
        return cls(
            frozenset(), frozenset(), frozenset(), frozenset(), frozenset(), frozenset()
        )

    @staticmethod
    def _rate(covered: frozenset, instrumented: frozenset) -> float:
        return len(covered) / len(instrumented) if instrumented else 0.0

    @property
    def line_rate(self) -> float:
        return self._rate(self.lines, self.instrumented_lines)

    @property
    def function_rate(self) -> float:
        return self._rate(self.functions, self.instrumented_functions)

    @property
    def branch_rate(self) -> float:
        return self._rate(self.branches, self.instrumented_branches)

    def files(self) -> set[str]:
        out = {f for f, _ in self.instrumented_lines}
        out.update(f for f, _ in self.instrumented_functions)
        out.update(f for f, *_ in self.instrumented_branches)
        return out


def _check_compatible(a: CoverageSnapshot, b: CoverageSnapshot) -> None:
    """Shared files must agree on their instrumented universes."""
    shared = a.files() & b.files()
    if not shared:
        return
    for name, sel in (
        ("lines", lambda s: s.instrumented_lines),
        ("functions", lambda s: s.instrumented_functions),
        ("branches", lambda s: s.instrumented_branches),
    ):
        in_a = {e for e in sel(a) if e[0] in shared}
        in_b = {e for e in sel(b) if e[0] in shared}
        if in_a != in_b:
            raise UniverseMismatch(
                f"instrumented {name} differ for shared files: "
                f"{sorted(in_a ^ in_b)[:4]}..."
            )


def merge(a: CoverageSnapshot, b: CoverageSnapshot) -> CoverageSnapshot:
    """Set union per dimension; idempotent, commutative, associative."""
    _check_compatible(a, b)
    return CoverageSnapshot(
        a.lines | b.lines,
        a.functions | b.functions,
        a.branches | b.branches,
        a.instrumented_lines | b.instrumented_lines,
        a.instrumented_functions | b.instrumented_functions,
        a.instrumented_branches | b.instrumented_branches,
    )


def diff_new_branches(cumulative: CoverageSnapshot, run: CoverageSnapshot) -> int:
    _check_compatible(cumulative, run)
    return len(run.branches - cumulative.branches)


# ---------------------------------------------------------------------------
# lcov tracefiles

def parse_lcov(source: str | Path) -> CoverageSnapshot:
    """Parse an lcov tracefile (SF/FN/FNDA/DA/BRDA/end_of_record records)."""
    path = Path(source)
    text = path.read_text(encoding="utf-8")
    return parse_lcov_text(text, origin=str(path))


def parse_lcov_text(text: str, origin: str = "<string>") -> CoverageSnapshot:
    lines_cov: set[LineKey] = set()
    lines_inst: set[LineKey] = set()
    funcs_cov: set[FunctionKey] = set()
    funcs_inst: set[FunctionKey] = set()
    br_cov: set[BranchKey] = set()
    br_inst: set[BranchKey] = set()

    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "end_of_record":
            current = None
            continue
        if line.startswith("TN:"):
            continue
        if line.startswith("SF:"):
            current = line[3:].strip()
            if not current:
                raise ParseError("SF record with empty path", path=origin, line=lineno)
            continue
        directive, _, rest = line.partition(":")
        if directive in ("FN", "FNDA", "DA", "BRDA"):
            if current is None:
                raise ParseError(
                    f"{directive} record outside of an SF section", path=origin, line=lineno
                )
        else:
            continue  # summary counters (LF, LH, ...) and unknown directives
        fields = rest.split(",")
        try:
            if directive == "FN":
                _, name = fields[0], fields[1]
                funcs_inst.add((current, name))
            elif directive == "FNDA":
                count, name = int(fields[0]), fields[1]
                funcs_inst.add((current, name))
                if count > 0:
                    funcs_cov.add((current, name))
            elif directive == "DA":
                ln, count = int(fields[0]), int(fields[1])
                lines_inst.add((current, ln))
                if count > 0:
                    lines_cov.add((current, ln))
            elif directive == "BRDA":
                ln, block, branch = int(fields[0]), int(fields[1]), int(fields[2])
                taken = fields[3]
                key = (current, ln, block, branch)
                br_inst.add(key)
                if taken not in ("-", "0"):
                    int(taken)
                    br_cov.add(key)
        except (IndexError, ValueError) as exc:
            raise ParseError(
                f"malformed {directive} record: {line!r}", path=origin, line=lineno
            ) from exc
    return CoverageSnapshot(
        frozenset(lines_cov),
        frozenset(funcs_cov),
        frozenset(br_cov),
        frozenset(lines_inst),
        frozenset(funcs_inst),
        frozenset(br_inst),
    )


def render_lcov(snapshot: CoverageSnapshot) -> str:
    """Deterministic tracefile text; ``parse_lcov_text`` inverts it."""
    out: list[str] = ["TN:"]
    for file in sorted(snapshot.files()):
        out.append(f"SF:{file}")
        funcs = sorted(n for f, n in snapshot.instrumented_functions if f == file)
        for name in funcs:
            out.append(f"FN:0,{name}")
        hit_fn = 0
        for name in funcs:
            covered = (file, name) in snapshot.functions
            hit_fn += covered
            out.append(f"FNDA:{1 if covered else 0},{name}")
        out.append(f"FNF:{len(funcs)}")
        out.append(f"FNH:{hit_fn}")
        branches = sorted(
            (ln, blk, br)
            for f, ln, blk, br in snapshot.instrumented_branches
            if f == file
        )
        hit_br = 0
        for ln, blk, br in branches:
            covered = (file, ln, blk, br) in snapshot.branches
            hit_br += covered
            out.append(f"BRDA:{ln},{blk},{br},{'1' if covered else '-'}")
        out.append(f"BRF:{len(branches)}")
        out.append(f"BRH:{hit_br}")
        lines = sorted(ln for f, ln in snapshot.instrumented_lines if f == file)
        hit_ln = 0
        for ln in lines:
            covered = (file, ln) in snapshot.lines
            hit_ln += covered
            out.append(f"DA:{ln},{1 if covered else 0}")
        out.append(f"LF:{len(lines)}")
        out.append(f"LH:{hit_ln}")
        out.append("end_of_record")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# module attribution

MODULE_NAMES = ("Parser", "Optimizer", "Executor", "Storage", "Other")


@dataclass(frozen=True)
class ModuleMapEntry:
    module: str
    globs: tuple[str, ...]
    match: str = "path"  # "path" | "function"


@dataclass(frozen=True)
class ModuleMap:
    entries: tuple[ModuleMapEntry, ...]

    def __post_init__(self):
        for entry in self.entries:
            if entry.module not in MODULE_NAMES:
                raise ValidationError(f"unknown module name {entry.module!r}")
            if entry.match not in ("path", "function"):
                raise ValidationError(f"unknown match mode {entry.match!r}")

    @classmethod
    def from_file(cls, path) -> ModuleMap:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, list):
            raise ParseError("module map must be a JSON list", path=str(path))
        return cls(
            tuple(
                ModuleMapEntry(e["module"], tuple(e["globs"]), e.get("match", "path"))
                for e in doc
            )
        )

    def module_for_path(self, file: str) -> str:
        for entry in self.entries:
            if entry.match != "path":
                continue
            if any(fnmatch.fnmatch(file, g) for g in entry.globs):
                return entry.module
        return "Other"

    def module_for_function(self, file: str, name: str) -> str:
        for entry in self.entries:
            if entry.match == "function":
                if any(fnmatch.fnmatch(name, g) for g in entry.globs):
                    return entry.module
            else:
                if any(fnmatch.fnmatch(file, g) for g in entry.globs):
                    return entry.module
        return "Other"


def module_rates(
    snapshot: CoverageSnapshot, module_map: ModuleMap
) -> dict[str, dict[str, tuple[int, int]]]:
    """Per-module (covered, instrumented) counts for each dimension."""
    out: dict[str, dict[str, list[int]]] = {
        m: {"line": [0, 0], "function": [0, 0], "branch": [0, 0]} for m in MODULE_NAMES
    }
    for key in snapshot.instrumented_lines:
        mod = module_map.module_for_path(key[0])
        out[mod]["line"][1] += 1
        out[mod]["line"][0] += key in snapshot.lines
    for key in snapshot.instrumented_functions:
        mod = module_map.module_for_function(key[0], key[1])
        out[mod]["function"][1] += 1
        out[mod]["function"][0] += key in snapshot.functions
    for key in snapshot.instrumented_branches:
        mod = module_map.module_for_path(key[0])
        out[mod]["branch"][1] += 1
        out[mod]["branch"][0] += key in snapshot.branches
    return {
        m: {dim: (c, t) for dim, (c, t) in dims.items()} for m, dims in out.items()
    }


def rate(counts: tuple[int, int]) -> float:
    covered, total = counts
    return covered / total if total else 0.0


# ---------------------------------------------------------------------------
# plateau detection

class PlateauDetector:
    """Rolling window of new-branch gains; fires when the full window stalls."""

    def __init__(self, window: int, threshold: int):
        if window < 1:
            raise ValidationError("plateau window must be >= 1")
        if threshold < 0:
            raise ValidationError("plateau threshold must be >= 0")
        self.window = window
        self.threshold = threshold
        self._gains: deque[int] = deque(maxlen=window)

    def push(self, gain: int) -> bool:
        if gain < 0:
            raise ValidationError("coverage gain cannot be negative")
        self._gains.append(gain)
        return self.check()

    def check(self) -> bool:
        return len(self._gains) == self.window and sum(self._gains) < self.threshold


def plateau(detector: PlateauDetector, gain: int) -> bool:
    return detector.push(gain)


# ---------------------------------------------------------------------------
# synthetic oracle

SYNTHETIC_FILE = "synthetic.c"


@dataclass(frozen=True)
class SyntheticOracle:
    """Deterministic coverage stand-in keyed by case markers.

    Markers are ``kw:<KEYWORD>`` for every keyword token in the case,
    ``rule:<id>`` for every applied mutation rule, and ``seed:<id>`` for
    the originating seed case.  Deep-combo unlocks grant extra branches
    only when all required markers co-occur.
    """

    universe: int
    marker_branches: tuple[tuple[str, tuple[int, ...]], ...]
    combos: tuple[tuple[frozenset[str], tuple[int, ...]], ...] = ()

    @classmethod
    def from_dict(cls, doc: dict) -> SyntheticOracle:
        markers = tuple(
            (m, tuple(ids)) for m, ids in sorted(doc.get("markers", {}).items())
        )
        combos = tuple(
            (frozenset(c["requires"]), tuple(c["grants"]))
            for c in doc.get("combos", [])
        )
        return cls(int(doc["universe"]), markers, combos)

    @classmethod
    def from_file(cls, path) -> SyntheticOracle:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def evaluate(self, case: TestCase) -> CoverageSnapshot:
        markers = case_markers(case)
        covered: set[int] = set()
        for marker, ids in self.marker_branches:
            if marker in markers:
                covered.update(ids)
        for requires, grants in self.combos:
            if requires <= markers:
                covered.update(grants)
        covered = {i for i in covered if 0 <= i < self.universe}
        return snapshot_from_branch_ids(covered, self.universe)


def case_markers(case: TestCase) -> set[str]:
    markers = {f"seed:{case.seed_origin}"}
    markers.update(f"rule:{rid}" for rid in case.applied_rules)
    for stmt in case.statements:
        markers.update(f"kw:{kw}" for kw in stmt.keywords())
    return markers


def snapshot_from_branch_ids(covered: set[int], universe: int) -> CoverageSnapshot:
    """Abstract branch ids mirrored onto all three dimensions."""
    f = SYNTHETIC_FILE
    return CoverageSnapshot(
        frozenset((f, i) for i in covered),
        frozenset((f, f"branch_{i}") for i in covered),
        frozenset((f, i, 0, 0) for i in covered),
        frozenset((f, i) for i in range(universe)),
        frozenset((f, f"branch_{i}") for i in range(universe)),
        frozenset((f, i, 0, 0) for i in range(universe)),
    )


def synthetic_evaluate(oracle: SyntheticOracle, case: TestCase) -> CoverageSnapshot:
    return oracle.evaluate(case)


def deep_combo_oracle(
    seed_ids: list[str],
    combo_seed: str,
    combo_ddl: str,
    combo_dql: str,
    ddl_menu: list[str],
    dql_menu: list[str],
    universe: int = 200,
    combo_size: int = 50,
    fingerprint: int = 11,
    ddl_bonus: int = 25,
    dql_bonus: int = 10,
    grid_cells: int = 85,
) -> SyntheticOracle:
    """Oracle with one hidden (seed, DDL, DQL) combo behind a credit gradient.

    The combo's full payout only unlocks when all three trajectory choices
    co-occur.  Around it sits a gradient a guided search can climb: the
    combo seed carries a fingerprint, its (seed, DDL-rule) and (seed,
    DQL-rule) pairs pay durable bonuses, and a lattice of one-branch
    interaction cells over (DDL, DQL) rule pairs keeps new-branch gains
    trickling while the combo seed's neighborhood is being mined.  Uniform
    random sampling sees none of this structure and only hits the full
    combo by luck.
    """
    markers: dict[str, tuple[int, ...]] = {}
    next_id = 0

    def take(count: int) -> tuple[int, ...]:
        nonlocal next_id
        ids = tuple(range(next_id, next_id + count))
        next_id += count
        return ids

    for sid in seed_ids:
        markers[f"seed:{sid}"] = take(fingerprint if sid == combo_seed else 1)

    combos: list[tuple[frozenset[str], tuple[int, ...]]] = [
        (frozenset({f"seed:{combo_seed}", f"rule:{combo_ddl}"}), take(ddl_bonus)),
        (frozenset({f"seed:{combo_seed}", f"rule:{combo_dql}"}), take(dql_bonus)),
    ]
    cells = [(combo_ddl, k) for k in dql_menu if k != combo_dql]
    cells += [(i, combo_dql) for i in ddl_menu if i != combo_ddl]
    for i in ddl_menu:
        for k in dql_menu:
            if i != combo_ddl and k != combo_dql:
                cells.append((i, k))
    for i, k in cells[:grid_cells]:
        combos.append(
            (frozenset({f"seed:{combo_seed}", f"rule:{i}", f"rule:{k}"}), take(1))
        )
    combos.append(
        (
            frozenset({f"seed:{combo_seed}", f"rule:{combo_ddl}", f"rule:{combo_dql}"}),
            take(combo_size),
        )
    )
    if next_id > universe:
        raise ValidationError(f"oracle allocation {next_id} exceeds universe {universe}")
    return SyntheticOracle(universe, tuple(sorted(markers.items())), tuple(combos))
