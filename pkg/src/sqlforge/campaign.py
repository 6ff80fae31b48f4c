"""Two-stage campaign orchestrator.

Stage I synthesizes test cases from the feature catalog until the budget is
spent or coverage growth plateaus; passing cases become the seed pool.
Stage II mutates the seeds with the configured strategy (MCTS by default)
under coverage feedback.  The whole run is reproducible for a fixed seed
and an offline backend.
"""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .cases import MutatedProvenance, TestCase, case_from_texts, save_case
from .catalog import FeatureCatalog, SamplingConfig, load_catalog
from .coverage import (
    CoverageSnapshot,
    ModuleMap,
    PlateauDetector,
    SyntheticOracle,
    diff_new_branches,
    merge,
    module_rates,
    parse_lcov,
    render_lcov,
)
from .errors import (
    ConfigError,
    EmptySeedPool,
    NoSqlFound,
    SearchExhausted,
    SynthesisFailure,
)
from .harness import ExternalProcessDriver, SqliteDriver, classify_outcome
from .llm import (
    DEFAULT_TIMEOUT_SECS,
    GenerationRequest,
    HttpBackend,
    MockBackend,
    TemplateBackend,
)
from .mcts import (
    CoverageEvaluator,
    MutationSearch,
    Reward,
    SearchConfig,
    SearchResult,
    Trajectory,
    record_execution_errors,
)
from .mutations import DEFAULT_REGISTRY, RuleRegistry, registry_from_manifest
from .statements import StatementKind
from .synthesis import (
    ErrorMemory,
    SynthesisConfig,
    extract_sql,
    synthesize_one,
)
from .util import derive_rng

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"

SYNTHESIS_STRATEGIES = ("hierarchical", "random-feature", "simple")
MUTATION_STRATEGIES = ("mcts", "random-rule", "simple-instruction", "none")


@dataclass
class CampaignConfig:
    dialect: str = "sqlite"
    catalog_path: str | None = None
    rules_manifest_path: str | None = None
    module_map_path: str | None = None
    backend: dict = field(default_factory=lambda: {"kind": "template"})
    driver: dict = field(default_factory=lambda: {"kind": "sqlite", "supervised": True})
    coverage: dict = field(default_factory=lambda: {"mode": "synthetic"})
    synthesis_strategy: str = "hierarchical"
    mutation_strategy: str = "mcts"
    stage1_budget: int = 900
    min_features: int = 3
    max_features: int = 20
    diversity: bool = True
    iterations: int = 600
    exploration_c: float = 1.414
    reward_mode: str = "incremental"
    reward_norm: int = 50
    term_window: int = 10
    term_threshold: int = 50
    plateau_window: int = 100
    plateau_threshold: int = 50
    workers: int = 3
    timeout_secs: float = 10.0
    llm_timeout_secs: float = DEFAULT_TIMEOUT_SECS
    error_capacity: int = 64
    error_digest_k: int = 5
    max_retries: int = 3
    seed_pool_cap: int = 50
    persist_top_mutants: int = 25
    figures: bool = True
    outdir: str = "campaign-out"
    seed: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.synthesis_strategy not in SYNTHESIS_STRATEGIES:
            raise ConfigError(f"unknown synthesis strategy {self.synthesis_strategy!r}")
        if self.mutation_strategy not in MUTATION_STRATEGIES:
            raise ConfigError(f"unknown mutation strategy {self.mutation_strategy!r}")
        if self.stage1_budget < 1:
            raise ConfigError("stage1_budget must be >= 1")
        if not 1 <= self.min_features <= self.max_features:
            raise ConfigError("feature range must satisfy 1 <= min <= max")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.exploration_c < 0:
            raise ConfigError("exploration_c must be >= 0")
        if self.reward_mode not in ("incremental", "absolute"):
            raise ConfigError(f"unknown reward mode {self.reward_mode!r}")
        if self.plateau_window < 1 or self.plateau_threshold < 0:
            raise ConfigError("invalid plateau settings")
        if self.term_window < 1 or self.term_threshold < 0:
            raise ConfigError("invalid early-termination settings")
        if self.timeout_secs < 0 or self.llm_timeout_secs <= 0:
            raise ConfigError("invalid timeout settings")
        kind = self.backend.get("kind")
        if kind not in ("template", "mock", "live"):
            raise ConfigError(f"unknown backend kind {kind!r}")
        if kind == "mock" and "script" not in self.backend:
            raise ConfigError("mock backend needs a 'script' path")
        if self.driver.get("kind") not in ("sqlite", "external"):
            raise ConfigError(f"unknown driver kind {self.driver.get('kind')!r}")
        if self.coverage.get("mode") not in ("synthetic", "lcov", "none"):
            raise ConfigError(f"unknown coverage mode {self.coverage.get('mode')!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> CampaignConfig:
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> CampaignConfig:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self, include_paths: bool = True) -> dict:
        doc = {
            name: getattr(self, name)
            for name in self.__dataclass_fields__  # type: ignore[attr-defined]
        }
        if not include_paths:
            doc.pop("outdir", None)
        return doc


@dataclass
class CampaignReport:
    dialect: str
    seed: int
    config: dict
    stage1: dict
    stage2: dict | None
    final_rates: dict
    module_table: dict | None

    def to_dict(self) -> dict:
        return {
            "dialect": self.dialect,
            "seed": self.seed,
            "config": self.config,
            "stage1": self.stage1,
            "stage2": self.stage2,
            "final_rates": self.final_rates,
            "module_table": self.module_table,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> CampaignReport:
        return cls(
            dialect=doc["dialect"],
            seed=doc["seed"],
            config=doc["config"],
            stage1=doc["stage1"],
            stage2=doc.get("stage2"),
            final_rates=doc["final_rates"],
            module_table=doc.get("module_table"),
        )


def default_catalog_path(dialect: str) -> Path:
    return DATA_DIR / f"{dialect}_catalog.json"


def build_backend(cfg: CampaignConfig):
    kind = cfg.backend["kind"]
    if kind == "template":
        return TemplateBackend()
    if kind == "mock":
        return MockBackend.from_file(cfg.backend["script"])
    return HttpBackend.from_env(timeout_secs=cfg.llm_timeout_secs)


def build_driver(cfg: CampaignConfig):
    spec = cfg.driver
    if spec["kind"] == "sqlite":
        return SqliteDriver(supervised=bool(spec.get("supervised", True)))
    return ExternalProcessDriver(
        command=list(spec.get("command", [])),
        crash_exit_codes=tuple(spec.get("crash_exit_codes", [])),
        sql_via=spec.get("sql_via", "stdin"),
    )


def build_registry(cfg: CampaignConfig) -> RuleRegistry:
    if cfg.rules_manifest_path:
        return registry_from_manifest(cfg.rules_manifest_path)
    return DEFAULT_REGISTRY


class CoverageSource:
    """Per-case coverage snapshots from the configured source."""

    def __init__(self, cfg: CampaignConfig):
        self.mode = cfg.coverage["mode"]
        self.oracle: SyntheticOracle | None = None
        self.tracefile: Path | None = None
        if self.mode == "synthetic":
            spec = cfg.coverage.get("oracle")
            if spec is None:
                raise ConfigError("synthetic coverage needs an 'oracle' file or object")
            if isinstance(spec, dict):
                self.oracle = SyntheticOracle.from_dict(spec)
            else:
                self.oracle = SyntheticOracle.from_file(spec)
        elif self.mode == "lcov":
            path = cfg.coverage.get("tracefile")
            if not path:
                raise ConfigError("lcov coverage needs a 'tracefile' path")
            self.tracefile = Path(path)

    def snapshot_for(self, case: TestCase) -> CoverageSnapshot:
        if self.oracle is not None:
            return self.oracle.evaluate(case)
        if self.tracefile is not None and self.tracefile.exists():
            return parse_lcov(self.tracefile)
        return CoverageSnapshot.empty()


def _rates(snapshot: CoverageSnapshot) -> dict:
    return {
        "line": snapshot.line_rate,
        "function": snapshot.function_rate,
        "branch": snapshot.branch_rate,
    }


class CampaignRunner:
    def __init__(self, cfg: CampaignConfig):
        self.cfg = cfg
        self.seed = cfg.seed if cfg.seed is not None else random.SystemRandom().getrandbits(32)
        catalog_path = cfg.catalog_path or default_catalog_path(cfg.dialect)
        self.catalog: FeatureCatalog = load_catalog(catalog_path)
        if self.catalog.dialect != cfg.dialect:
            raise ConfigError(
                f"catalog dialect {self.catalog.dialect!r} does not match {cfg.dialect!r}"
            )
        self.registry = build_registry(cfg)
        if cfg.dialect not in self.registry.dialects():
            raise ConfigError(f"no mutation rules for dialect {cfg.dialect!r}")
        self.backend = build_backend(cfg)
        self.driver = build_driver(cfg)
        self.source = CoverageSource(cfg)
        self.memory = ErrorMemory(cfg.error_capacity)
        self.cumulative = CoverageSnapshot.empty()
        self.outdir = Path(cfg.outdir)
        self.cases_dir = self.outdir / "cases"
        self.coverage_dir = self.outdir / "coverage"

    # -- shared execution path ------------------------------------------------

    def run_case(self, case: TestCase):
        report = self.driver.execute_case(case, self.cfg.timeout_secs)
        snapshot = self.source.snapshot_for(case)
        return report, snapshot

    def _persist(self, case: TestCase, snapshot: CoverageSnapshot) -> None:
        save_case(case, self.cases_dir)
        if self.source.mode != "none":
            self.coverage_dir.mkdir(parents=True, exist_ok=True)
            (self.coverage_dir / f"{case.id}.info").write_text(
                render_lcov(snapshot), encoding="utf-8"
            )

    # -- stage I ---------------------------------------------------------------

    def run_stage1(self) -> tuple[dict, list[TestCase]]:
        cfg = self.cfg
        synth_cfg = SynthesisConfig(
            sampling=SamplingConfig(cfg.min_features, cfg.max_features, cfg.diversity),
            strategy=cfg.synthesis_strategy,
            error_digest_k=cfg.error_digest_k,
            max_retries=cfg.max_retries,
        )
        detector = PlateauDetector(cfg.plateau_window, cfg.plateau_threshold)
        series: list[dict] = []
        outcome_counts: dict[str, int] = {}
        scored_passes: list[tuple[int, int, TestCase]] = []  # (-gain, index, case)
        failures = 0
        produced = 0
        plateau_at: int | None = None

        def synthesize(attempt: int) -> TestCase:
            rng = derive_rng(self.seed, "synth", attempt)
            return synthesize_one(
                self.catalog,
                self.memory,
                self.backend,
                rng,
                synth_cfg,
                case_id=f"case-{attempt:05d}",
            )

        parallel = (
            cfg.workers > 1 and getattr(self.backend, "parallel_safe", False)
        )
        pool = ThreadPoolExecutor(max_workers=cfg.workers) if parallel else None
        try:
            attempt = 0
            stop = False
            while attempt < cfg.stage1_budget and not stop:
                chunk = min(cfg.workers if parallel else 1, cfg.stage1_budget - attempt)
                if pool is not None:
                    futures = [pool.submit(synthesize, attempt + j) for j in range(chunk)]
                    results = []
                    for fut in futures:
                        try:
                            results.append(fut.result())
                        except SynthesisFailure:
                            results.append(None)
                else:
                    results = []
                    for j in range(chunk):
                        try:
                            results.append(synthesize(attempt + j))
                        except SynthesisFailure:
                            results.append(None)
                attempt += chunk
                for case in results:
                    if case is None:
                        failures += 1
                        continue
                    report, snapshot = self.run_case(case)
                    outcome = classify_outcome(report)
                    outcome_counts[outcome.value] = outcome_counts.get(outcome.value, 0) + 1
                    record_execution_errors(self.memory, case, report)
                    gain = diff_new_branches(self.cumulative, snapshot)
                    self.cumulative = merge(self.cumulative, snapshot)
                    produced += 1
                    series.append(
                        {
                            "index": produced,
                            "case_id": case.id,
                            "outcome": outcome.value,
                            "new_branches": gain,
                            **_rates(self.cumulative),
                        }
                    )
                    self._persist(case, snapshot)
                    if outcome.value == "pass":
                        scored_passes.append((-gain, produced, case))
                    if detector.push(gain):
                        plateau_at = produced
                        stop = True
                        logger.info(
                            "coverage plateau after %d cases; moving to mutation stage",
                            produced,
                        )
                        break
        finally:
            if pool is not None:
                pool.shutdown(wait=False, cancel_futures=True)

        scored_passes.sort(key=lambda t: (t[0], t[1]))
        seeds = [case for _, _, case in scored_passes[: cfg.seed_pool_cap]]
        logger.info(
            "stage I done: %d cases (%d synthesis failures), %d seeds, branch rate %.1f%%",
            produced,
            failures,
            len(seeds),
            self.cumulative.branch_rate * 100,
        )
        stage1 = {
            "budget": cfg.stage1_budget,
            "strategy": cfg.synthesis_strategy,
            "cases": produced,
            "synthesis_failures": failures,
            "outcomes": dict(sorted(outcome_counts.items())),
            "plateau_fired": plateau_at is not None,
            "transition_at": plateau_at,
            "seed_pool": [c.id for c in seeds],
            "series": series,
            "final": _rates(self.cumulative),
        }
        return stage1, seeds

    # -- stage II ---------------------------------------------------------------

    def run_stage2(self, seeds: list[TestCase]) -> tuple[dict | None, SearchResult | None]:
        cfg = self.cfg
        if cfg.mutation_strategy == "none" or cfg.iterations == 0:
            return None, None
        if not seeds:
            logger.warning("no passing cases to mutate; stage II skipped")
            return {"strategy": cfg.mutation_strategy, "skipped": "empty seed pool"}, None
        logger.info(
            "stage II: %s over %d seeds, %d iterations",
            cfg.mutation_strategy,
            len(seeds),
            cfg.iterations,
        )

        seed_pool = {c.id: c for c in seeds}
        series: list[dict] = []
        evaluator = CoverageEvaluator(
            seed_pool,
            self.registry,
            self.run_case,
            mode=cfg.reward_mode,
            reward_norm=cfg.reward_norm,
            error_memory=self.memory,
            cumulative=self.cumulative,
        )

        def record(reward: Reward) -> Reward:
            series.append(
                {
                    "index": len(series) + 1,
                    "case_id": reward.case_id,
                    "value": reward.value,
                    "new_branches": reward.new_branches,
                    **_rates(evaluator.cumulative),
                }
            )
            return reward

        def recording_evaluator(trajectory: Trajectory, rng) -> Reward:
            return record(evaluator(trajectory, rng))

        rng = derive_rng(self.seed, "stage2", cfg.mutation_strategy)
        result: SearchResult | None = None
        rewards: list[Reward]
        exhausted = False
        pruned: list[str] = []

        if cfg.mutation_strategy == "mcts":
            search_cfg = SearchConfig(
                exploration_c=cfg.exploration_c,
                iterations=cfg.iterations,
                term_window=cfg.term_window,
                term_threshold=cfg.term_threshold,
                reward_mode=cfg.reward_mode,
                reward_norm=cfg.reward_norm,
            )
            search = MutationSearch(
                search_cfg,
                [c.id for c in seeds],
                self.registry,
                cfg.dialect,
                recording_evaluator,
                rng,
            )
            try:
                result = search.run()
            except SearchExhausted as exc:
                result = exc.result
            rewards = result.rewards
            exhausted = result.exhausted
            pruned = result.pruned_seeds
        elif cfg.mutation_strategy == "random-rule":
            rewards = run_random_rule_mutation(
                cfg.iterations,
                [c.id for c in seeds],
                self.registry,
                cfg.dialect,
                recording_evaluator,
                rng,
            )
        else:  # simple-instruction
            rewards = self._run_simple_instruction_mutation(seeds, evaluator, record, rng)

        self.cumulative = evaluator.cumulative
        ranked = sorted(rewards, key=lambda r: (-r.value, -r.new_branches, r.case_id))
        for reward in ranked[: cfg.persist_top_mutants]:
            if reward.case is not None:
                self._persist(reward.case, self.source.snapshot_for(reward.case))
        tree_summary = None
        if result is not None:
            nodes = 0
            stack = [result.root]
            while stack:
                node = stack.pop()
                nodes += 1
                stack.extend(node.children.values())
            tree_summary = {
                "nodes": nodes,
                "root_visits": result.root.visits,
                "root_actions": {
                    action: {"visits": edge.visits, "reward": edge.reward}
                    for action, edge in sorted(result.root.edges.items())
                },
            }
        stage2 = {
            "strategy": cfg.mutation_strategy,
            "iterations": cfg.iterations,
            "evaluations": len(rewards),
            "exhausted": exhausted,
            "pruned_seeds": pruned,
            "new_branches": sum(r.new_branches for r in rewards),
            "tree": tree_summary,
            "series": series,
            "top": [
                {
                    "case_id": r.case_id,
                    "value": r.value,
                    "new_branches": r.new_branches,
                    "trajectory": list(r.trajectory.as_tuple()),
                }
                for r in ranked[:10]
            ],
            "final": _rates(self.cumulative),
        }
        return stage2, result

    def _run_simple_instruction_mutation(
        self, seeds: list[TestCase], evaluator: CoverageEvaluator, record, rng
    ) -> list[Reward]:
        """Prompt-only mutation baseline: no rules, no tree statistics."""
        rewards: list[Reward] = []
        for t in range(self.cfg.iterations):
            seed_case = seeds[rng.randrange(len(seeds))]
            request = GenerationRequest(
                "You are an expert database testing engineer.",
                "Mutate this SQL test case to explore new behavior. "
                "Respond with executable SQL only.\n\n" + seed_case.sql_text(),
            )
            response = self.backend.generate(request)
            try:
                texts = extract_sql(response.raw_text)
            except NoSqlFound:
                continue
            case = case_from_texts(
                f"pm-{t:05d}",
                texts,
                MutatedProvenance(seed_case.id, ("prompt.mutate",)),
            )
            reward = evaluator.score_case(case, Trajectory(seed=seed_case.id))
            rewards.append(record(reward))
        return rewards

    # -- report ----------------------------------------------------------------

    def run(self) -> CampaignReport:
        stage1, seeds = self.run_stage1()
        stage2, result = self.run_stage2(seeds)
        module_table = None
        if self.cfg.module_map_path:
            mmap = ModuleMap.from_file(self.cfg.module_map_path)
            counts = module_rates(self.cumulative, mmap)
            module_table = {
                module: {dim: list(pair) for dim, pair in dims.items()}
                for module, dims in counts.items()
            }
        report = CampaignReport(
            dialect=self.cfg.dialect,
            seed=self.seed,
            config=self.cfg.to_dict(include_paths=False),
            stage1=stage1,
            stage2=stage2,
            final_rates=_rates(self.cumulative),
            module_table=module_table,
        )
        self._write_outputs(report, result)
        return report

    def _write_outputs(self, report: CampaignReport, result: SearchResult | None) -> None:
        from .report import render_report, render_figures, write_series_csv

        self.outdir.mkdir(parents=True, exist_ok=True)
        (self.outdir / "report.json").write_bytes(render_report(report, "json"))
        (self.outdir / "report.txt").write_bytes(render_report(report, "text"))
        write_series_csv(report, self.outdir / "coverage_series.csv")
        if result is not None:
            (self.outdir / "tree.json").write_text(
                json.dumps(result.tree_stats(), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
        if self.cfg.figures:
            render_figures(report, self.outdir / "figures")


def run_random_rule_mutation(
    iterations: int,
    seed_ids: list[str],
    registry: RuleRegistry,
    dialect: str,
    evaluator,
    rng,
) -> list[Reward]:
    """Uniform (seed, DDL, DML, DQL) sampling with no tree statistics."""
    if not seed_ids:
        raise EmptySeedPool("random-rule mutation needs seeds")
    menus = (
        list(seed_ids),
        registry.menu(dialect, StatementKind.DDL),
        registry.menu(dialect, StatementKind.DML),
        registry.menu(dialect, StatementKind.DQL),
    )
    rewards = []
    for _ in range(iterations):
        trajectory = Trajectory(
            seed=menus[0][rng.randrange(len(menus[0]))],
            ddl=menus[1][rng.randrange(len(menus[1]))],
            dml=menus[2][rng.randrange(len(menus[2]))],
            dql=menus[3][rng.randrange(len(menus[3]))],
        )
        rewards.append(evaluator(trajectory, rng))
    return rewards


def run_campaign(cfg: CampaignConfig) -> CampaignReport:
    return CampaignRunner(cfg).run()
