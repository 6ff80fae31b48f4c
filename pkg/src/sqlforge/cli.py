"""Command-line interface.

Subcommands: ``campaign run``, ``synthesize``, ``mutate``,
``coverage parse|diff|report``, ``tree dump``.  Config-file values override
defaults, command-line flags override the file.  Exit codes: 0 success,
2 config error, 3 backend error, 4 driver error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .campaign import CampaignConfig, run_campaign
from .catalog import SamplingConfig, load_catalog
from .coverage import (
    ModuleMap,
    diff_new_branches,
    module_rates,
    parse_lcov,
    rate,
)
from .errors import BackendError, ConfigError, DriverUnavailable, SqlforgeError
from .harness import SqliteDriver, classify_outcome
from .llm import DEFAULT_TIMEOUT_SECS, HttpBackend, MockBackend, TemplateBackend
from .mutations import DEFAULT_REGISTRY, registry_from_manifest
from .synthesis import ErrorMemory, SynthesisConfig, synthesize_one
from .util import derive_rng

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DRIVER = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqlforge",
        description="Coverage-guided SQL test case generation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    campaign = sub.add_parser("campaign", help="full two-stage campaigns")
    campaign_sub = campaign.add_subparsers(dest="subcommand", required=True)
    run_p = campaign_sub.add_parser("run", help="run a campaign from a config file")
    run_p.add_argument("--config", type=Path, help="campaign config JSON")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--outdir", type=Path, default=None)
    run_p.add_argument("--dialect", default=None)
    run_p.add_argument("--catalog", type=Path, default=None)
    run_p.add_argument("--budget", type=int, default=None, help="stage-I case budget")
    run_p.add_argument("--iterations", type=int, default=None, help="stage-II iterations")
    run_p.add_argument("--workers", type=int, default=None)
    run_p.add_argument("--synthesis-strategy", default=None,
                       choices=["hierarchical", "random-feature", "simple"])
    run_p.add_argument("--mutation-strategy", default=None,
                       choices=["mcts", "random-rule", "simple-instruction", "none"])
    run_p.add_argument("--llm-timeout-secs", type=float, default=None,
                       help=f"live backend timeout (default {DEFAULT_TIMEOUT_SECS:g})")
    run_p.add_argument("--no-figures", action="store_true")
    run_p.set_defaults(func=cmd_campaign_run)

    synth = sub.add_parser("synthesize", help="stage-I synthesis only")
    synth.add_argument("--catalog", type=Path, required=True)
    synth.add_argument("--count", type=int, default=10)
    synth.add_argument("--backend", choices=["template", "mock", "live"], default="template")
    synth.add_argument("--mock-script", type=Path, default=None)
    synth.add_argument("--strategy", default="hierarchical",
                       choices=["hierarchical", "random-feature", "simple"])
    synth.add_argument("--min-features", type=int, default=3)
    synth.add_argument("--max-features", type=int, default=20)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--outdir", type=Path, default=Path("synthesized"))
    synth.add_argument("--llm-timeout-secs", type=float, default=DEFAULT_TIMEOUT_SECS)
    synth.set_defaults(func=cmd_synthesize)

    mutate = sub.add_parser("mutate", help="stage-II mutation over existing cases")
    mutate.add_argument("--cases", type=Path, required=True, help="directory of seed cases")
    mutate.add_argument("--oracle", type=Path, required=True, help="synthetic oracle JSON")
    mutate.add_argument("--strategy", choices=["mcts", "random-rule"], default="mcts")
    mutate.add_argument("--iterations", type=int, default=600)
    mutate.add_argument("--seed", type=int, default=0)
    mutate.add_argument("--manifest", type=Path, default=None)
    mutate.add_argument("--outdir", type=Path, default=Path("mutated"))
    mutate.set_defaults(func=cmd_mutate)

    coverage = sub.add_parser("coverage", help="lcov tracefile operations")
    coverage_sub = coverage.add_subparsers(dest="subcommand", required=True)
    parse_p = coverage_sub.add_parser("parse", help="parse a tracefile, print rates")
    parse_p.add_argument("tracefile", type=Path)
    parse_p.add_argument("--json", action="store_true")
    parse_p.set_defaults(func=cmd_coverage_parse)
    diff_p = coverage_sub.add_parser("diff", help="new branches in RUN vs BASE")
    diff_p.add_argument("base", type=Path)
    diff_p.add_argument("run", type=Path)
    diff_p.set_defaults(func=cmd_coverage_diff)
    report_p = coverage_sub.add_parser("report", help="rates plus module attribution")
    report_p.add_argument("tracefile", type=Path)
    report_p.add_argument("--module-map", type=Path, default=None)
    report_p.add_argument("--figures", type=Path, default=None,
                          help="directory for rendered PNG figures")
    report_p.add_argument("--json", action="store_true")
    report_p.set_defaults(func=cmd_coverage_report)

    tree = sub.add_parser("tree", help="search tree inspection")
    tree_sub = tree.add_subparsers(dest="subcommand", required=True)
    dump_p = tree_sub.add_parser("dump", help="summarize a tree.json export")
    dump_p.add_argument("tree_json", type=Path)
    dump_p.add_argument("--top", type=int, default=10)
    dump_p.add_argument("--full", action="store_true", help="print the raw JSON")
    dump_p.set_defaults(func=cmd_tree_dump)

    return parser


def cmd_campaign_run(args) -> int:
    doc: dict = {}
    if args.config is not None:
        cfg = CampaignConfig.from_file(args.config)
        doc = cfg.to_dict()
    overrides = {
        "seed": args.seed,
        "outdir": str(args.outdir) if args.outdir else None,
        "dialect": args.dialect,
        "catalog_path": str(args.catalog) if args.catalog else None,
        "stage1_budget": args.budget,
        "iterations": args.iterations,
        "workers": args.workers,
        "synthesis_strategy": args.synthesis_strategy,
        "mutation_strategy": args.mutation_strategy,
        "llm_timeout_secs": args.llm_timeout_secs,
    }
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    if args.no_figures:
        doc["figures"] = False
    report = run_campaign(CampaignConfig.from_dict(doc))
    outdir = Path(doc.get("outdir", "campaign-out"))
    print(f"campaign complete: {report.stage1['cases']} stage-I cases")
    print(f"final coverage: line={report.final_rates['line']:.1%} "
          f"function={report.final_rates['function']:.1%} "
          f"branch={report.final_rates['branch']:.1%}")
    print(f"outputs in {outdir}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    catalog = load_catalog(args.catalog)
    if args.backend == "template":
        backend = TemplateBackend()
    elif args.backend == "mock":
        if args.mock_script is None:
            raise ConfigError("--mock-script is required with --backend mock")
        backend = MockBackend.from_file(args.mock_script)
    else:
        backend = HttpBackend.from_env(timeout_secs=args.llm_timeout_secs)
    memory = ErrorMemory()
    driver = SqliteDriver(supervised=False)
    cfg = SynthesisConfig(
        sampling=SamplingConfig(args.min_features, args.max_features),
        strategy=args.strategy,
    )
    from .cases import save_case
    from .errors import SynthesisFailure
    from .mcts import record_execution_errors

    produced = 0
    for i in range(args.count):
        rng = derive_rng(args.seed, "synth", i)
        try:
            case = synthesize_one(catalog, memory, backend, rng, cfg, case_id=f"case-{i:05d}")
        except SynthesisFailure as exc:
            print(f"case-{i:05d}: synthesis failed ({exc})")
            continue
        report = driver.execute_case(case)
        outcome = classify_outcome(report)
        record_execution_errors(memory, case, report)
        save_case(case, args.outdir)
        produced += 1
        print(f"{case.id}: {len(case.statements)} statements, {outcome.value}")
    print(f"{produced}/{args.count} cases written to {args.outdir}")
    return EXIT_OK


def cmd_mutate(args) -> int:
    from .cases import load_cases, save_case
    from .coverage import SyntheticOracle
    from .errors import SearchExhausted
    from .mcts import CoverageEvaluator, MutationSearch, SearchConfig
    from .campaign import run_random_rule_mutation

    seeds = load_cases(args.cases)
    if not seeds:
        raise ConfigError(f"no cases found in {args.cases}")
    oracle = SyntheticOracle.from_file(args.oracle)
    registry = registry_from_manifest(args.manifest) if args.manifest else DEFAULT_REGISTRY
    driver = SqliteDriver(supervised=False)

    def collect(case):
        return driver.execute_case(case), oracle.evaluate(case)

    evaluator = CoverageEvaluator(
        {c.id: c for c in seeds}, registry, collect, error_memory=ErrorMemory()
    )
    rng = derive_rng(args.seed, "mutate", args.strategy)
    if args.strategy == "mcts":
        search = MutationSearch(
            SearchConfig(iterations=args.iterations),
            [c.id for c in seeds],
            registry,
            "sqlite",
            evaluator,
            rng,
        )
        try:
            result = search.run()
        except SearchExhausted as exc:
            result = exc.result
        rewards = result.rewards
        (args.outdir / "tree.json").parent.mkdir(parents=True, exist_ok=True)
        (args.outdir / "tree.json").write_text(
            json.dumps(result.tree_stats(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    else:
        rewards = run_random_rule_mutation(
            args.iterations, [c.id for c in seeds], registry, "sqlite", evaluator, rng
        )
    ranked = sorted(rewards, key=lambda r: (-r.value, -r.new_branches, r.case_id))
    for reward in ranked[:25]:
        if reward.case is not None:
            save_case(reward.case, args.outdir / "cases")
    total_new = sum(r.new_branches for r in rewards)
    print(f"{len(rewards)} evaluations, {total_new} new branches, "
          f"best reward {ranked[0].value:.3f}" if ranked else "no evaluations")
    print(f"outputs in {args.outdir}")
    return EXIT_OK


def _print_rates(label: str, snapshot) -> None:
    print(f"{label}: line={snapshot.line_rate:.1%} "
          f"function={snapshot.function_rate:.1%} branch={snapshot.branch_rate:.1%}")


def cmd_coverage_parse(args) -> int:
    snapshot = parse_lcov(args.tracefile)
    if args.json:
        print(json.dumps(
            {
                "line": snapshot.line_rate,
                "function": snapshot.function_rate,
                "branch": snapshot.branch_rate,
                "covered_lines": len(snapshot.lines),
                "instrumented_lines": len(snapshot.instrumented_lines),
                "covered_functions": len(snapshot.functions),
                "instrumented_functions": len(snapshot.instrumented_functions),
                "covered_branches": len(snapshot.branches),
                "instrumented_branches": len(snapshot.instrumented_branches),
            },
            indent=2,
            sort_keys=True,
        ))
    else:
        _print_rates(str(args.tracefile), snapshot)
    return EXIT_OK


def cmd_coverage_diff(args) -> int:
    base = parse_lcov(args.base)
    run = parse_lcov(args.run)
    print(diff_new_branches(base, run))
    return EXIT_OK


def cmd_coverage_report(args) -> int:
    snapshot = parse_lcov(args.tracefile)
    table = None
    if args.module_map:
        table = module_rates(snapshot, ModuleMap.from_file(args.module_map))
    if args.json:
        doc = {
            "rates": {
                "line": snapshot.line_rate,
                "function": snapshot.function_rate,
                "branch": snapshot.branch_rate,
            },
            "modules": {
                m: {dim: list(pair) for dim, pair in dims.items()}
                for m, dims in (table or {}).items()
            },
        }
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        _print_rates(str(args.tracefile), snapshot)
        if table:
            print("module line coverage (Parser Optimizer Executor Storage)")
            row = " ".join(
                f"{rate(table[m]['line']) * 100:.1f}%"
                for m in ("Parser", "Optimizer", "Executor", "Storage")
            )
            print(f"  {row}")
    if args.figures and table:
        from .report import module_figure

        serializable = {m: {d: list(p) for d, p in dims.items()} for m, dims in table.items()}
        path = module_figure(serializable, Path(args.figures) / "module_coverage.png")
        print(f"figure written to {path}")
    return EXIT_OK


def cmd_tree_dump(args) -> int:
    doc = json.loads(args.tree_json.read_text(encoding="utf-8"))
    if args.full:
        print(json.dumps(doc, indent=2, sort_keys=True))
        return EXIT_OK
    root = doc.get("root", {})
    print(f"iterations: {doc.get('iterations')}")
    print(f"pruned seeds: {', '.join(doc.get('pruned_seeds', [])) or 'none'}")
    print(f"total new branches: {doc.get('new_branches_total')}")
    actions = sorted(
        root.get("actions", {}).items(), key=lambda kv: -kv[1]["visits"]
    )
    print(f"root visits: {root.get('visits')}")
    for action, stats in actions[: args.top]:
        mean = stats["reward"] / stats["visits"] if stats["visits"] else 0.0
        print(f"  {action}: N={stats['visits']} R={stats['reward']:.3f} mean={mean:.3f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DriverUnavailable as exc:
        print(f"driver error: {exc}", file=sys.stderr)
        return EXIT_DRIVER
    except SqlforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
