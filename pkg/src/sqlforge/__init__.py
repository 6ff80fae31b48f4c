"""Coverage-guided SQL test case generation harness.

Two-stage pipeline: feature-guided, error-driven synthesis of SQL test
cases through a pluggable text-generation backend, then Monte Carlo Tree
Search over (seed, mutation-rule) trajectories rewarded by code-coverage
feedback.
"""

from .campaign import CampaignConfig, CampaignReport, run_campaign
from .catalog import (
    Feature,
    FeatureCatalog,
    FeatureCategory,
    FeatureSelection,
    SamplingConfig,
    load_catalog,
    sample_random_flat,
    sample_selection,
)
from .cases import MutatedProvenance, SynthesizedProvenance, TestCase
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
from .harness import (
    CaseOutcome,
    ExecutionReport,
    ExternalProcessDriver,
    SqliteDriver,
    classify_outcome,
)
from .llm import (
    GenerationRequest,
    GenerationResponse,
    HttpBackend,
    MockBackend,
    MockScript,
    TemplateBackend,
)
from .mcts import (
    CoverageEvaluator,
    MutationSearch,
    Reward,
    SearchConfig,
    Trajectory,
    run_search,
    uct_score,
)
from .mutations import (
    DEFAULT_REGISTRY,
    MutationOutcome,
    MutationRule,
    RuleRegistry,
    applicable,
    apply,
    rule_menu,
)
from .statements import ClassifiedStatement, StatementKind, classify, locate_targets, tokenize
from .synthesis import (
    ErrorEntry,
    ErrorKind,
    ErrorMemory,
    PromptBundle,
    build_prompt,
    build_simple_prompt,
    extract_sql,
    synthesize_one,
)

__version__ = "0.1.0"
