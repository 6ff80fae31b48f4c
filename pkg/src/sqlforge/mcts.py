"""Monte Carlo Tree Search over mutation trajectories.

The tree is four layers deep: choosing a seed case, then one DDL, one DML,
and one DQL rule (each menu includes a NoOp).  Selection walks UCT argmax,
expansion picks a uniform untried action, rollout completes the trajectory
uniformly, and the coverage-driven reward is backpropagated along the
path.  Seeds whose recent new-branch gains stall are pruned from layer 1.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .cases import TestCase
from .coverage import CoverageSnapshot, diff_new_branches, merge
from .errors import (
    EmptySeedPool,
    NoUntriedAction,
    SearchExhausted,
    ValidationError,
)
from .harness import CaseOutcome, classify_outcome
from .mutations import MutationRule, RuleRegistry, apply
from .statements import StatementKind
from .synthesis import ErrorKind, ErrorMemory


@dataclass(frozen=True)
class Trajectory:
    seed: str | None = None
    ddl: str | None = None
    dml: str | None = None
    dql: str | None = None

    @property
    def depth(self) -> int:
        for i, value in enumerate(self.as_tuple()):
            if value is None:
                return i
        return 4

    @property
    def complete(self) -> bool:
        return self.depth == 4

    def extended(self, action: str) -> Trajectory:
        values = list(self.as_tuple())
        values[self.depth] = action
        return Trajectory(*values)

    def as_tuple(self) -> tuple[str | None, ...]:
        return (self.seed, self.ddl, self.dml, self.dql)


@dataclass
class EdgeStats:
    visits: int = 0
    reward: float = 0.0

    @property
    def mean(self) -> float:
        return self.reward / self.visits if self.visits else 0.0


@dataclass
class Node:
    trajectory: Trajectory
    menu: tuple[str, ...]
    visits: int = 0
    edges: dict[str, EdgeStats] = field(default_factory=dict)
    children: dict[str, "Node"] = field(default_factory=dict)

    @property
    def terminal(self) -> bool:
        return self.trajectory.complete


def uct_score(node: Node, action: str, c: float) -> float:
    """UCT: mean reward plus c * sqrt(ln N(v) / N(v,a)); unvisited -> inf."""
    edge = node.edges.get(action)
    if edge is None or edge.visits == 0:
        return math.inf
    return edge.mean + c * math.sqrt(math.log(node.visits) / edge.visits)


@dataclass(frozen=True)
class SearchConfig:
    exploration_c: float = 1.414
    iterations: int = 600
    term_window: int = 10
    term_threshold: int = 50  # 0 disables early termination
    reward_mode: str = "incremental"  # "incremental" | "absolute"
    reward_norm: int = 50

    def __post_init__(self):
        if self.exploration_c < 0:
            raise ValidationError("exploration constant must be >= 0")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.term_threshold < 0:
            raise ValidationError("termination threshold must be >= 0")
        if self.term_window < 1:
            raise ValidationError("termination window must be >= 1")
        if self.reward_mode not in ("incremental", "absolute"):
            raise ValidationError(f"unknown reward mode {self.reward_mode!r}")
        if self.reward_norm < 1:
            raise ValidationError("reward normalizer must be >= 1")


@dataclass(frozen=True)
class Reward:
    trajectory: Trajectory
    case_id: str
    value: float
    new_branches: int
    case: TestCase | None = None
    outcome: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValidationError(f"reward value {self.value} outside [0, 1]")


@dataclass
class SearchResult:
    rewards: list[Reward]
    root: Node
    iterations: int
    pruned_seeds: list[str]
    new_branches_total: int
    exhausted: bool = False

    def ranked(self) -> list[Reward]:
        return sorted(
            self.rewards, key=lambda r: (-r.value, -r.new_branches, r.case_id)
        )

    def tree_stats(self) -> dict:
        def dump(node: Node) -> dict:
            return {
                "trajectory": list(node.trajectory.as_tuple()),
                "visits": node.visits,
                "actions": {
                    a: {"visits": e.visits, "reward": e.reward}
                    for a, e in sorted(node.edges.items())
                },
                "children": {a: dump(c) for a, c in sorted(node.children.items())},
            }

        return {
            "iterations": self.iterations,
            "pruned_seeds": sorted(self.pruned_seeds),
            "new_branches_total": self.new_branches_total,
            "exhausted": self.exhausted,
            "root": dump(self.root),
        }


class MutationSearch:
    """One search run over (seed, DDL rule, DML rule, DQL rule) trajectories."""

    def __init__(
        self,
        cfg: SearchConfig,
        seed_ids: Sequence[str],
        registry: RuleRegistry,
        dialect: str,
        evaluator: Callable[[Trajectory, random.Random], Reward],
        rng: random.Random,
    ):
        if not seed_ids:
            raise EmptySeedPool("mutation search needs at least one seed")
        self.cfg = cfg
        self.evaluator = evaluator
        self.rng = rng
        self.menus: tuple[tuple[str, ...], ...] = (
            tuple(seed_ids),
            tuple(registry.menu(dialect, StatementKind.DDL)),
            tuple(registry.menu(dialect, StatementKind.DML)),
            tuple(registry.menu(dialect, StatementKind.DQL)),
        )
        self.root = Node(Trajectory(), self.menus[0])
        self.masked_seeds: set[str] = set()
        self._gain_windows: dict[str, deque[int]] = {
            s: deque(maxlen=cfg.term_window) for s in seed_ids
        }

    # -- core moves ---------------------------------------------------------

    def available_actions(self, node: Node) -> list[str]:
        if node is self.root:
            return [a for a in node.menu if a not in self.masked_seeds]
        return list(node.menu)

    def select(self) -> tuple[Node, list[tuple[Node, str]]]:
        """Walk UCT argmax until a terminal or not-fully-expanded node."""
        node = self.root
        path: list[tuple[Node, str]] = []
        while True:
            if node.terminal:
                return node, path
            actions = self.available_actions(node)
            if not actions:
                raise SearchExhausted("every root action is pruned")
            untried = [a for a in actions if a not in node.children]
            if untried:
                return node, path
            best = actions[0]
            best_score = uct_score(node, best, self.cfg.exploration_c)
            for action in actions[1:]:
                score = uct_score(node, action, self.cfg.exploration_c)
                if score > best_score:
                    best, best_score = action, score
            path.append((node, best))
            node = node.children[best]

    def expand(self, node: Node) -> tuple[Node, str]:
        actions = self.available_actions(node)
        untried = [a for a in actions if a not in node.children]
        if not untried:
            raise NoUntriedAction(f"node at depth {node.trajectory.depth} is fully expanded")
        action = untried[self.rng.randrange(len(untried))]
        child_traj = node.trajectory.extended(action)
        depth = child_traj.depth
        child_menu = self.menus[depth] if depth < 4 else ()
        child = Node(child_traj, child_menu)
        node.children[action] = child
        node.edges.setdefault(action, EdgeStats())
        return child, action

    def rollout(self, trajectory: Trajectory) -> Trajectory:
        while not trajectory.complete:
            menu = self.menus[trajectory.depth]
            trajectory = trajectory.extended(menu[self.rng.randrange(len(menu))])
        return trajectory

    def backpropagate(
        self, path: list[tuple[Node, str]], value: float, expanded: Node | None = None
    ) -> None:
        """Update every (node, action) pair on the path.

        The freshly expanded child gets its single expansion visit here;
        reselected terminal leaves keep N(v) = sum of action visits + 1.
        """
        for node, action in path:
            node.visits += 1
            edge = node.edges.setdefault(action, EdgeStats())
            edge.visits += 1
            edge.reward += value
        if expanded is not None:
            expanded.visits += 1

    # -- early termination ---------------------------------------------------

    def note_gain(self, seed_id: str, gain: int) -> bool:
        """Track per-seed gains; prune the seed when the full window stalls."""
        if self.cfg.term_threshold <= 0:
            return False
        window = self._gain_windows.get(seed_id)
        if window is None:
            return False
        window.append(gain)
        if len(window) == self.cfg.term_window and sum(window) < self.cfg.term_threshold:
            self.masked_seeds.add(seed_id)
            return True
        return False

    # -- driver ---------------------------------------------------------------

    def run(self) -> SearchResult:
        rewards: list[Reward] = []
        total_new = 0
        iterations = 0
        for _ in range(self.cfg.iterations):
            try:
                node, path = self.select()
            except SearchExhausted as exc:
                result = SearchResult(
                    rewards, self.root, iterations, sorted(self.masked_seeds), total_new, True
                )
                raise SearchExhausted(str(exc), result=result) from None
            if node.terminal:
                expanded = None
                trajectory = node.trajectory
            else:
                expanded, action = self.expand(node)
                path = path + [(node, action)]
                trajectory = self.rollout(expanded.trajectory)
            reward = self.evaluator(trajectory, self.rng)
            rewards.append(reward)
            total_new += reward.new_branches
            self.backpropagate(path, reward.value, expanded)
            iterations += 1
            if trajectory.seed is not None:
                self.note_gain(trajectory.seed, reward.new_branches)
        return SearchResult(
            rewards, self.root, iterations, sorted(self.masked_seeds), total_new
        )


def run_search(
    cfg: SearchConfig,
    seed_pool: Mapping[str, TestCase],
    registry: RuleRegistry,
    dialect: str,
    evaluator: Callable[[Trajectory, random.Random], Reward],
    rng: random.Random,
) -> SearchResult:
    """Run the configured number of MCTS iterations over the seed pool.

    Raises ``SearchExhausted`` (carrying the partial result) once every
    seed is pruned.
    """
    search = MutationSearch(cfg, list(seed_pool.keys()), registry, dialect, evaluator, rng)
    return search.run()


class CoverageEvaluator:
    """Turn a completed trajectory into a mutated case and a reward.

    Applies the trajectory's rules in DDL, DML, DQL order (inapplicable
    rules degrade to the category NoOp), hands the case to ``collect`` for
    execution and coverage, and scores it against cumulative coverage.
    Failed executions are worth 0 and feed the error memory.
    """

    def __init__(
        self,
        seed_pool: Mapping[str, TestCase],
        registry: RuleRegistry,
        collect: Callable[[TestCase], tuple[object | None, CoverageSnapshot]],
        mode: str = "incremental",
        reward_norm: int = 50,
        error_memory: ErrorMemory | None = None,
        cumulative: CoverageSnapshot | None = None,
    ):
        if not seed_pool:
            raise EmptySeedPool("evaluator needs a non-empty seed pool")
        self.seed_pool = dict(seed_pool)
        self.registry = registry
        self.collect = collect
        self.mode = mode
        self.reward_norm = reward_norm
        self.error_memory = error_memory
        self.cumulative = cumulative if cumulative is not None else CoverageSnapshot.empty()

    def mutate(self, trajectory: Trajectory, rng: random.Random) -> TestCase:
        case = self.seed_pool[trajectory.seed]
        for category, rule_id in (
            (StatementKind.DDL, trajectory.ddl),
            (StatementKind.DML, trajectory.dml),
            (StatementKind.DQL, trajectory.dql),
        ):
            rule: MutationRule = self.registry.get(rule_id)
            if not rule.is_applicable(case):
                rule = self.registry.noop_for(category)
            case = apply(rule, case, rng).mutated
        return case

    def __call__(self, trajectory: Trajectory, rng: random.Random) -> Reward:
        case = self.mutate(trajectory, rng)
        return self.score_case(case, trajectory)

    def score_case(self, case: TestCase, trajectory: Trajectory) -> Reward:
        """Execute, snapshot, and score one already-built case."""
        report, snapshot = self.collect(case)
        new = diff_new_branches(self.cumulative, snapshot)
        self.cumulative = merge(self.cumulative, snapshot)

        failed = False
        outcome_name = None
        if report is not None:
            outcome = classify_outcome(report)
            outcome_name = outcome.value
            failed = outcome is not CaseOutcome.PASS
            if failed and self.error_memory is not None:
                record_execution_errors(self.error_memory, case, report)

        if failed:
            value = 0.0
        elif self.mode == "absolute":
            value = snapshot.branch_rate
        else:
            value = min(1.0, new / self.reward_norm)
        return Reward(trajectory, case.id, value, new, case=case, outcome=outcome_name)


_ERROR_KIND_BY_STATUS = {
    "syntax_error": ErrorKind.SYNTAX,
    "runtime_error": ErrorKind.RUNTIME,
    "crash": ErrorKind.CRASH,
}


def record_execution_errors(memory: ErrorMemory, case: TestCase, report) -> int:
    """Feed every failed statement's message into the error memory."""
    recorded = 0
    for stmt, outcome in zip(case.statements, report.outcomes):
        kind = _ERROR_KIND_BY_STATUS.get(outcome.status.value)
        if kind is not None and outcome.detail:
            memory.record(kind, outcome.detail, stmt.text)
            recorded += 1
    return recorded
