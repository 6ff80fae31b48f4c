from __future__ import annotations

import math
import random

import pytest

from sqlforge.coverage import snapshot_from_branch_ids
from sqlforge.errors import EmptySeedPool, SearchExhausted, ValidationError
from sqlforge.harness import ExecutionReport, StatementOutcome, StatementStatus
from sqlforge.mcts import (
    CoverageEvaluator,
    EdgeStats,
    MutationSearch,
    Node,
    Reward,
    SearchConfig,
    Trajectory,
    run_search,
    uct_score,
)
from sqlforge.mutations import DEFAULT_REGISTRY
from sqlforge.synthesis import ErrorMemory


def node_with(visits: int, edges: dict[str, tuple[int, float]]) -> Node:
    node = Node(Trajectory(), tuple(edges.keys()), visits=visits)
    for action, (n, r) in edges.items():
        node.edges[action] = EdgeStats(n, r)
    return node


class TestUctScore:
    def test_ln_one_gives_pure_mean(self):
        node = node_with(1, {"a": (1, 0.0)})
        assert uct_score(node, "a", 1.414) == 0.0

    def test_worked_example(self):
        node = node_with(10, {"a": (2, 0.5)})
        expected = 0.5 / 2 + 1.414 * math.sqrt(math.log(10) / 2)
        got = uct_score(node, "a", 1.414)
        assert abs(got - expected) < 1e-9
        assert got == pytest.approx(1.7672, abs=1e-4)

    def test_unvisited_is_infinite(self):
        node = node_with(3, {"a": (3, 1.0)})
        assert uct_score(node, "b", 1.414) == math.inf

    def test_zero_c_is_pure_exploitation(self):
        node = node_with(10, {"a": (2, 0.5), "b": (8, 7.2)})
        assert uct_score(node, "a", 0.0) == pytest.approx(0.25)
        assert uct_score(node, "b", 0.0) == pytest.approx(0.9)

    def test_fuzz_against_direct_arithmetic(self):
        rng = random.Random(12345)
        for _ in range(1000):
            nv = rng.randint(1, 10_000)
            na = rng.randint(1, nv)
            r = rng.uniform(0, na)
            c = rng.uniform(0, 3)
            node = node_with(nv, {"a": (na, r)})
            expected = r / na + c * math.sqrt(math.log(nv) / na)
            assert abs(uct_score(node, "a", c) - expected) < 1e-9


def scripted_search(
    seed_ids,
    values,
    cfg: SearchConfig | None = None,
    gains=None,
    rng_seed: int = 0,
):
    """Search over real menus with a scripted evaluator.

    ``values`` is either a constant, a per-call list, or a callable
    trajectory -> float.  ``gains`` mirrors it for new-branch counts.
    """
    cfg = cfg or SearchConfig(iterations=50, term_threshold=0)
    calls = {"n": 0}

    def evaluator(trajectory: Trajectory, _rng) -> Reward:
        i = calls["n"]
        calls["n"] += 1
        if callable(values):
            value = values(trajectory)
        elif isinstance(values, list):
            value = values[i % len(values)]
        else:
            value = values
        if gains is None:
            gain = 0
        elif callable(gains):
            gain = gains(trajectory)
        elif isinstance(gains, list):
            gain = gains[i % len(gains)]
        else:
            gain = gains
        return Reward(trajectory, f"case-{i}", value, gain)

    search = MutationSearch(
        cfg, seed_ids, DEFAULT_REGISTRY, "sqlite", evaluator, random.Random(rng_seed)
    )
    return search


class TestSelectExpand:
    def test_fresh_tree_selects_root(self):
        search = scripted_search(["s0", "s1"], 0.0)
        node, path = search.select()
        assert node is search.root
        assert path == []

    def test_tie_break_prefers_first_action(self):
        search = scripted_search(["s0", "s1", "s2"], 0.0, cfg=SearchConfig(iterations=3, term_threshold=0))
        search.run()
        # all three root edges visited once, all rewards zero: next selection
        # must walk the first action
        node, path = search.select()
        assert path[0][1] == "s0"

    def test_higher_score_edge_wins(self):
        search = scripted_search(["s0", "s1"], 0.0, cfg=SearchConfig(iterations=2, term_threshold=0))
        search.run()
        search.root.edges["s1"].reward = 5.0  # force a clear winner
        node, path = search.select()
        assert path[0][1] == "s1"

    def test_select_takes_the_higher_uct_score(self):
        # scores (1.7672, 0): N(v)=10, edge a (N=2, R=0.5), edge b (N=8, R=0)
        search = scripted_search(["s0", "s1"], 0.0, cfg=SearchConfig(iterations=2, term_threshold=0))
        search.run()
        search.root.visits = 10
        search.root.edges["s0"] = EdgeStats(2, 0.5)
        search.root.edges["s1"] = EdgeStats(8, 0.0)
        assert uct_score(search.root, "s0", 1.414) == pytest.approx(1.7672, abs=1e-4)
        _, path = search.select()
        assert path[0][1] == "s0"

    def test_zero_c_select_is_pure_exploitation(self):
        search = scripted_search(
            ["s0", "s1", "s2"], 0.0,
            cfg=SearchConfig(exploration_c=0.0, iterations=3, term_threshold=0),
        )
        search.run()
        search.root.edges["s0"].reward = 0.2
        search.root.edges["s1"].reward = 0.9
        search.root.edges["s2"].reward = 0.9  # tie with s1; lower index wins
        _, path = search.select()
        assert path[0][1] == "s1"

    def test_expand_uniform_and_deterministic(self):
        a = scripted_search(["s0", "s1", "s2"], 0.0, rng_seed=9)
        b = scripted_search(["s0", "s1", "s2"], 0.0, rng_seed=9)
        child_a, action_a = a.expand(a.root)
        child_b, action_b = b.expand(b.root)
        assert action_a == action_b
        assert child_a.trajectory == child_b.trajectory

    def test_rollout_fills_all_layers(self):
        search = scripted_search(["s0"], 0.0)
        trajectory = search.rollout(Trajectory(seed="s0"))
        assert trajectory.complete
        assert trajectory.ddl in search.menus[1]
        assert trajectory.dml in search.menus[2]
        assert trajectory.dql in search.menus[3]

    def test_rollout_of_terminal_is_identity(self):
        search = scripted_search(["s0"], 0.0)
        trajectory = Trajectory("s0", "ddl.noop", "dml.noop", "dql.noop")
        assert search.rollout(trajectory) == trajectory

    def test_rollout_deterministic(self):
        a = scripted_search(["s0"], 0.0, rng_seed=4)
        b = scripted_search(["s0"], 0.0, rng_seed=4)
        assert a.rollout(Trajectory(seed="s0")) == b.rollout(Trajectory(seed="s0"))


def walk_nodes(node: Node):
    yield node
    for child in node.children.values():
        yield from walk_nodes(child)


class TestBackpropConservation:
    def test_single_iteration_counts(self):
        search = scripted_search(["s0", "s1"], 0.7, cfg=SearchConfig(iterations=1, term_threshold=0))
        result = search.run()
        assert result.iterations == 1
        assert search.root.visits == 1
        assert sum(e.visits for e in search.root.edges.values()) == 1
        assert len(result.rewards) == 1

    def test_path_updates(self):
        search = scripted_search(["s0"], 0.8, cfg=SearchConfig(iterations=2, term_threshold=0))
        search.run()
        # iteration 1 expands the seed edge; iteration 2 walks through it and
        # expands a DDL edge below: both (v, a) pairs on the path gain visits
        assert search.root.visits == 2
        assert search.root.edges["s0"].visits == 2
        assert search.root.edges["s0"].reward == pytest.approx(1.6)
        child = search.root.children["s0"]
        assert child.visits == 2  # expansion visit + one walk-through
        assert sum(e.visits for e in child.edges.values()) == 1

    def test_scripted_500_iterations_conservation(self):
        rng = random.Random(777)
        values = [rng.random() for _ in range(500)]
        search = scripted_search(
            ["s0", "s1", "s2"], values, cfg=SearchConfig(iterations=500, term_threshold=0)
        )
        result = search.run()
        assert search.root.visits == 500
        total_reward = sum(e.reward for e in search.root.edges.values())
        assert total_reward == pytest.approx(sum(values[:500]), abs=1e-9)
        for node in walk_nodes(search.root):
            edge_sum = sum(e.visits for e in node.edges.values())
            assert edge_sum <= node.visits <= edge_sum + 1

    def test_zero_reward_still_counts_visits(self):
        search = scripted_search(["s0"], 0.0, cfg=SearchConfig(iterations=5, term_threshold=0))
        search.run()
        assert search.root.visits == 5
        assert search.root.edges["s0"].reward == 0.0

    def test_zero_rewards_spread_visits_uniformly(self):
        seeds = [f"s{i}" for i in range(5)]
        search = scripted_search(seeds, 0.0, cfg=SearchConfig(iterations=60, term_threshold=0))
        search.run()
        expected = 60 / 5
        for seed in seeds:
            assert abs(search.root.edges[seed].visits - expected) <= 1


class TestEarlyTermination:
    def test_prune_decision_matches_window_rule(self):
        search = scripted_search(["s0"], 0.0, cfg=SearchConfig(term_window=3, term_threshold=50))
        assert search.note_gain("s0", 60) is False
        assert search.note_gain("s0", 55) is False
        assert search.note_gain("s0", 49) is False  # sum 164 >= 50

        search2 = scripted_search(["s0"], 0.0, cfg=SearchConfig(term_window=3, term_threshold=50))
        assert search2.note_gain("s0", 10) is False
        assert search2.note_gain("s0", 5) is False
        assert search2.note_gain("s0", 0) is True  # sum 15 < 50
        assert "s0" in search2.masked_seeds

    def test_partial_window_never_prunes(self):
        search = scripted_search(["s0"], 0.0, cfg=SearchConfig(term_window=5, term_threshold=50))
        for gain in (0, 0, 0, 0):
            assert search.note_gain("s0", gain) is False

    def test_threshold_zero_disables(self):
        search = scripted_search(["s0"], 0.0, cfg=SearchConfig(term_window=2, term_threshold=0))
        assert search.note_gain("s0", 0) is False
        assert search.note_gain("s0", 0) is False
        assert not search.masked_seeds

    def test_pruned_seed_gets_no_more_visits(self):
        # two seeds; one yields gains, the other stalls and is pruned
        def gains(trajectory):
            return 60 if trajectory.seed == "good" else 0

        cfg = SearchConfig(iterations=40, term_window=3, term_threshold=50)
        search = scripted_search(["bad", "good"], 0.5, cfg=cfg, gains=gains)
        search.run()
        assert "bad" in search.masked_seeds
        bad_visits = search.root.edges["bad"].visits
        assert bad_visits == 3  # exactly the window, then frozen
        assert search.root.edges["good"].visits == 40 - 3

    def test_all_pruned_raises_with_partial_result(self):
        cfg = SearchConfig(iterations=50, term_window=2, term_threshold=50)
        search = scripted_search(["s0", "s1"], 0.0, cfg=cfg, gains=0)
        with pytest.raises(SearchExhausted) as exc:
            search.run()
        result = exc.value.result
        assert result is not None
        assert result.exhausted
        assert result.iterations == 4  # 2 windows of 2
        assert sorted(result.pruned_seeds) == ["s0", "s1"]


class TestRunSearch:
    def test_empty_seed_pool(self):
        with pytest.raises(EmptySeedPool):
            run_search(
                SearchConfig(), {}, DEFAULT_REGISTRY, "sqlite",
                lambda t, r: Reward(t, "x", 0.0, 0), random.Random(0),
            )

    def test_deterministic_runs(self):
        def run_once():
            search = scripted_search(
                ["s0", "s1"],
                lambda t: 0.9 if t.seed == "s1" else 0.1,
                cfg=SearchConfig(iterations=30, term_threshold=0),
                rng_seed=3,
            )
            result = search.run()
            return [(r.trajectory, r.value) for r in result.rewards]

        assert run_once() == run_once()

    def test_single_high_payoff_combo_dominates_root_visits(self):
        """The edge holding the rewarding seed must end with the max visit count."""
        seeds = [f"s{i}" for i in range(6)]
        wins = 0
        for trial in range(20):
            def value_fn(trajectory):
                return 1.0 if (trajectory.seed == "s3" and trajectory.ddl == "ddl.create_index") else 0.0

            search = scripted_search(
                seeds, value_fn,
                cfg=SearchConfig(iterations=600, term_threshold=0),
                rng_seed=trial,
            )
            result = search.run()
            best = max(search.root.edges.items(), key=lambda kv: kv[1].visits)
            wins += best[0] == "s3"
        assert wins >= 18  # >= 90% of seeded runs

    def test_tree_stats_export_shape(self):
        search = scripted_search(["s0"], 0.5, cfg=SearchConfig(iterations=5, term_threshold=0))
        result = search.run()
        stats = result.tree_stats()
        assert stats["iterations"] == 5
        assert stats["root"]["visits"] == 5
        assert "s0" in stats["root"]["actions"]
        assert stats["root"]["actions"]["s0"]["visits"] == 5


class TestSearchConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ValidationError):
            SearchConfig(exploration_c=-1)
        with pytest.raises(ValidationError):
            SearchConfig(iterations=0)
        with pytest.raises(ValidationError):
            SearchConfig(reward_mode="other")


class TestCoverageEvaluator:
    def _passing_report(self, case):
        return ExecutionReport(
            tuple(StatementOutcome(StatementStatus.OK) for _ in case.statements), 0.0
        )

    def test_incremental_reward_and_merge(self, simple_case):
        pool = {simple_case.id: simple_case}
        granted = iter([{1, 2, 3}, {3, 4}, set()])

        def collect(case):
            return self._passing_report(case), snapshot_from_branch_ids(next(granted), 100)

        evaluator = CoverageEvaluator(pool, DEFAULT_REGISTRY, collect, reward_norm=2)
        trajectory = Trajectory(simple_case.id, "ddl.noop", "dml.noop", "dql.noop")
        r1 = evaluator(trajectory, random.Random(0))
        assert r1.new_branches == 3
        assert r1.value == 1.0  # min(1, 3/2) clamps
        r2 = evaluator(trajectory, random.Random(1))
        assert r2.new_branches == 1
        assert r2.value == 0.5
        r3 = evaluator(trajectory, random.Random(2))
        assert r3.new_branches == 0
        assert r3.value == 0.0

    def test_absolute_mode_uses_branch_rate(self, simple_case):
        pool = {simple_case.id: simple_case}

        def collect(case):
            return self._passing_report(case), snapshot_from_branch_ids(set(range(30)), 100)

        evaluator = CoverageEvaluator(pool, DEFAULT_REGISTRY, collect, mode="absolute")
        reward = evaluator(
            Trajectory(simple_case.id, "ddl.noop", "dml.noop", "dql.noop"), random.Random(0)
        )
        assert reward.value == pytest.approx(0.30)

    def test_failed_execution_zero_value_and_memory_fed(self, simple_case):
        pool = {simple_case.id: simple_case}
        memory = ErrorMemory()

        def collect(case):
            outcomes = [StatementOutcome(StatementStatus.OK) for _ in case.statements]
            outcomes[0] = StatementOutcome(
                StatementStatus.RUNTIME_ERROR, "no such table: ghost"
            )
            return ExecutionReport(tuple(outcomes), 0.0), snapshot_from_branch_ids({5}, 10)

        evaluator = CoverageEvaluator(
            pool, DEFAULT_REGISTRY, collect, error_memory=memory
        )
        reward = evaluator(
            Trajectory(simple_case.id, "ddl.noop", "dml.noop", "dql.noop"), random.Random(0)
        )
        assert reward.value == 0.0
        assert reward.new_branches == 1  # coverage still observed
        assert len(memory) == 1

    def test_inapplicable_rule_degrades_to_noop(self, simple_case):
        # simple_case has no JOIN, so join_flip must degrade, not fail
        pool = {simple_case.id: simple_case}

        def collect(case):
            return self._passing_report(case), snapshot_from_branch_ids(set(), 10)

        evaluator = CoverageEvaluator(pool, DEFAULT_REGISTRY, collect)
        trajectory = Trajectory(simple_case.id, "ddl.noop", "dml.noop", "dql.join_flip")
        reward = evaluator(trajectory, random.Random(0))
        assert reward.case is not None
        assert reward.case.applied_rules == ("ddl.noop", "dml.noop", "dql.noop")
        assert reward.trajectory == trajectory  # requested trajectory preserved
