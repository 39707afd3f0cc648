import numpy as np
import pytest

from config import Config
from errors import OracleGuardError, ParameterError
from backward_engine import compute_Y, quad_coeffs, value_function
from execution_strategies import ImmediateCloseStrategy, OptimalExecutionStrategy
from market_model import build_tree
from market_model.example_builders import build_example, build_random_tree
from oracle_module import (
    GridSpec, MCConfig, brute_force_value, check_oracle_guard, first_order_check, monte_carlo_cost,
    oracle_work, verify,
)


class TestBruteForce:
    def test_one_period(self, one_period_tree):
        assert brute_force_value(one_period_tree, x=1.0) == 0.5

    def test_two_period_chain(self, two_period_chain):
        value = brute_force_value(two_period_chain, x=1.0, grid=GridSpec(rounds=3))
        assert value == pytest.approx(0.375, abs=1e-4)
        assert value >= 0.375 - 1e-12

    def test_zero_state(self, branching_tree):
        assert brute_force_value(branching_tree) >= -1e-8

    def test_no_gain_from_nothing(self, random_trees):
        trees = random_trees(20, max_depth=3, max_branching=3, unit_mean_beta=0.5, seed=15)
        trees += [build_example(name) for name in ('premature-det', 'premature-stoch', 'roundtrip-unit-mean',
                                                    'unit-resilience-step')]
        for tree in trees:
            assert brute_force_value(tree) >= -1e-8

    def test_agrees_with_analytic_value(self, random_trees):
        rng = np.random.default_rng(12)
        for tree in random_trees(50, max_depth=3, max_branching=3, unit_mean_beta=0.3, seed=9):
            x, d = rng.uniform(-2.0, 2.0, size=2)
            v = value_function(tree, tree.root, compute_Y(tree), x, d)
            brute = brute_force_value(tree, x=x, d=d)
            assert brute == pytest.approx(v, abs=1e-4 * (1.0 + abs(v)))
            assert brute >= v - 1e-9

    def test_guard(self):
        tree = build_random_tree(0, depth=5, branching=2)
        with pytest.raises(OracleGuardError, match="depth"):
            brute_force_value(tree, x=1.0)
        check_oracle_guard(tree, tree.levels[1][0])

    def test_full_four_by_four_tree_is_refused(self):
        nodes = [{'id': 0, 'time': 0, 'parent': None, 'gamma': 1.0}]
        frontier, next_id = [0], 1
        for t in range(1, 5):
            new_frontier = []
            for parent in frontier:
                for _ in range(4):
                    nodes.append({'id': next_id, 'time': t, 'parent': parent, 'prob': 0.25,
                                  'beta': 0.5, 'gamma': 1.0})
                    new_frontier.append(next_id)
                    next_id += 1
            frontier = new_frontier
        tree = build_tree({'horizon': 4, 'start': 0, 'nodes': nodes})
        assert len(tree) == 341
        assert oracle_work(tree, tree.root) > Config.ORACLE_MAX_WORK
        with pytest.raises(OracleGuardError, match="grid evaluations"):
            brute_force_value(tree, x=1.0)
        check_oracle_guard(tree, tree.levels[1][0])

    def test_small_trees_are_admitted(self, random_trees):
        for tree in random_trees(50, max_depth=3, max_branching=3, seed=9):
            check_oracle_guard(tree, tree.root)
        assert oracle_work(build_random_tree(0, depth=2, branching=1), 0) == (21 * 4) ** 2


class TestMonteCarlo:
    def test_deterministic_chain_has_no_error(self, two_period_chain):
        rule = OptimalExecutionStrategy(two_period_chain, compute_Y(two_period_chain))
        estimate = monte_carlo_cost(two_period_chain, rule, MCConfig(samples=1000))
        assert estimate.stderr == 0.0
        assert estimate.mean == pytest.approx(0.375, abs=1e-12)

    def test_within_four_standard_errors(self, random_trees):
        for tree in random_trees(10, unit_mean_beta=0.3, seed=4):
            yfield = compute_Y(tree)
            v = value_function(tree, tree.root, yfield, 1.0, 0.0)
            estimate = monte_carlo_cost(tree, OptimalExecutionStrategy(tree, yfield), MCConfig(samples=100_000))
            assert abs(estimate.mean - v) <= 4.0 * estimate.stderr + 1e-12

    def test_repeatable(self, branching_tree):
        rule = OptimalExecutionStrategy(branching_tree, compute_Y(branching_tree))
        config = MCConfig(samples=5000, seed=42)
        assert monte_carlo_cost(branching_tree, rule, config) == monte_carlo_cost(branching_tree, rule, config)

    def test_antithetic(self, branching_tree):
        yfield = compute_Y(branching_tree)
        v = value_function(branching_tree, branching_tree.root, yfield, 1.0, 0.0)
        estimate = monte_carlo_cost(branching_tree, OptimalExecutionStrategy(branching_tree, yfield),
                                    MCConfig(samples=20_000, seed=7, antithetic=True))
        assert abs(estimate.mean - v) <= 4.0 * estimate.stderr + 1e-12

    def test_immediate_close_is_certain(self, branching_tree):
        estimate = monte_carlo_cost(branching_tree, ImmediateCloseStrategy(branching_tree), MCConfig(samples=100),
                                    x=2.0)
        assert estimate == (2.0, 0.0)

    @pytest.mark.parametrize("kwargs", [{'samples': 0}, {'seed': -1}, {'seed': 2 ** 64}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ParameterError):
            MCConfig(**kwargs)


class TestFirstOrder:
    def test_vanishes_at_optimum(self, branching_tree):
        yfield = compute_Y(branching_tree)
        b = quad_coeffs(branching_tree, 0, yfield, 1.0, 0.4).b
        assert abs(first_order_check(branching_tree, 0, yfield, 1.0, 0.4)) <= 1e-7 * (1.0 + abs(b))

    def test_offset_gives_curvature(self, branching_tree):
        yfield = compute_Y(branching_tree)
        a = quad_coeffs(branching_tree, 0, yfield, 1.0, 0.4).a
        slope = first_order_check(branching_tree, 0, yfield, 1.0, 0.4, offset=0.1)
        assert slope == pytest.approx(2.0 * a * 0.1, abs=1e-7)

    def test_terminal_node(self, two_period_chain):
        with pytest.raises(ParameterError):
            first_order_check(two_period_chain, 1, compute_Y(two_period_chain), 1.0, 0.0)


class TestGridSpec:
    @pytest.mark.parametrize("kwargs", [{'points': 20}, {'points': 1}, {'rounds': 0}, {'half_width': 0.0}])
    def test_rejects(self, kwargs):
        with pytest.raises(ParameterError):
            GridSpec(**kwargs)


class TestVerify:
    def test_report_passes(self, branching_tree):
        report = verify(branching_tree, 1.0, 0.2, mc=MCConfig(samples=20_000))
        assert report.passed
        assert [c.name for c in report.checks] == ['grid', 'grid_lower_bound', 'monte_carlo', 'first_order']
        assert report.to_dict()['passed'] is True

    def test_one_period(self, one_period_tree):
        report = verify(one_period_tree, 1.0, 0.0, mc=MCConfig(samples=10))
        assert report.passed
        assert report.analytic_value == 0.5
        assert report.mc_stderr == 0.0
