import pytest

from errors import StrategyError
from backward_engine import compute_Y, quad_coeffs, value_function
from execution_module import evaluate_strategy
from execution_strategies import (
    ImmediateCloseStrategy, OptimalExecutionStrategy, PerturbedStrategy, TradeMapStrategy,
    create_execution_strategy,
)


class TestFactory:
    def test_default_is_optimal(self, branching_tree):
        strategy = create_execution_strategy(branching_tree, compute_Y(branching_tree), {})
        assert isinstance(strategy, OptimalExecutionStrategy)

    def test_known_types(self, branching_tree):
        yfield = compute_Y(branching_tree)
        trades = {i: 0.0 for i in branching_tree.nodes if not branching_tree.is_terminal(i)}
        assert isinstance(create_execution_strategy(branching_tree, yfield, {'type': 'IMMEDIATE'}),
                          ImmediateCloseStrategy)
        assert isinstance(create_execution_strategy(branching_tree, yfield, {'type': 'TRADE_MAP', 'trades': trades}),
                          TradeMapStrategy)
        perturbed = create_execution_strategy(branching_tree, yfield, {'type': 'PERTURBED', 'offsets': {0: 0.1}})
        assert isinstance(perturbed, PerturbedStrategy)
        assert isinstance(perturbed.base, OptimalExecutionStrategy)

    def test_unknown_type(self, branching_tree):
        with pytest.raises(StrategyError, match="Unknown execution strategy type"):
            create_execution_strategy(branching_tree, compute_Y(branching_tree), {'type': 'TWAP'})


class TestStrategies:
    def test_optimal_rule_attains_value(self, branching_tree):
        yfield = compute_Y(branching_tree)
        rule = OptimalExecutionStrategy(branching_tree, yfield)
        report = evaluate_strategy(branching_tree, rule, 1.0, -0.2)
        expected = value_function(branching_tree, branching_tree.root, yfield, 1.0, -0.2)
        assert report.expected_cost == pytest.approx(expected, abs=1e-12)
        assert rule.calls == len(branching_tree)

    def test_immediate_close(self, branching_tree):
        gamma = branching_tree.node(0).gamma
        report = evaluate_strategy(branching_tree, ImmediateCloseStrategy(branching_tree), 2.0, 0.0)
        assert report.expected_cost == pytest.approx(gamma * 4.0 / 2.0, abs=1e-12)

    def test_trade_map_must_be_adapted(self, branching_tree):
        with pytest.raises(StrategyError, match="not adapted"):
            TradeMapStrategy(branching_tree, {0: -0.5})

    def test_root_perturbation_costs_curvature(self, branching_tree):
        yfield = compute_Y(branching_tree)
        base = OptimalExecutionStrategy(branching_tree, yfield)
        a = quad_coeffs(branching_tree, 0, yfield, 1.0, 0.0).a
        optimal = evaluate_strategy(branching_tree, base, 1.0, 0.0).expected_cost
        for offset in (0.1, -0.1):
            perturbed = PerturbedStrategy(branching_tree, base, {0: offset})
            cost = evaluate_strategy(branching_tree, perturbed, 1.0, 0.0).expected_cost
            assert cost - optimal == pytest.approx(a * 0.01, rel=1e-8)

    def test_describe(self, branching_tree):
        strategy = ImmediateCloseStrategy(branching_tree, {'label': 'block'})
        assert strategy.describe() == {'type': 'ImmediateCloseStrategy', 'label': 'block'}
