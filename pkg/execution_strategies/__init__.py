from errors import StrategyError
from .execution_base import BaseExecutionStrategy
from .immediate import ImmediateCloseStrategy
from .optimal import OptimalExecutionStrategy
from .perturbed import PerturbedStrategy
from .trade_map import TradeMapStrategy


def create_execution_strategy(tree, yfield, spec: dict) -> BaseExecutionStrategy:
    """Factory function to create the trade rule named by spec['type']"""
    strategy_type = spec.get('type', 'OPTIMAL')  # Default to the optimal rule

    if strategy_type == "OPTIMAL":
        return OptimalExecutionStrategy(tree, yfield, spec)
    elif strategy_type == "IMMEDIATE":
        return ImmediateCloseStrategy(tree, spec)
    elif strategy_type == "TRADE_MAP":
        return TradeMapStrategy(tree, spec.get('trades', {}), spec)
    elif strategy_type == "PERTURBED":
        base = create_execution_strategy(tree, yfield, spec.get('base', {'type': 'OPTIMAL'}))
        return PerturbedStrategy(tree, base, spec.get('offsets', {}), spec)
    else:
        raise StrategyError(f"Unknown execution strategy type: {strategy_type}")
