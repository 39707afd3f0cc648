from typing import Mapping

from .execution_base import BaseExecutionStrategy
from errors import StrategyError
from market_model.model_types import ScenarioTree, TreeNode


class TradeMapStrategy(BaseExecutionStrategy):
    """Fixed trade per node, independent of the realized state"""

    def __init__(self, tree: ScenarioTree, trades: Mapping[int, float], spec: dict = None):
        super().__init__(tree, spec)
        self.trades = {int(k): float(v) for k, v in trades.items()}
        missing = sorted(i for i in tree.nodes if not tree.is_terminal(i) and i not in self.trades)
        if missing:
            raise StrategyError(f"Trade map is not adapted: no trade for node(s) {missing}")

    def trade(self, node: TreeNode, position: float, deviation: float) -> float:
        return self.trades[node.id]
