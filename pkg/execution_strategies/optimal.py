from .execution_base import BaseExecutionStrategy
from backward_engine.engine_types import YField
from execution_module import optimal_trade
from market_model.model_types import ScenarioTree, TreeNode


class OptimalExecutionStrategy(BaseExecutionStrategy):
    """Optimal feedback rule xi* = K (x - d/gamma) - d/gamma"""

    def __init__(self, tree: ScenarioTree, yfield: YField, spec: dict = None):
        super().__init__(tree, spec)
        self.yfield = yfield

    def trade(self, node: TreeNode, position: float, deviation: float) -> float:
        return optimal_trade(self.tree, node.id, self.yfield, position, deviation)
