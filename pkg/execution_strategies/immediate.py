from .execution_base import BaseExecutionStrategy
from market_model.model_types import TreeNode


class ImmediateCloseStrategy(BaseExecutionStrategy):
    """Close the whole position with one block trade at the first node"""

    def trade(self, node: TreeNode, position: float, deviation: float) -> float:
        return -position
