from abc import ABC, abstractmethod
from typing import Dict

from logger import setup_logger
from market_model.model_types import ScenarioTree, TreeNode

logger = setup_logger('ExecutionStrategy')


class BaseExecutionStrategy(ABC):
    """Base class for trade rules on a scenario tree.

    A strategy is called as rule(node, position, deviation) with the state
    just before the trade at that node and returns the trade size. Leaf
    nodes always close the remaining position.
    """

    def __init__(self, tree: ScenarioTree, spec: Dict = None):
        self.tree = tree
        self.spec = dict(spec or {})
        self.calls = 0

    @abstractmethod
    def trade(self, node: TreeNode, position: float, deviation: float) -> float:
        """Trade at a non-terminal node"""
        pass

    def close(self, position: float) -> float:
        return -position

    def __call__(self, node: TreeNode, position: float, deviation: float) -> float:
        self.calls += 1
        if self.tree.is_terminal(node.id):
            return self.close(position)
        trade = self.trade(node, position, deviation)
        logger.debug(
            f"[{type(self).__name__}] node {node.id}: X={position!r} D={deviation!r} -> xi={trade!r}"
        )
        return trade

    def describe(self) -> Dict:
        return {'type': type(self).__name__, **self.spec}
