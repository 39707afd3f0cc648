from typing import Mapping

from .execution_base import BaseExecutionStrategy
from logger import setup_logger
from market_model.model_types import ScenarioTree, TreeNode

logger = setup_logger('ExecutionStrategy')


class PerturbedStrategy(BaseExecutionStrategy):
    """Another rule with fixed offsets added at chosen nodes.

    The wrapped rule keeps reacting to the perturbed state downstream.
    """

    def __init__(self, tree: ScenarioTree, base: BaseExecutionStrategy,
                 offsets: Mapping[int, float], spec: dict = None):
        super().__init__(tree, spec)
        self.base = base
        self.offsets = {int(k): float(v) for k, v in offsets.items()}
        terminal = sorted(i for i in self.offsets if tree.is_terminal(i))
        if terminal:
            logger.warning(f"Offsets at leaf node(s) {terminal} are ignored; leaves always close")

    def trade(self, node: TreeNode, position: float, deviation: float) -> float:
        return self.base.trade(node, position, deviation) + self.offsets.get(node.id, 0.0)
