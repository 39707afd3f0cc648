from dataclasses import dataclass
from typing import Mapping

from market_model.model_types import TreeNode

TREE_MODE = 'tree'
PIMI_MODE = 'pimi'


@dataclass(frozen=True)
class YField:
    """Characterizing process Y.

    In tree mode `values` is keyed by node id; in PIMI mode Y is
    deterministic and `values` is keyed by time index.
    """
    values: Mapping[int, float]
    mode: str = TREE_MODE

    def for_node(self, node: TreeNode) -> float:
        return self.values[node.time if self.mode == PIMI_MODE else node.id]

    def __getitem__(self, key: int) -> float:
        return self.values[key]


@dataclass(frozen=True)
class QuadCoeffs:
    """Cost-to-go xi -> a xi^2 + b xi + c at one node and state"""
    a: float
    b: float
    c: float

    def __call__(self, xi: float) -> float:
        return (self.a * xi + self.b) * xi + self.c

    @property
    def minimizer(self) -> float:
        return -self.b / (2.0 * self.a)

    @property
    def minimum(self) -> float:
        return -self.b ** 2 / (4.0 * self.a) + self.c


@dataclass(frozen=True)
class NodeMoments:
    """Conditional sums over the children of one node, ascending child id.

    eta_y:       E[eta Y']
    drift:       E[Y' (beta - eta)]
    curvature:   E[(Y'/eta)(beta - eta)^2 + (1 - beta^2/eta)/2]
    closure:     E[(Y' - 1/2) beta^2/eta - Y' beta + 1/2]  (= curvature + drift)
    *_scale:     sums of absolute terms, for relative tolerances
    """
    eta_y: float
    drift: float
    curvature: float
    curvature_scale: float
    closure: float
    closure_scale: float
    mean_y: float
    mean_beta: float
    mean_eta: float
    mean_alpha: float
