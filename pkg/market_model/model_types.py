from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Tuple, Union

import pandas as pd


@dataclass(frozen=True)
class TreeNode:
    id: int
    time: int
    parent: Optional[int]
    prob: float  # transition probability from the parent, 1.0 at the root
    beta: float
    gamma: float
    children: Tuple[int, ...] = ()


@dataclass(frozen=True)
class ScenarioTree:
    """Finite filtered probability space with adapted resilience and impact.

    Nodes at time t are the atoms of the time-t sigma-algebra. `levels`
    holds the node ids of each time from `start` to `horizon`, ascending.
    """
    horizon: int
    start: int
    nodes: Mapping[int, TreeNode]
    root: int
    levels: Tuple[Tuple[int, ...], ...]

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def children(self, node_id: int) -> List[TreeNode]:
        """Children in ascending id order (the fixed summation order)"""
        return [self.nodes[c] for c in self.nodes[node_id].children]

    def is_terminal(self, node_id: int) -> bool:
        return self.nodes[node_id].time == self.horizon

    def eta(self, node_id: int) -> float:
        """Impact increment gamma_child / gamma_parent on the edge into node_id"""
        node = self.nodes[node_id]
        if node.parent is None:
            raise ValueError(f"Root node {node_id} has no incoming edge")
        return node.gamma / self.nodes[node.parent].gamma

    def level(self, time: int) -> Tuple[int, ...]:
        return self.levels[time - self.start]

    @property
    def leaves(self) -> Tuple[int, ...]:
        return self.levels[-1]

    @property
    def depth(self) -> int:
        return self.horizon - self.start

    @property
    def max_branching(self) -> int:
        return max((len(n.children) for n in self.nodes.values()), default=0)

    def subtree_ids(self, node_id: int) -> List[int]:
        """Node ids of the subtree rooted at node_id, level by level"""
        out, frontier = [], [node_id]
        while frontier:
            out.extend(frontier)
            frontier = [c for v in frontier for c in self.nodes[v].children]
        return out

    def path_probability(self, node_id: int) -> float:
        prob, node = 1.0, self.nodes[node_id]
        while node.parent is not None:
            prob *= node.prob
            node = self.nodes[node.parent]
        return prob

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class PimiAtom:
    weight: float
    beta: float
    eta: float


@dataclass(frozen=True)
class PIMIModel:
    """Step distributions of (beta, eta) independent of the past.

    `steps[i]` is the atom list of step k = start + 1 + i, i.e. the
    distribution of (beta_k, eta_k) seen from time k - 1.
    """
    horizon: int
    start: int
    gamma_start: float
    steps: Tuple[Tuple[PimiAtom, ...], ...]

    def atoms(self, k: int) -> Tuple[PimiAtom, ...]:
        if not self.start < k <= self.horizon:
            raise ValueError(f"Step {k} outside ({self.start}, {self.horizon}]")
        return self.steps[k - self.start - 1]

    def step_means(self, k: int) -> Tuple[float, float, float]:
        """Return (E[beta_k], E[eta_k], E[beta_k^2 / eta_k])"""
        atoms = self.atoms(k)
        mean_beta = sum(a.weight * a.beta for a in atoms)
        mean_eta = sum(a.weight * a.eta for a in atoms)
        mean_alpha = sum(a.weight * a.beta ** 2 / a.eta for a in atoms)
        return mean_beta, mean_eta, mean_alpha

    @property
    def step_indices(self) -> range:
        return range(self.start + 1, self.horizon + 1)


@dataclass(frozen=True)
class Violation:
    location: Union[int, str]  # node id, or "step k" for PIMI models
    rule: str
    value: float


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)
    # Measured conditional expectation of beta^2/eta per checked location
    measured: Dict[Union[int, str], float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{'location': v.location, 'rule': v.rule, 'value': v.value} for v in self.violations],
            columns=['location', 'rule', 'value'],
        )

    def to_dict(self) -> Dict:
        return {
            'ok': self.ok,
            'violations': [
                {'location': v.location, 'rule': v.rule, 'value': v.value}
                for v in self.violations
            ],
        }


def freeze_nodes(nodes: Dict[int, TreeNode]) -> Mapping[int, TreeNode]:
    return MappingProxyType(dict(sorted(nodes.items())))
