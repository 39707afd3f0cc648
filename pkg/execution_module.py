import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import pandas as pd

from config import Config
from errors import NumericalBreakdownError, StrategyError
from logger import setup_logger
from backward_engine.engine_types import YField
from backward_engine.recursion import node_moments
from market_model.model_types import ScenarioTree, TreeNode

logger = setup_logger('Execution')

# Trade rule: (node, position before the trade, deviation before the trade) -> trade
TradeRule = Callable[[TreeNode, float, float], float]

PERTURBATIONS = (1e-3, -1e-3, 1e-5, -1e-5)
CLOSURE_TOL = 1e-9


class RatioMarker(Enum):
    INF = "INF"


INF = RatioMarker.INF


@dataclass(frozen=True)
class StrategyEntry:
    node_id: int
    time: int
    trade: float
    position_after: float
    deviation_before: float


@dataclass
class StrategyField:
    start_node: int
    x: float
    d: float
    entries: Dict[int, StrategyEntry] = field(default_factory=dict)

    def trade(self, node_id: int) -> float:
        return self.entries[node_id].trade

    def trades(self) -> Dict[int, float]:
        return {node_id: entry.trade for node_id, entry in self.entries.items()}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [dataclasses.asdict(self.entries[i]) for i in sorted(self.entries)],
            columns=['node_id', 'time', 'trade', 'position_after', 'deviation_before'],
        )


@dataclass(frozen=True)
class LeafCost:
    leaf_id: int
    path_probability: float
    realized_cost: float


@dataclass
class CostReport:
    expected_cost: float
    per_leaf: List[LeafCost]
    price_overlay_offset: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'expected_cost': self.expected_cost,
            'price_overlay_offset': self.price_overlay_offset,
            'per_leaf': [dataclasses.asdict(leaf) for leaf in self.per_leaf],
        }


def optimal_trade(tree: ScenarioTree, node_id: int, yfield: YField, x: float, d: float) -> float:
    """Unique optimal trade at node_id from position x and deviation d"""
    if tree.is_terminal(node_id):
        return -x
    gamma = tree.node(node_id).gamma
    m = node_moments(tree, node_id, yfield)
    gain = m.drift / m.curvature
    return gain * (x - d / gamma) - d / gamma


def simulate_rule(tree: ScenarioTree, rule: TradeRule, x: float, d: float) -> StrategyField:
    """Forward sweep of any trade rule; the position must be closed at every leaf"""
    field_ = StrategyField(start_node=tree.root, x=x, d=d)
    state = {tree.root: (x, d)}
    for level in tree.levels:
        for node_id in level:
            node = tree.node(node_id)
            position, deviation = state.pop(node_id)
            trade = float(rule(node, position, deviation))
            position_after = position + trade
            if tree.is_terminal(node_id) and abs(position_after) > CLOSURE_TOL * max(1.0, abs(x)):
                raise StrategyError(
                    f"Strategy leaves position {position_after!r} open at leaf {node_id}"
                )
            field_.entries[node_id] = StrategyEntry(node_id, node.time, trade, position_after, deviation)
            carried = deviation + node.gamma * trade
            for child in tree.children(node_id):
                state[child.id] = (position_after, carried * child.beta)
    return field_


def generate_strategy(tree: ScenarioTree, yfield: YField, x: float, d: float) -> StrategyField:
    field_ = simulate_rule(
        tree, lambda node, position, deviation: optimal_trade(tree, node.id, yfield, position, deviation), x, d
    )
    logger.debug(f"Optimal strategy from (x={x!r}, d={d!r}): root trade {field_.trade(tree.root)!r}")
    return field_


def _trade_map(tree: ScenarioTree, strategy: Union[StrategyField, Mapping[int, float]]) -> Dict[int, float]:
    trades = strategy.trades() if isinstance(strategy, StrategyField) else dict(strategy)
    unknown = sorted(set(trades) - set(tree.nodes))
    if unknown:
        raise StrategyError(f"Trades given for unknown node(s) {unknown}")
    missing = sorted(i for i in tree.nodes if not tree.is_terminal(i) and i not in trades)
    if missing:
        raise StrategyError(f"Strategy is not adapted: no trade for node(s) {missing}")
    return trades


def evaluate_strategy(tree: ScenarioTree, strategy: Union[StrategyField, Mapping[int, float], TradeRule],
                      x: float, d: float, enforce_closure: bool = True) -> CostReport:
    """Exact expected cost of a strategy over all leaves.

    Args:
        strategy: a StrategyField, a per-node trade map, or a trade rule
        enforce_closure: replace leaf trades by -X; when False, leaf
            trades must be given and must close the position
    """
    if callable(strategy) and not isinstance(strategy, Mapping):
        strategy = simulate_rule(tree, strategy, x, d)
    trades = _trade_map(tree, strategy)

    state = {tree.root: (x, d, 0.0, 1.0)}
    per_leaf = []
    for level in tree.levels:
        for node_id in level:
            node = tree.node(node_id)
            position, deviation, cost, prob = state.pop(node_id)
            if tree.is_terminal(node_id):
                if enforce_closure:
                    trade = -position
                elif node_id not in trades:
                    raise StrategyError(f"No trade given at leaf {node_id} and closure is not enforced")
                else:
                    trade = trades[node_id]
                    if abs(position + trade) > CLOSURE_TOL * max(1.0, abs(x)):
                        raise StrategyError(f"Position {position + trade!r} not closed at leaf {node_id}")
                cost += (deviation + node.gamma * trade / 2.0) * trade
                per_leaf.append(LeafCost(node_id, prob, cost))
                continue
            trade = trades[node_id]
            cost += (deviation + node.gamma * trade / 2.0) * trade
            carried = deviation + node.gamma * trade
            for child in tree.children(node_id):
                state[child.id] = (position + trade, carried * child.beta, cost, prob * child.prob)

    per_leaf.sort(key=lambda leaf: leaf.leaf_id)
    expected = 0.0
    for leaf in per_leaf:
        expected += leaf.path_probability * leaf.realized_cost
    return CostReport(expected_cost=expected, per_leaf=per_leaf)


def deviation_position_ratio(tree: ScenarioTree, node_id: int, yfield: YField,
                             tol: float = Config.EVENT_TOL) -> Union[float, RatioMarker]:
    """Post-trade deviation over post-trade position under the optimal rule"""
    if tree.is_terminal(node_id):
        return INF
    gamma = tree.node(node_id).gamma
    m = node_moments(tree, node_id, yfield)
    numerator = gamma * m.drift
    if abs(m.closure) <= tol * m.closure_scale:
        if abs(numerator) <= tol * gamma * m.closure_scale:
            raise NumericalBreakdownError(f"Deviation-position ratio is 0/0 at node {node_id}")
        return INF
    return numerator / m.closure


def overlay_unaffected_price(report: CostReport, s_root: float, x: float) -> CostReport:
    """Attach the unaffected price contribution -x * S to a cost report"""
    return dataclasses.replace(report, price_overlay_offset=0.0 - x * s_root)


def local_optimality_check(tree: ScenarioTree, yfield: YField, x: float, d: float,
                           epsilons: Sequence[float] = PERTURBATIONS) -> float:
    """Smallest cost change over single-node perturbations of the optimal trades.

    Downstream trades stay fixed; only leaf closure adapts. A negative
    result below rounding means the strategy was not optimal.
    """
    optimal = generate_strategy(tree, yfield, x, d)
    base = evaluate_strategy(tree, optimal, x, d).expected_cost
    trades = optimal.trades()
    worst = float('inf')
    for node_id in sorted(trades):
        if tree.is_terminal(node_id):
            continue
        for eps in epsilons:
            perturbed = dict(trades)
            perturbed[node_id] += eps
            change = evaluate_strategy(tree, perturbed, x, d).expected_cost - base
            worst = min(worst, change)
    return worst if worst != float('inf') else 0.0


def export_strategy(field_: StrategyField) -> pd.DataFrame:
    return field_.to_frame()
