"""Independent checks of the analytic solution.

brute_force_value minimizes over trade grids recursively and never touches
the Y recursion; monte_carlo_cost samples paths with a counter-based
generator; first_order_check differentiates the one-step cost-to-go.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from config import Config
from errors import OracleGuardError, ParameterError
from logger import setup_logger
from backward_engine.engine_types import YField
from backward_engine.recursion import compute_Y
from backward_engine.value_function import quad_coeffs, value_function
from execution_module import TradeRule, optimal_trade, simulate_rule
from execution_strategies import OptimalExecutionStrategy
from market_model.model_types import ScenarioTree, TreeNode

logger = setup_logger('Oracle')

MC_CHUNK = 1 << 14
UNIT_53 = 2.0 ** -53


@dataclass(frozen=True)
class GridSpec:
    """Trade grid of the brute-force search.

    half_width overrides the bracket at the starting node only; deeper
    nodes scale their bracket with the state they are reached in.
    """
    points: int = Config.GRID_POINTS
    rounds: int = Config.GRID_ROUNDS
    half_width: Optional[float] = None
    max_expansions: int = 8

    def __post_init__(self):
        if self.points < 3 or self.points % 2 == 0:
            raise ParameterError(f"Grid points must be odd and at least 3, got {self.points}")
        if self.rounds < 1:
            raise ParameterError(f"Refinement rounds must be at least 1, got {self.rounds}")
        if self.half_width is not None and not self.half_width > 0.0:
            raise ParameterError(f"Bracket half-width must be positive, got {self.half_width!r}")


@dataclass(frozen=True)
class MCConfig:
    samples: int = Config.MC_SAMPLES
    seed: int = Config.MC_SEED
    antithetic: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise ParameterError(f"Monte Carlo needs at least one sample, got {self.samples}")
        if not 0 <= self.seed < 2 ** 64:
            raise ParameterError(f"Seed must be an unsigned 64-bit integer, got {self.seed}")


class MCEstimate(NamedTuple):
    mean: float
    stderr: float


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerificationReport:
    analytic_value: float
    oracle_value: Optional[float]
    mc_mean: float
    mc_stderr: float
    first_order: float
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> Dict:
        return {
            'analytic_value': self.analytic_value,
            'oracle_value': self.oracle_value,
            'mc_mean': self.mc_mean,
            'mc_stderr': self.mc_stderr,
            'first_order': self.first_order,
            'checks': [{'name': c.name, 'passed': c.passed, 'detail': c.detail} for c in self.checks],
            'passed': self.passed,
        }


def oracle_work(tree: ScenarioTree, node_id: int, grid: Optional[GridSpec] = None) -> float:
    """Estimated grid evaluations below node_id: leaves * (points * rounds)^depth"""
    grid = grid or GridSpec()
    depth = tree.horizon - tree.node(node_id).time
    leaves = sum(1 for i in tree.subtree_ids(node_id) if tree.is_terminal(i))
    return leaves * float(grid.points * grid.rounds) ** depth


def check_oracle_guard(tree: ScenarioTree, node_id: int, grid: Optional[GridSpec] = None) -> None:
    depth = tree.horizon - tree.node(node_id).time
    if depth > Config.ORACLE_MAX_DEPTH:
        raise OracleGuardError(
            f"Subtree depth {depth} exceeds the brute-force limit of {Config.ORACLE_MAX_DEPTH}"
        )
    branching = max(len(tree.node(i).children) for i in tree.subtree_ids(node_id))
    if branching > Config.ORACLE_MAX_CHILDREN:
        raise OracleGuardError(
            f"Branching {branching} exceeds the brute-force limit of {Config.ORACLE_MAX_CHILDREN}"
        )
    work = oracle_work(tree, node_id, grid)
    if work > Config.ORACLE_MAX_WORK:
        raise OracleGuardError(
            f"Brute force below node {node_id} needs about {work:.3g} grid evaluations, "
            f"above the limit of {Config.ORACLE_MAX_WORK:.3g}"
        )


def _grid_cost(tree: ScenarioTree, node: TreeNode, position: np.ndarray, deviation: np.ndarray,
               grid: GridSpec, half_width: Optional[float] = None) -> np.ndarray:
    """Minimal expected cost found by grid search, for every state in the batch"""
    gamma = node.gamma
    if tree.is_terminal(node.id):
        trade = -position
        return (deviation + 0.5 * gamma * trade) * trade

    children = tree.children(node.id)
    offsets = np.linspace(-1.0, 1.0, grid.points)
    centre = -(position + deviation / gamma) / 2.0
    if half_width is None:
        width = 2.0 * (np.abs(position) + np.abs(deviation) / gamma + 1.0)
    else:
        width = np.full(position.shape, half_width)
    best = np.full(position.shape, np.inf)
    shrinks = np.zeros(position.shape, dtype=int)

    for _ in range(grid.rounds + grid.max_expansions):
        active = np.flatnonzero(shrinks < grid.rounds)
        if active.size == 0:
            break
        x, d = position[active], deviation[active]
        trades = centre[active, None] + width[active, None] * offsets[None, :]
        cost = (d[:, None] + 0.5 * gamma * trades) * trades
        next_position = (x[:, None] + trades).ravel()
        carried = (d[:, None] + gamma * trades).ravel()
        for child in children:
            follow = _grid_cost(tree, child, next_position, carried * child.beta, grid)
            cost += child.prob * follow.reshape(trades.shape)

        argmin = np.argmin(cost, axis=1)
        rows = np.arange(active.size)
        best[active] = np.minimum(best[active], cost[rows, argmin])
        centre[active] = trades[rows, argmin]
        interior = (argmin > 0) & (argmin < grid.points - 1)
        spacing = 2.0 * width[active] / (grid.points - 1)
        width[active] = np.where(interior, 1.5 * spacing, width[active])
        shrinks[active] += interior
    return best


def brute_force_value(tree: ScenarioTree, root: Optional[int] = None, x: float = 0.0, d: float = 0.0,
                      grid: Optional[GridSpec] = None) -> float:
    """Minimal expected cost by exhaustive grid recursion, without closed forms"""
    root = tree.root if root is None else root
    grid = grid or GridSpec()
    check_oracle_guard(tree, root, grid)
    value = _grid_cost(tree, tree.node(root), np.array([float(x)]), np.array([float(d)]),
                       grid, grid.half_width)
    logger.debug(f"Brute-force value at node {root} from (x={x!r}, d={d!r}): {value[0]!r}")
    return float(value[0])


def _path_uniforms(seed: int, first: int, count: int, depth: int) -> np.ndarray:
    """Uniforms for samples first .. first+count-1, one row per sample.

    Sample i starts at counter offset i*B under key `seed` and reads B
    blocks of four words, so its draws depend only on (seed, i).
    """
    blocks = max(1, math.ceil(depth / 4))
    bit_generator = np.random.Philox(key=seed, counter=first * blocks)
    raw = bit_generator.random_raw(count * blocks * 4).reshape(count, blocks * 4)[:, :depth]
    return (raw >> np.uint64(11)).astype(np.float64) * UNIT_53


def _sample_leaves(tree: ScenarioTree, uniforms: np.ndarray) -> np.ndarray:
    current = np.full(uniforms.shape[0], tree.root, dtype=np.int64)
    for step, level in enumerate(tree.levels[:-1]):
        u = uniforms[:, step]
        chosen = current.copy()
        for node_id in level:
            mask = current == node_id
            if not mask.any():
                continue
            children = tree.node(node_id).children
            cumulative = np.cumsum([tree.node(c).prob for c in children])
            pick = np.minimum(np.searchsorted(cumulative, u[mask], side='right'), len(children) - 1)
            chosen[mask] = np.asarray(children, dtype=np.int64)[pick]
        current = chosen
    return current


def monte_carlo_cost(tree: ScenarioTree, rule: TradeRule, config: MCConfig, *,
                     x: float = 1.0, d: float = 0.0) -> MCEstimate:
    """Sample mean and standard error of the realized cost of a trade rule"""
    field_ = simulate_rule(tree, rule, x, d)
    leaf_cost = {}
    for leaf in tree.leaves:
        cost, node_id = 0.0, leaf
        while node_id is not None:
            entry = field_.entries[node_id]
            node = tree.node(node_id)
            cost += (entry.deviation_before + node.gamma * entry.trade / 2.0) * entry.trade
            node_id = node.parent
        leaf_cost[leaf] = cost

    pairs = config.antithetic
    draws = max(1, config.samples // 2) if pairs else config.samples
    depth = tree.depth
    costs = []
    for first in range(0, draws, MC_CHUNK):
        count = min(MC_CHUNK, draws - first)
        if depth == 0:
            leaves = np.full(count, tree.root, dtype=np.int64)
            mirrored = leaves
        else:
            u = _path_uniforms(config.seed, first, count, depth)
            leaves = _sample_leaves(tree, u)
            mirrored = _sample_leaves(tree, 1.0 - u) if pairs else None
        chunk = np.array([leaf_cost[int(i)] for i in leaves])
        if pairs:
            chunk = 0.5 * (chunk + np.array([leaf_cost[int(i)] for i in mirrored]))
        costs.append(chunk)
    costs = np.concatenate(costs)

    if np.all(costs == costs[0]):
        return MCEstimate(float(costs[0]), 0.0)
    mean = float(np.mean(costs))
    stderr = float(np.std(costs, ddof=1) / math.sqrt(costs.size)) if costs.size > 1 else 0.0
    logger.debug(f"Monte Carlo over {config.samples} sample(s), seed {config.seed}: {mean!r} +/- {stderr!r}")
    return MCEstimate(mean, stderr)


def first_order_check(tree: ScenarioTree, node_id: int, yfield: YField, x: float, d: float,
                      h: float = 1e-5, offset: float = 0.0) -> float:
    """Central difference of the one-step cost-to-go at the optimal trade (+ offset)"""
    if tree.is_terminal(node_id):
        raise ParameterError(f"Node {node_id} is terminal; no trade to differentiate")
    node = tree.node(node_id)

    def cost_to_go(trade: float) -> float:
        carried = d + node.gamma * trade
        total = (d + node.gamma * trade / 2.0) * trade
        for child in tree.children(node_id):
            total += child.prob * value_function(tree, child.id, yfield, x + trade, carried * child.beta)
        return total

    trade = optimal_trade(tree, node_id, yfield, x, d) + offset
    return (cost_to_go(trade + h) - cost_to_go(trade - h)) / (2.0 * h)


def verify(tree: ScenarioTree, x: float, d: float, grid: Optional[GridSpec] = None,
           mc: Optional[MCConfig] = None, tol: float = Config.ORACLE_TOL) -> VerificationReport:
    """Compare the analytic value against grid search, Monte Carlo and the first-order condition"""
    grid = grid or GridSpec()
    mc = mc or MCConfig()
    yfield = compute_Y(tree)
    analytic = value_function(tree, tree.root, yfield, x, d)

    oracle = brute_force_value(tree, tree.root, x, d, grid)
    estimate = monte_carlo_cost(tree, OptimalExecutionStrategy(tree, yfield), mc, x=x, d=d)
    if tree.is_terminal(tree.root):
        derivative, derivative_tol = 0.0, 0.0
    else:
        derivative = first_order_check(tree, tree.root, yfield, x, d)
        derivative_tol = 1e-7 * (1.0 + abs(quad_coeffs(tree, tree.root, yfield, x, d).b))

    grid_error = abs(oracle - analytic)
    mc_error = abs(estimate.mean - analytic)
    mc_allowed = 4.0 * estimate.stderr if estimate.stderr > 0 else 1e-10 * (1.0 + abs(analytic))
    report = VerificationReport(analytic, oracle, estimate.mean, estimate.stderr, derivative)
    report.checks = [
        CheckResult('grid', grid_error <= tol * (1.0 + abs(analytic)),
                    f"|oracle - analytic| = {grid_error:.3e}"),
        CheckResult('grid_lower_bound', oracle >= analytic - 1e-9,
                    f"oracle - analytic = {oracle - analytic:.3e}"),
        CheckResult('monte_carlo', mc_error <= mc_allowed,
                    f"|mean - analytic| = {mc_error:.3e}, stderr = {estimate.stderr:.3e}"),
        CheckResult('first_order', abs(derivative) <= derivative_tol,
                    f"derivative at optimum = {derivative:.3e}"),
    ]
    logger.info(f"[VERIFY] analytic {analytic!r}, grid {oracle!r}, MC {estimate.mean!r}: "
                f"{'PASS' if report.passed else 'FAIL'}")
    return report
