from concurrent.futures import ThreadPoolExecutor
from functools import partial
from types import MappingProxyType
from typing import Callable, Dict, Iterable, List, Sequence

from config import Config
from errors import NumericalBreakdownError, ParameterError
from logger import setup_logger
from backward_engine.engine_types import NodeMoments, PIMI_MODE, TREE_MODE, YField
from market_model.model_types import PIMIModel, ScenarioTree, TreeNode

logger = setup_logger('BackwardEngine')

# Y may overshoot 1/2 by rounding on the {E[beta] = 1} event
OVERSHOOT_TOL = 1e-9


def moments(children: Iterable[TreeNode], parent_gamma: float,
            y_of: Callable[[TreeNode], float]) -> NodeMoments:
    eta_y = drift = curvature = curvature_abs = 0.0
    closure = closure_abs = mean_y = mean_beta = mean_eta = mean_alpha = 0.0
    for child in children:
        p, beta = child.prob, child.beta
        eta = child.gamma / parent_gamma
        y = y_of(child)
        alpha = beta * beta / eta
        curv_term = y / eta * (beta - eta) ** 2 + (1.0 - alpha) / 2.0
        clos_term = (y - 0.5) * alpha - y * beta + 0.5
        eta_y += p * eta * y
        drift += p * y * (beta - eta)
        curvature += p * curv_term
        curvature_abs += p * (y / eta * (beta - eta) ** 2 + (1.0 + alpha) / 2.0)
        closure += p * clos_term
        closure_abs += p * (abs(y - 0.5) * alpha + y * beta + 0.5)
        mean_y += p * y
        mean_beta += p * beta
        mean_eta += p * eta
        mean_alpha += p * alpha
    return NodeMoments(
        eta_y=eta_y,
        drift=drift,
        curvature=curvature,
        curvature_scale=max(1.0, curvature_abs),
        closure=closure,
        closure_scale=max(1.0, closure_abs),
        mean_y=mean_y,
        mean_beta=mean_beta,
        mean_eta=mean_eta,
        mean_alpha=mean_alpha,
    )


def node_moments(tree: ScenarioTree, node_id: int, yfield: YField) -> NodeMoments:
    """Conditional sums at a non-terminal node given a computed Y field"""
    if tree.is_terminal(node_id):
        raise ValueError(f"Node {node_id} is terminal and has no children")
    return moments(tree.children(node_id), tree.node(node_id).gamma, yfield.for_node)


def _checked_y(y: float, where: str) -> float:
    if y > 0.5:
        if y - 0.5 > OVERSHOOT_TOL:
            raise NumericalBreakdownError(f"Y = {y!r} above 1/2 at {where}")
        return 0.5
    if not y > 0.0:
        raise NumericalBreakdownError(f"Y = {y!r} not positive at {where}")
    return y


def y_from_moments(m: NodeMoments, where: str) -> float:
    if m.curvature <= Config.DENOMINATOR_GUARD * m.curvature_scale:
        raise NumericalBreakdownError(
            f"Y recursion denominator {m.curvature!r} vanished at {where}; "
            "validate the model first"
        )
    return _checked_y(m.eta_y - m.drift ** 2 / m.curvature, where)


def _node_y(tree: ScenarioTree, values: Dict[int, float], node_id: int) -> float:
    node = tree.node(node_id)
    m = moments(tree.children(node_id), node.gamma, lambda child: values[child.id])
    return y_from_moments(m, f"node {node_id}")


def _map_level(fn: Callable[[int], float], level: Sequence[int]) -> List[float]:
    if Config.THREADS > 1 and len(level) >= Config.PARALLEL_MIN_NODES:
        with ThreadPoolExecutor(max_workers=Config.THREADS) as pool:
            return list(pool.map(fn, level))
    return [fn(node_id) for node_id in level]


def compute_Y(tree: ScenarioTree) -> YField:
    """Backward level-by-level sweep of the Y recursion, Y = 1/2 at the horizon"""
    values: Dict[int, float] = {leaf: 0.5 for leaf in tree.leaves}
    for level in reversed(tree.levels[:-1]):
        results = _map_level(partial(_node_y, tree, values), level)
        values.update(zip(level, results))
        logger.debug(f"Computed Y on {len(level)} node(s) at time {tree.node(level[0]).time}")
    logger.info(f"Y at root node {tree.root}: {values[tree.root]!r}")
    return YField(MappingProxyType(dict(sorted(values.items()))), TREE_MODE)


def _g(y: float, beta_bar: float, eta_bar: float, alpha_bar: float) -> float:
    # Same map as E[eta] y - y^2 (E[beta] - E[eta])^2 / (y E[(beta-eta)^2/eta] + (1 - E[beta^2/eta])/2),
    # regrouped so that y = 1/2 and beta_bar = 1 give exactly 1/2
    gap = eta_bar - beta_bar ** 2
    slack = (0.5 - y) * (1.0 - alpha_bar)
    denominator = y * (gap + (beta_bar - 1.0) ** 2) + slack
    if denominator <= Config.DENOMINATOR_GUARD:
        raise NumericalBreakdownError(
            f"Deterministic Y recursion denominator {denominator!r} at y={y!r}"
        )
    return (y * y * gap + eta_bar * y * slack) / denominator


def homogeneous_map(beta_bar: float, eta_bar: float, alpha_bar: float) -> Callable[[float], float]:
    """The one-step map g of a step with E[beta], E[eta], E[beta^2/eta] given"""
    return partial(_g, beta_bar=beta_bar, eta_bar=eta_bar, alpha_bar=alpha_bar)


def pimi_step(y_next: float, model: PIMIModel, k: int) -> float:
    """Y_{k-1} from Y_k through the means of step k"""
    return _g(y_next, *model.step_means(k))


def compute_Y_pimi(model: PIMIModel) -> YField:
    """Deterministic Y of a PIMI model, one value per time index"""
    values = {model.horizon: 0.5}
    for k in reversed(model.step_indices):
        values[k - 1] = _checked_y(pimi_step(values[k], model, k), f"time {k - 1}")
    logger.info(f"PIMI Y at start time {model.start}: {values[model.start]!r}")
    return YField(MappingProxyType(dict(sorted(values.items()))), PIMI_MODE)


def two_period_closed_form(probs: Sequence[float], betas: Sequence[float],
                           etas: Sequence[float]) -> float:
    """Y one step before the horizon from the last step's distribution"""
    mean_beta = sum(p * b for p, b in zip(probs, betas))
    mean_eta = sum(p * e for p, e in zip(probs, etas))
    mean_gap = sum(p * (e - 2.0 * b + 1.0) for p, b, e in zip(probs, betas, etas))
    return (mean_eta - mean_beta ** 2) / (2.0 * mean_gap)


def compute_Z_closed_form(betas: Sequence[float], etas: Sequence[float]) -> List[float]:
    """Z = 1/(2Y) for deterministic beta and eta, by the explicit product-sum formula.

    Args:
        betas, etas: values of steps start+1 .. horizon

    Returns:
        Z at times start .. horizon; the last entry is 1.
    """
    if len(betas) != len(etas):
        raise ParameterError(f"Got {len(betas)} betas and {len(etas)} etas")
    for k, (beta, eta) in enumerate(zip(betas, etas), start=1):
        if beta <= 0.0 or eta <= 0.0:
            raise ParameterError(f"Step {k}: beta and eta must be positive")
        if beta * beta >= eta:
            raise ParameterError(f"Step {k}: beta^2 = {beta * beta!r} not below eta = {eta!r}")

    steps = len(betas)
    z_values = []
    for k in range(steps + 1):
        product, total = 1.0, 0.0
        for j in range(k, steps):
            product /= etas[j]
            total += product * (etas[j] - betas[j]) ** 2 / (etas[j] - betas[j] ** 2)
        z_values.append(product + total)
    return z_values


def compute_Z_constant_gamma(betas: Sequence[float]) -> List[float]:
    """Z for constant impact: 1 + sum of (1 - beta)/(1 + beta) over later steps"""
    z_values, total = [1.0], 0.0
    for beta in reversed(betas):
        if not 0.0 < beta < 1.0:
            raise ParameterError(f"Constant impact requires beta in (0, 1), got {beta!r}")
        total += (1.0 - beta) / (1.0 + beta)
        z_values.append(1.0 + total)
    return z_values[::-1]
