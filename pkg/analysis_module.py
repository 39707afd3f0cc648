import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import Config
from errors import ConsistencyError, ParameterError
from logger import setup_logger
from backward_engine.engine_types import YField
from backward_engine.recursion import compute_Y_pimi, homogeneous_map, node_moments
from backward_engine.value_function import expected_future_impacts, y_upper_bound
from execution_module import RatioMarker, deviation_position_ratio, optimal_trade
from market_model.model_types import PIMIModel, ScenarioTree

logger = setup_logger('Analysis')

CLOSURE_SAMPLES = 10


class RoundTrip(Enum):
    PROFITABLE = "PROFITABLE"
    NONE = "NONE"


class LimitCase(Enum):
    CONSTANT_HALF = "CONSTANT_HALF"
    ZERO = "ZERO"
    INTERIOR = "INTERIOR"
    ALTERNATING = "ALTERNATING"
    UNDEFINED = "UNDEFINED"


@dataclass(frozen=True)
class LimitResult:
    """Long-run behaviour of Y as the horizon recedes.

    For ALTERNATING, `values` holds the limit of the iterates produced by
    the first parameter triple, then by the second.
    """
    case: LimitCase
    values: Tuple[float, ...]
    iterations: int
    residual: float
    converged: bool = True

    @property
    def value(self) -> Optional[float]:
        return self.values[0] if self.values else None

    def to_dict(self) -> Dict:
        return {
            'case': self.case.value,
            'values': list(self.values),
            'iterations': self.iterations,
            'residual': self.residual,
            'converged': self.converged,
        }


@dataclass(frozen=True)
class NodeAnalysis:
    node_id: int
    time: int
    gamma: float
    y_value: float
    round_trip: RoundTrip
    one_go: bool
    z_ratio: Union[float, RatioMarker]
    upper_bound: float


@dataclass
class AnalysisReport:
    nodes: List[NodeAnalysis] = field(default_factory=list)
    pimi_cutoff: Optional[int] = None
    limit_result: Optional[LimitResult] = None

    def node(self, node_id: int) -> NodeAnalysis:
        return next(n for n in self.nodes if n.node_id == node_id)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                'node_id': n.node_id,
                'time': n.time,
                'gamma': n.gamma,
                'Y': n.y_value,
                'round_trip': n.round_trip.value,
                'one_go': n.one_go,
                'z': n.z_ratio.value if isinstance(n.z_ratio, RatioMarker) else n.z_ratio,
                'upper_bound': n.upper_bound,
            }
            for n in self.nodes
        ]
        return pd.DataFrame(rows, columns=['node_id', 'time', 'gamma', 'Y', 'round_trip',
                                           'one_go', 'z', 'upper_bound'])

    def to_dict(self) -> Dict:
        return {
            'nodes': self.to_frame().to_dict(orient='records'),
            'pimi_cutoff': self.pimi_cutoff,
            'limit_result': self.limit_result.to_dict() if self.limit_result else None,
        }


def closure_gap(tree: ScenarioTree, node_id: int, yfield: YField) -> float:
    """1/2 - Y rebuilt from the children: E[(1/2 - Y') beta^2/eta] + closure^2 / curvature.

    Both terms are non-negative, so Y = 1/2 exactly when Y' = 1/2 on every
    child and the one-go closure expression vanishes.
    """
    gamma = tree.node(node_id).gamma
    m = node_moments(tree, node_id, yfield)
    weighted = sum(
        child.prob * (0.5 - yfield.for_node(child)) * child.beta ** 2 * gamma / child.gamma
        for child in tree.children(node_id)
    )
    return weighted + m.closure ** 2 / m.curvature


def classify_round_trips(tree: ScenarioTree, yfield: YField,
                         tol: float = Config.EVENT_TOL) -> Dict[int, RoundTrip]:
    """NONE exactly where Y = 1/2, cross-checked against the gap rebuilt from the children.

    The labels only disagree with the rebuilt gap when it sits within a
    factor of two of tol.
    """
    labels = {}
    for node_id in sorted(tree.nodes):
        y = yfield.for_node(tree.node(node_id))
        label = RoundTrip.NONE if abs(y - 0.5) <= tol else RoundTrip.PROFITABLE
        labels[node_id] = label
        if tree.is_terminal(node_id):
            continue
        gap = closure_gap(tree, node_id, yfield)
        if label is RoundTrip.PROFITABLE and gap <= tol / 2.0:
            raise ConsistencyError(
                f"Node {node_id}: children give 1/2 - Y = {gap!r} but Y={y!r}"
            )
        if label is RoundTrip.NONE and gap > 2.0 * tol:
            raise ConsistencyError(
                f"Node {node_id}: Y=1/2 but the children give 1/2 - Y = {gap!r}"
            )
    return labels


def classify_premature_closure(tree: ScenarioTree, yfield: YField, tol: float = Config.EVENT_TOL,
                               verify: bool = True) -> Dict[int, bool]:
    """Nodes where the optimal trade is -x for every state.

    Leaves are always flagged since their trade is forced to -x.
    """
    flags = {}
    for node_id in sorted(tree.nodes):
        if tree.is_terminal(node_id):
            flags[node_id] = True
            continue
        m = node_moments(tree, node_id, yfield)
        flags[node_id] = abs(m.closure) <= tol * m.closure_scale
        if flags[node_id] and verify:
            _verify_closure(tree, node_id, yfield, tol, m.curvature, m.closure_scale)
    return flags


def _verify_closure(tree: ScenarioTree, node_id: int, yfield: YField, tol: float, curvature: float,
                    scale: float) -> None:
    gamma = tree.node(node_id).gamma
    rng = np.random.default_rng(node_id)
    for x, d in rng.uniform(-2.0, 2.0, size=(CLOSURE_SAMPLES, 2)):
        trade = optimal_trade(tree, node_id, yfield, x, d)
        allowed = tol * scale * max(1.0, 1.0 / curvature) * (1.0 + abs(x) + abs(d) / gamma)
        if abs(trade + x) > allowed:
            raise ConsistencyError(
                f"Node {node_id} flagged for premature closure but xi*({x!r}, {d!r}) = {trade!r}"
            )


def _step_gap(gap_next: float, mean_beta: float, mean_eta: float, mean_alpha: float) -> float:
    """1/2 - Y_{k-1} from 1/2 - Y_k, the deterministic form of closure_gap.

    Working with the gap keeps the O((E[beta] - 1)^2) term that Y itself
    loses to rounding next to 1/2.
    """
    y_next = 0.5 - gap_next
    closure = 0.5 * (1.0 - mean_beta) + gap_next * (mean_beta - mean_alpha)
    curvature = y_next * (mean_alpha - 2.0 * mean_beta + mean_eta) + (1.0 - mean_alpha) / 2.0
    return gap_next * mean_alpha + closure ** 2 / curvature


def pimi_cutoff(model: PIMIModel, tol: float = Config.EVENT_TOL, verify: bool = True) -> int:
    """Earliest n such that E[beta_k] = 1 for every later step; the horizon if none"""
    cutoff = model.horizon
    for k in reversed(model.step_indices):
        mean_beta, _, _ = model.step_means(k)
        if abs(mean_beta - 1.0) > tol:
            break
        cutoff = k - 1

    if verify:
        yfield = compute_Y_pimi(model)
        gap = 0.0
        for n in reversed(range(model.start, model.horizon + 1)):
            if n < model.horizon:
                gap = _step_gap(gap, *model.step_means(n + 1))
            y = yfield[n]
            if n >= cutoff:
                if abs(y - 0.5) > tol:
                    raise ConsistencyError(f"Y_{n} = {y!r} should equal 1/2 from the cutoff {cutoff} on")
            elif not gap > 0.0:
                raise ConsistencyError(f"Y_{n} should be below 1/2 before the cutoff {cutoff}")
            elif (y < 0.5 - tol) != (gap > tol) and abs(gap - tol) > tol / 2.0:
                raise ConsistencyError(f"Y_{n} = {y!r} disagrees with the rebuilt gap {gap!r}")
    logger.debug(f"PIMI cutoff at time {cutoff}")
    return cutoff


def _check_triple(beta_bar: float, eta_bar: float, alpha_bar: float) -> None:
    values = (beta_bar, eta_bar, alpha_bar)
    if not all(math.isfinite(v) for v in values) or beta_bar <= 0.0 or eta_bar <= 0.0 or alpha_bar <= 0.0:
        raise ParameterError(f"Parameters must be finite and positive, got {values}")
    if not alpha_bar < 1.0:
        raise ParameterError(f"E[beta^2/eta] = {alpha_bar!r} must be below 1")
    if beta_bar ** 2 / eta_bar > alpha_bar * (1.0 + Config.LIMIT_TOL):
        raise ParameterError(
            f"Unrealizable parameters: E[beta]^2/E[eta] = {beta_bar ** 2 / eta_bar!r} exceeds "
            f"E[beta^2/eta] = {alpha_bar!r}"
        )


def interior_fixed_point(beta_bar: float, eta_bar: float, alpha_bar: float) -> float:
    slack = (1.0 - alpha_bar) * (eta_bar - 1.0)
    return 0.5 * slack / (slack + (beta_bar - 1.0) ** 2)


def y_sequence(params: Sequence[float], steps: int) -> List[float]:
    """Y_N = 1/2 followed by `steps` iterates of the homogeneous map"""
    g = homogeneous_map(*params)
    values = [0.5]
    for _ in range(steps):
        values.append(g(values[-1]))
    return values


def long_time_limit(beta_bar: float, eta_bar: float, alpha_bar: float,
                    tol: float = Config.LIMIT_TOL, max_iter: int = Config.LIMIT_MAX_ITER) -> LimitResult:
    """Limit of Y for step-constant (E[beta], E[eta], E[beta^2/eta]) as the horizon recedes"""
    _check_triple(beta_bar, eta_bar, alpha_bar)
    if abs(beta_bar - 1.0) <= Config.LIMIT_TOL:
        case, limit = LimitCase.CONSTANT_HALF, 0.5
    elif eta_bar <= 1.0:
        case, limit = LimitCase.ZERO, 0.0
    else:
        case, limit = LimitCase.INTERIOR, interior_fixed_point(beta_bar, eta_bar, alpha_bar)

    g = homogeneous_map(beta_bar, eta_bar, alpha_bar)
    y, iterations = 0.5, 0
    while abs(y - limit) >= tol and iterations < max_iter:
        y = g(y)
        iterations += 1
    residual = abs(y - limit)
    converged = residual < tol

    if not converged:
        # Still moving toward the limit: slow, not stalled
        if abs(g(y) - limit) < residual:
            logger.warning(
                f"Y approaches the {case.value} limit {limit!r} slowly for E[eta] = {eta_bar!r}; "
                f"still {residual!r} away after {iterations} iterations"
            )
        else:
            raise ConsistencyError(
                f"Iteration stalled short of the {case.value} limit {limit!r} after {max_iter} steps "
                f"(residual {residual!r})"
            )
    logger.info(f"Long-time limit {case.value} {limit!r} after {iterations} iteration(s)")
    return LimitResult(case, (limit,), iterations, residual, converged)


def alternating_limits(params_odd: Sequence[float], params_even: Sequence[float],
                       tol: float = Config.LIMIT_TOL, max_iter: int = Config.LIMIT_MAX_ITER) -> LimitResult:
    """Two subsequence limits of Y when steps alternate between two parameter triples.

    Exactly one triple must have E[beta] = 1. The other triple acts at the
    last step, so Y_{N-1} comes from its map and the maps alternate from there.
    """
    for params in (params_odd, params_even):
        _check_triple(*params)
    unit = [abs(p[0] - 1.0) <= Config.LIMIT_TOL for p in (params_odd, params_even)]
    if unit.count(True) != 1:
        raise ParameterError("Exactly one parameter triple must have E[beta] = 1")
    if unit[0]:
        unit_params, other_params = params_odd, params_even
    else:
        unit_params, other_params = params_even, params_odd
    if not other_params[1] > 1.0:
        raise ParameterError(f"The E[beta] != 1 triple needs E[eta] > 1, got {other_params[1]!r}")

    g_unit = homogeneous_map(*unit_params)
    g_other = homogeneous_map(*other_params)
    after_other, after_unit = g_other(0.5), None
    iterations = 1
    while iterations < max_iter:
        next_unit = g_unit(after_other)
        next_other = g_other(next_unit)
        iterations += 2
        settled = after_unit is not None and abs(next_unit - after_unit) < tol \
            and abs(next_other - after_other) < tol
        after_unit, after_other = next_unit, next_other
        if settled:
            break
    else:
        raise ConsistencyError(f"Alternating iteration did not settle within {max_iter} steps")

    residual = max(abs(g_unit(after_other) - after_unit), abs(g_other(after_unit) - after_other))
    floor = interior_fixed_point(*other_params)
    if abs(after_unit - after_other) <= tol:
        raise ConsistencyError(f"Alternating limits coincide at {after_unit!r}")
    for value in (after_unit, after_other):
        if not floor - tol <= value <= 0.5:
            raise ConsistencyError(f"Alternating limit {value!r} outside [{floor!r}, 1/2]")

    values = (after_unit, after_other) if unit[0] else (after_other, after_unit)
    logger.info(f"Alternating limits {values[0]!r} / {values[1]!r} after {iterations} iterations")
    return LimitResult(LimitCase.ALTERNATING, values, iterations, residual)


def check_submartingale(tree: ScenarioTree, yfield: YField, tol: float = 1e-12) -> List[int]:
    """Nodes where gamma*Y exceeds its conditional expectation one step ahead"""
    failures = []
    for node_id in sorted(tree.nodes):
        if tree.is_terminal(node_id):
            continue
        node = tree.node(node_id)
        ahead = sum(c.prob * c.gamma * yfield.for_node(c) for c in tree.children(node_id))
        if node.gamma * yfield.for_node(node) > ahead + tol * max(1.0, abs(ahead)):
            failures.append(node_id)
    return failures


def check_impact_drop(tree: ScenarioTree, yfield: YField, tol: float = Config.EVENT_TOL) -> List[int]:
    """Nodes where some E_n[gamma_k], k > n, falls below gamma_n and yet Y = 1/2.

    Selling everything at such a k already beats the no-round-trip cost, so
    the list is empty for a correct Y field.
    """
    failures = []
    for node_id in sorted(tree.nodes):
        if tree.is_terminal(node_id):
            continue
        node = tree.node(node_id)
        drop = node.gamma - min(expected_future_impacts(tree, node_id))
        if drop > 2.0 * tol * node.gamma and abs(yfield.for_node(node) - 0.5) <= tol:
            failures.append(node_id)
    return failures


def covariance_y_inverse_gamma(tree: ScenarioTree, yfield: YField, time: int) -> float:
    """E[Y/gamma] - E[Y] E[1/gamma] over the nodes at `time`"""
    mean_ratio = mean_y = mean_inv = 0.0
    for node_id in tree.level(time):
        node = tree.node(node_id)
        prob = tree.path_probability(node_id)
        y = yfield.for_node(node)
        mean_ratio += prob * y / node.gamma
        mean_y += prob * y
        mean_inv += prob / node.gamma
    return mean_ratio - mean_y * mean_inv


def _pimi_limit(model: PIMIModel) -> LimitResult:
    triples = [model.step_means(k) for k in model.step_indices]
    first = triples[0]
    homogeneous = all(
        all(abs(a - b) <= Config.LIMIT_TOL * max(1.0, abs(b)) for a, b in zip(t, first)) for t in triples
    )
    if not homogeneous:
        return LimitResult(LimitCase.UNDEFINED, (), 0, 0.0, converged=False)
    return long_time_limit(*first)


def analyze(tree: ScenarioTree, yfield: YField, tol: float = Config.EVENT_TOL,
            pimi: Optional[PIMIModel] = None) -> AnalysisReport:
    round_trips = classify_round_trips(tree, yfield, tol)
    one_go = classify_premature_closure(tree, yfield, tol)
    report = AnalysisReport()
    for node_id in sorted(tree.nodes):
        node = tree.node(node_id)
        report.nodes.append(NodeAnalysis(
            node_id=node_id,
            time=node.time,
            gamma=node.gamma,
            y_value=yfield.for_node(node),
            round_trip=round_trips[node_id],
            one_go=one_go[node_id],
            z_ratio=deviation_position_ratio(tree, node_id, yfield, tol),
            upper_bound=y_upper_bound(tree, node_id),
        ))
    dropped = check_impact_drop(tree, yfield, tol)
    if dropped:
        raise ConsistencyError(f"Y = 1/2 at node(s) {dropped} although expected impact drops later")
    if pimi is not None and pimi.steps:
        report.pimi_cutoff = pimi_cutoff(pimi, tol)
        report.limit_result = _pimi_limit(pimi)

    flagged = sum(1 for n in report.nodes if n.round_trip is RoundTrip.PROFITABLE)
    logger.info(f"Analysis: {flagged} of {len(report.nodes)} node(s) admit profitable round trips")
    return report
