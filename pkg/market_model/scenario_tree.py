import json
import math
from typing import Any, Dict, List, Mapping, Optional, Sequence

from config import Config
from errors import ModelParseError
from logger import setup_logger
from market_model.model_types import (
    ScenarioTree, TreeNode, ValidationReport, Violation, freeze_nodes,
)

logger = setup_logger('MarketModel')

NODE_KEYS = ('id', 'time', 'parent', 'prob', 'beta', 'gamma')


def parse_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelParseError(f"{where}: expected an integer, got {value!r}")
    if isinstance(value, float):
        if not value.is_integer():
            raise ModelParseError(f"{where}: expected an integer, got {value!r}")
        value = int(value)
    return value


def parse_real(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelParseError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ModelParseError(f"{where}: expected a finite number, got {value!r}")
    return value


def parse_horizon(spec: Mapping) -> tuple:
    if not isinstance(spec, Mapping):
        raise ModelParseError(f"Model description must be a mapping, got {type(spec).__name__}")
    for key in ('horizon', 'start'):
        if key not in spec:
            raise ModelParseError(f"Model description is missing '{key}'")
    horizon = parse_int(spec['horizon'], 'horizon')
    start = parse_int(spec['start'], 'start')
    if start > horizon:
        raise ModelParseError(f"start ({start}) is after horizon ({horizon})")
    return horizon, start


def build_tree(spec: Mapping) -> ScenarioTree:
    """Build a scenario tree from a model description.

    Args:
        spec: mapping with `horizon`, `start` and `nodes`, where every node
            is a mapping with id, time, parent, prob, beta, gamma. The root
            has parent None and may omit prob (1.0) and beta (1.0).

    Returns:
        ScenarioTree satisfying every structural invariant except the
        structural assumption on beta^2/eta, which `validate` checks.
    """
    horizon, start = parse_horizon(spec)
    raw_nodes = spec.get('nodes')
    if not isinstance(raw_nodes, Sequence) or isinstance(raw_nodes, (str, bytes)) or not raw_nodes:
        raise ModelParseError("Model description needs a non-empty 'nodes' list")

    parsed: Dict[int, dict] = {}
    for position, raw in enumerate(raw_nodes):
        where = f"nodes[{position}]"
        if not isinstance(raw, Mapping):
            raise ModelParseError(f"{where}: expected a mapping")
        for key in ('id', 'time', 'gamma'):
            if key not in raw:
                raise ModelParseError(f"{where}: missing '{key}'")
        node_id = parse_int(raw['id'], f"{where}.id")
        if node_id in parsed:
            raise ModelParseError(f"Duplicate node id {node_id}")
        parent = raw.get('parent')
        entry = {
            'id': node_id,
            'time': parse_int(raw['time'], f"{where}.time"),
            'parent': None if parent is None else parse_int(parent, f"{where}.parent"),
            'gamma': parse_real(raw['gamma'], f"{where}.gamma"),
        }
        if entry['parent'] is None:
            entry['prob'] = 1.0 if raw.get('prob') is None else parse_real(raw['prob'], f"{where}.prob")
            entry['beta'] = 1.0 if raw.get('beta') is None else parse_real(raw['beta'], f"{where}.beta")
        else:
            for key in ('prob', 'beta'):
                if raw.get(key) is None:
                    raise ModelParseError(f"{where}: missing '{key}'")
            entry['prob'] = parse_real(raw['prob'], f"{where}.prob")
            entry['beta'] = parse_real(raw['beta'], f"{where}.beta")
        parsed[node_id] = entry

    roots = [n for n in parsed.values() if n['parent'] is None]
    if len(roots) != 1:
        raise ModelParseError(f"Expected exactly one root node, found {len(roots)}")
    root = roots[0]
    if root['time'] != start:
        raise ModelParseError(f"Root node {root['id']} has time {root['time']}, expected start {start}")

    children: Dict[int, List[int]] = {node_id: [] for node_id in parsed}
    for entry in parsed.values():
        node_id = entry['id']
        if not start <= entry['time'] <= horizon:
            raise ModelParseError(f"Node {node_id} has time {entry['time']} outside [{start}, {horizon}]")
        if not 0.0 < entry['prob'] <= 1.0:
            raise ModelParseError(f"Node {node_id} probability {entry['prob']!r} outside (0, 1]")
        if entry['beta'] <= 0.0:
            raise ModelParseError(f"Node {node_id} has non-positive beta {entry['beta']!r}")
        if entry['gamma'] <= 0.0:
            raise ModelParseError(f"Node {node_id} has non-positive gamma {entry['gamma']!r}")
        parent = entry['parent']
        if parent is None:
            continue
        if parent not in parsed:
            raise ModelParseError(f"Node {node_id} references missing parent {parent}")
        if parsed[parent]['time'] + 1 != entry['time']:
            raise ModelParseError(
                f"Node {node_id} at time {entry['time']} is not one step after "
                f"parent {parent} at time {parsed[parent]['time']}"
            )
        children[parent].append(node_id)

    for node_id, kids in children.items():
        time = parsed[node_id]['time']
        if time < horizon and not kids:
            raise ModelParseError(f"Node {node_id} at time {time} < horizon has no children")
        if kids:
            total = sum(parsed[c]['prob'] for c in sorted(kids))
            if abs(total - 1.0) > Config.PROB_TOL:
                raise ModelParseError(
                    f"Children of node {node_id} have probabilities summing to {total!r}"
                )

    nodes = {
        node_id: TreeNode(
            id=node_id,
            time=entry['time'],
            parent=entry['parent'],
            prob=entry['prob'],
            beta=entry['beta'],
            gamma=entry['gamma'],
            children=tuple(sorted(children[node_id])),
        )
        for node_id, entry in parsed.items()
    }
    levels = [[] for _ in range(horizon - start + 1)]
    for node_id in sorted(nodes):
        levels[nodes[node_id].time - start].append(node_id)

    tree = ScenarioTree(
        horizon=horizon,
        start=start,
        nodes=freeze_nodes(nodes),
        root=root['id'],
        levels=tuple(tuple(level) for level in levels),
    )
    logger.debug(f"Built tree with {len(tree)} nodes over times {start}..{horizon}")
    return tree


def structural_sum(tree: ScenarioTree, node_id: int) -> float:
    """Conditional expectation of beta^2/eta over the children of node_id"""
    gamma = tree.node(node_id).gamma
    return sum(c.prob * c.beta ** 2 / (c.gamma / gamma) for c in tree.children(node_id))


def validate(tree: ScenarioTree) -> ValidationReport:
    """Check positivity and the structural assumption at every node.

    Failures are collected in the report, never raised.
    """
    report = ValidationReport()
    for level in tree.levels:
        for node_id in level:
            node = tree.node(node_id)
            if node.beta <= 0.0:
                report.violations.append(Violation(node_id, 'positive_beta', node.beta))
            if node.gamma <= 0.0:
                report.violations.append(Violation(node_id, 'positive_gamma', node.gamma))
            if tree.is_terminal(node_id):
                continue
            value = structural_sum(tree, node_id)
            report.measured[node_id] = value
            if not value < 1.0 - Config.STRUCTURAL_MARGIN:
                report.violations.append(Violation(node_id, 'structural_assumption', value))

    if report.ok:
        logger.debug(f"Tree with {len(tree)} nodes passed validation")
    else:
        logger.warning(f"Tree validation found {len(report.violations)} violation(s)")
    return report


def to_dict(tree: ScenarioTree) -> Dict:
    return {
        'horizon': tree.horizon,
        'start': tree.start,
        'nodes': [
            {
                'id': node.id,
                'time': node.time,
                'parent': node.parent,
                'prob': node.prob,
                'beta': node.beta,
                'gamma': node.gamma,
            }
            for node in (tree.node(i) for i in sorted(tree.nodes))
        ],
    }


def serialize(tree: ScenarioTree) -> str:
    """JSON text of the tree; float repr round-trips every value bit-exactly"""
    return json.dumps(to_dict(tree), indent=4)


def build_chain(betas: Sequence[float], gammas: Sequence[float], start: int = 0,
                root_beta: Optional[float] = None) -> ScenarioTree:
    """Deterministic model as a chain tree.

    Args:
        betas: resilience at times start+1 .. horizon
        gammas: impact at times start .. horizon (one more than betas)
    """
    if len(gammas) != len(betas) + 1:
        raise ModelParseError(
            f"A chain needs one more gamma than beta, got {len(gammas)} and {len(betas)}"
        )
    nodes = [{'id': 0, 'time': start, 'parent': None, 'prob': 1.0,
              'beta': 1.0 if root_beta is None else root_beta, 'gamma': gammas[0]}]
    for i, (beta, gamma) in enumerate(zip(betas, gammas[1:]), start=1):
        nodes.append({'id': i, 'time': start + i, 'parent': i - 1, 'prob': 1.0,
                      'beta': beta, 'gamma': gamma})
    return build_tree({'horizon': start + len(betas), 'start': start, 'nodes': nodes})
