from typing import List

import pandas as pd

from errors import LobExecError
from backward_engine.engine_types import QuadCoeffs, YField
from backward_engine.recursion import node_moments
from market_model.model_types import ScenarioTree


def value_function(tree: ScenarioTree, node_id: int, yfield: YField, x: float, d: float) -> float:
    """Minimal expected cost from state (x, d) at node_id.

    Y gamma x^2 - 2Y x d + (Y - 1/2) d^2/gamma, which is (Y/gamma)(d - gamma x)^2 - d^2/(2 gamma)
    with the d^2 terms collected so that V(0, d) carries the sign of Y - 1/2.
    With Y = 1/2 at the horizon this is the cost of closing the position immediately.
    """
    node = tree.node(node_id)
    gamma = node.gamma
    y = yfield.for_node(node)
    return y * gamma * x * x - 2.0 * y * x * d + (y - 0.5) * d * d / gamma


def quad_coeffs(tree: ScenarioTree, node_id: int, yfield: YField, x: float, d: float) -> QuadCoeffs:
    """Coefficients of the cost-to-go xi -> immediate cost + E[V_next]"""
    if tree.is_terminal(node_id):
        raise LobExecError(f"Node {node_id} is terminal; the trade is forced to -x")
    node = tree.node(node_id)
    gamma = node.gamma
    a = gamma * node_moments(tree, node_id, yfield).curvature
    b = c = 0.0
    for child in tree.children(node_id):
        eta = child.gamma / gamma
        y = yfield.for_node(child)
        alpha = child.beta ** 2 / eta
        carried = child.beta * d - child.gamma * x
        b += child.prob * (d * (1.0 - alpha) + 2.0 * y * (child.beta / eta - 1.0) * carried)
        carried_d = child.beta * d
        c += child.prob * (y * child.gamma * x * x - 2.0 * y * x * carried_d
                           + (y - 0.5) * carried_d * carried_d / child.gamma)
    return QuadCoeffs(a=a, b=b, c=c)


def expected_future_impacts(tree: ScenarioTree, node_id: int) -> List[float]:
    """E_n[gamma_k] for k = n+1 .. N, by forward accumulation of path weights"""
    frontier = [(node_id, 1.0)]
    expected = []
    while not tree.is_terminal(frontier[0][0]):
        frontier = [
            (child.id, weight * child.prob)
            for parent, weight in frontier
            for child in tree.children(parent)
        ]
        expected.append(sum(weight * tree.node(i).gamma for i, weight in frontier))
    return expected


def y_upper_bound(tree: ScenarioTree, node_id: int) -> float:
    """min over k >= n of E_n[gamma_k] / (2 gamma_n)"""
    gamma = tree.node(node_id).gamma
    return min([0.5] + [e / (2.0 * gamma) for e in expected_future_impacts(tree, node_id)])


def export_y_field(tree: ScenarioTree, yfield: YField) -> pd.DataFrame:
    rows = [
        {'node_id': node.id, 'time': node.time, 'gamma': node.gamma, 'Y': yfield.for_node(node)}
        for node in (tree.node(i) for i in sorted(tree.nodes))
    ]
    return pd.DataFrame(rows, columns=['node_id', 'time', 'gamma', 'Y'])
