import numpy as np
import pytest

from market_model import build_chain, build_tree
from market_model.example_builders import build_random_tree


@pytest.fixture
def one_period_tree():
    """Single node at the horizon: the trade is forced"""
    return build_tree({'horizon': 0, 'start': 0, 'nodes': [{'id': 0, 'time': 0, 'gamma': 1.0}]})


@pytest.fixture
def two_period_chain():
    """Deterministic beta = 0.5, eta = 1 over one step; Y at the start is 0.375"""
    return build_chain([0.5], [1.0, 1.0])


@pytest.fixture
def branching_tree():
    """Two-level tree with three children at the root and two below each"""
    nodes = [{'id': 0, 'time': 0, 'parent': None, 'gamma': 1.0}]
    children = [(1, 0.2, 0.6, 1.1), (2, 0.5, 0.9, 1.4), (3, 0.3, 1.2, 2.0)]
    next_id = 4
    for node_id, prob, beta, gamma in children:
        nodes.append({'id': node_id, 'time': 1, 'parent': 0, 'prob': prob, 'beta': beta, 'gamma': gamma})
        for q, b, s in ((0.4, 0.7, 1.5), (0.6, 1.1, 2.0)):
            nodes.append({'id': next_id, 'time': 2, 'parent': node_id, 'prob': q, 'beta': b,
                          'gamma': gamma * b * b * s})
            next_id += 1
    return build_tree({'horizon': 2, 'start': 0, 'nodes': nodes})


@pytest.fixture
def random_trees():
    """Factory for reproducible batches of valid random trees"""
    def factory(count, max_depth=3, max_branching=3, unit_mean_beta=0.0, seed=0):
        rng = np.random.default_rng(seed)
        trees = []
        for i in range(count):
            depth = int(rng.integers(1, max_depth + 1))
            branching = int(rng.integers(1, max_branching + 1))
            trees.append(build_random_tree(seed * 10_000 + i, depth, branching, unit_mean_beta))
        return trees
    return factory
