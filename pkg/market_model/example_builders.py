"""Constructive example models and random model generators.

The constructions reproduce known market behaviours: optimal premature
closure with deterministic parameters, premature closure with (0,1)-valued
resilience driven by negative correlation between Y and 1/gamma, profitable
round trips although resilience has conditional mean one (with and without
randomness at that step), and waiting until the horizon when impact moves
with resilience.
"""
import math
from typing import Callable, Dict, Sequence

import numpy as np

from errors import ModelValidationError, ParameterError
from logger import setup_logger
from backward_engine.recursion import two_period_closed_form
from market_model.model_types import PIMIModel, ScenarioTree
from market_model.pimi import parse_pimi
from market_model.scenario_tree import build_chain, build_tree, validate

logger = setup_logger('ExampleBuilders')


def _validated(tree: ScenarioTree, label: str) -> ScenarioTree:
    report = validate(tree)
    if not report.ok:
        worst = max(report.violations, key=lambda v: v.value)
        raise ModelValidationError(
            f"{label}: structural assumption fails at node {worst.location} "
            f"(E[beta^2/eta] = {worst.value!r})",
            report,
        )
    return tree


def build_example_premature_deterministic(gamma_N: float, gamma_N1: float, beta_N: float,
                                          horizon: int = 2) -> ScenarioTree:
    """Deterministic chain on times N-2, N-1, N where closing everything at N-2 is optimal.

    beta_{N-1} = 1 + a and gamma_{N-2} are chosen so that the premature
    closure expression vanishes at N-2 while Y_{N-2} < 1/2.
    """
    if gamma_N <= 0.0 or gamma_N1 <= 0.0:
        raise ParameterError("Impact values must be positive")
    eta_N = gamma_N / gamma_N1
    if not 0.0 < beta_N < math.sqrt(eta_N) or beta_N == 1.0:
        raise ParameterError(
            f"beta_N = {beta_N!r} must lie in (0, sqrt(eta_N) = {math.sqrt(eta_N)!r}) and differ from 1"
        )

    y_N1 = two_period_closed_form([1.0], [beta_N], [eta_N])
    a = min(0.5, 0.5 * (0.5 - y_N1) / y_N1)
    ratio = a * y_N1 / (0.5 - y_N1)
    eta_N1 = (1.0 + a) ** 2 / (1.0 - ratio)
    gamma_N2 = gamma_N1 / eta_N1
    logger.debug(f"Premature closure example: Y_(N-1)={y_N1!r}, a={a!r}, gamma_(N-2)={gamma_N2!r}")

    tree = build_chain([1.0 + a, beta_N], [gamma_N2, gamma_N1, gamma_N], start=horizon - 2)
    return _validated(tree, "Deterministic premature closure example")


def build_example_premature_stochastic(p: float, horizon: int = 2) -> ScenarioTree:
    """Premature closure at N-2 with every beta in (0, 1).

    gamma_{N-1} is 1/2 (prob 1-p) or 1 (prob p), gamma_N = gamma_{N-1}^2 and
    beta_N = gamma_{N-1}/2. beta_{N-1} sits at the midpoint of its admissible
    interval and gamma_{N-2} solves the premature closure equation.
    """
    if not 0.0 < p < 1.0:
        raise ParameterError(f"p must lie in (0, 1), got {p!r}")
    probs = [1.0 - p, p]
    gammas = [0.5, 1.0]
    ys = [two_period_closed_form([1.0], [g / 2.0], [g]) for g in gammas]

    mean_y_over_gamma = sum(q * y / g for q, y, g in zip(probs, ys, gammas))
    mean_y = sum(q * y for q, y in zip(probs, ys))
    mean_inv_gamma = sum(q / g for q, g in zip(probs, gammas))
    lower = mean_y_over_gamma / (mean_y * mean_inv_gamma)
    beta_N1 = (lower + 1.0) / 2.0

    numerator = sum(q * (0.5 - y * beta_N1) for q, y in zip(probs, ys))
    denominator = sum(q * (0.5 - y) * beta_N1 ** 2 / g for q, y, g in zip(probs, ys, gammas))
    gamma_N2 = numerator / denominator

    start = horizon - 2
    nodes = [{'id': 0, 'time': start, 'parent': None, 'prob': 1.0, 'beta': 1.0, 'gamma': gamma_N2}]
    for i, (q, g) in enumerate(zip(probs, gammas), start=1):
        nodes.append({'id': i, 'time': start + 1, 'parent': 0, 'prob': q, 'beta': beta_N1, 'gamma': g})
        nodes.append({'id': i + 2, 'time': horizon, 'parent': i, 'prob': 1.0,
                      'beta': g / 2.0, 'gamma': g * g})
    tree = build_tree({'horizon': horizon, 'start': start, 'nodes': nodes})
    return _validated(tree, "Stochastic premature closure example")


def build_example_roundtrip_on_unit_mean(a: float, p: float, gammas: Sequence[float],
                                         horizon: int = 2) -> ScenarioTree:
    """Three-branch model with E[beta_{N-1}] = 1 that still admits profitable round trips.

    beta_{N-1} is 1 (prob 1-p) or 1 -/+ a (prob p/2 each) and is carried
    unchanged to beta_N. `gammas` is the deterministic impact at N-2, N-1, N.
    """
    if not 0.0 < a < 1.0 or not 0.0 < p < 1.0:
        raise ParameterError(f"a and p must lie in (0, 1), got a={a!r}, p={p!r}")
    if len(gammas) != 3 or min(gammas) <= 0.0:
        raise ParameterError("gammas needs three positive values for times N-2, N-1, N")

    start = horizon - 2
    branches = [(p / 2.0, 1.0 - a), (1.0 - p, 1.0), (p / 2.0, 1.0 + a)]
    nodes = [{'id': 0, 'time': start, 'parent': None, 'prob': 1.0, 'beta': 1.0, 'gamma': gammas[0]}]
    for i, (q, beta) in enumerate(branches, start=1):
        nodes.append({'id': i, 'time': start + 1, 'parent': 0, 'prob': q, 'beta': beta, 'gamma': gammas[1]})
        nodes.append({'id': i + 3, 'time': horizon, 'parent': i, 'prob': 1.0, 'beta': beta, 'gamma': gammas[2]})
    tree = build_tree({'horizon': horizon, 'start': start, 'nodes': nodes})
    return _validated(tree, f"Unit-mean round trip example (gamma too flat for a={a!r})")


def build_example_unit_resilience_step(beta_N: float, gammas: Sequence[float],
                                       horizon: int = 2) -> ScenarioTree:
    """Deterministic chain with beta_{N-1} = 1 and beta_N != 1.

    Y_{N-1} < 1/2 because of the last step, so Y_{N-2} < 1/2 as well even
    though E[beta_{N-1}] = 1, and the optimal trade at N-2 from (0, d) is
    not zero. `gammas` is the impact at N-2, N-1, N.
    """
    if len(gammas) != 3 or min(gammas) <= 0.0:
        raise ParameterError("gammas needs three positive values for times N-2, N-1, N")
    if beta_N <= 0.0 or beta_N == 1.0:
        raise ParameterError(f"beta_N must be positive and differ from 1, got {beta_N!r}")
    tree = build_chain([1.0, beta_N], list(gammas), start=horizon - 2)
    return _validated(tree, "Unit resilience step example")


def build_example_impact_tracks_resilience(seed: int, depth: int = 3, branching: int = 2,
                                           start: int = 0) -> ScenarioTree:
    """Random tree with gamma_{n+1} = beta_{n+1} gamma_n on every edge, i.e. eta = beta.

    beta is drawn from (0.3, 0.95), so beta^2/eta = beta < 1. Here
    Y_n = E_n[gamma_N] / (2 gamma_n) and waiting until the horizon is optimal.
    """
    rng = np.random.default_rng(seed)
    nodes = [{'id': 0, 'time': start, 'parent': None, 'prob': 1.0, 'beta': 1.0,
              'gamma': float(rng.uniform(0.5, 2.0))}]
    frontier = [nodes[0]]
    for _ in range(depth):
        new_frontier = []
        for parent in frontier:
            m = int(rng.integers(1, branching + 1))
            probs = rng.dirichlet(np.ones(m)) if m > 1 else np.ones(1)
            for q, beta in zip(probs, rng.uniform(0.3, 0.95, size=m)):
                child = {'id': len(nodes), 'time': parent['time'] + 1, 'parent': parent['id'],
                         'prob': float(q), 'beta': float(beta), 'gamma': parent['gamma'] * float(beta)}
                nodes.append(child)
                new_frontier.append(child)
        frontier = new_frontier
    tree = build_tree({'horizon': start + depth, 'start': start, 'nodes': nodes})
    return _validated(tree, "Impact tracking resilience example")


def build_random_tree(seed: int, depth: int, branching: int, unit_mean_beta: float = 0.0,
                      start: int = 0) -> ScenarioTree:
    """Random tree that always satisfies the structural assumption.

    Each child gets eta = beta^2 * s with s in (1.05, 3), so the
    conditional mean of beta^2/eta stays below 1/1.05. With probability
    `unit_mean_beta` a node's children have beta rescaled to mean one.
    """
    rng = np.random.default_rng(seed)
    nodes = [{'id': 0, 'time': start, 'parent': None, 'prob': 1.0, 'beta': 1.0,
              'gamma': float(rng.uniform(0.5, 2.0))}]
    frontier = [nodes[0]]
    next_id = 1
    for _ in range(depth):
        new_frontier = []
        for parent in frontier:
            m = int(rng.integers(1, branching + 1))
            probs = rng.dirichlet(np.ones(m)) if m > 1 else np.ones(1)
            betas = rng.uniform(0.3, 1.5, size=m)
            if rng.random() < unit_mean_beta:
                betas = betas / float(np.dot(probs, betas))
            scales = rng.uniform(1.05, 3.0, size=m)
            for q, beta, s in zip(probs, betas, scales):
                child = {'id': next_id, 'time': parent['time'] + 1, 'parent': parent['id'],
                         'prob': float(q), 'beta': float(beta),
                         'gamma': parent['gamma'] * float(beta) ** 2 * float(s)}
                nodes.append(child)
                new_frontier.append(child)
                next_id += 1
        frontier = new_frontier
    return build_tree({'horizon': start + depth, 'start': start, 'nodes': nodes})


def build_random_pimi(seed: int, steps: int, atoms: int = 2, beta_range=(0.3, 1.5),
                      gamma_start: float = 1.0, start: int = 0) -> PIMIModel:
    """Random valid PIMI model; `atoms=1` gives deterministic beta and eta"""
    rng = np.random.default_rng(seed)
    raw_steps = []
    for _ in range(steps):
        weights = rng.dirichlet(np.ones(atoms)) if atoms > 1 else np.ones(1)
        betas = rng.uniform(*beta_range, size=atoms)
        scales = rng.uniform(1.05, 3.0, size=atoms)
        raw_steps.append([[float(w), float(b), float(b) ** 2 * float(s)]
                          for w, b, s in zip(weights, betas, scales)])
    return parse_pimi({'horizon': start + steps, 'start': start,
                       'pimi': {'gamma_start': gamma_start, 'steps': raw_steps}})


EXAMPLES: Dict[str, Callable[[int], ScenarioTree]] = {
    'premature-det': lambda seed: build_example_premature_deterministic(1.0, 1.0, 0.5),
    'premature-stoch': lambda seed: build_example_premature_stochastic(0.5),
    'roundtrip-unit-mean': lambda seed: build_example_roundtrip_on_unit_mean(0.1, 0.5, (1.0, 1.25, 1.5625)),
    'unit-resilience-step': lambda seed: build_example_unit_resilience_step(0.5, (1.0, 2.0, 2.0)),
    'impact-tracks-resilience': lambda seed: build_example_impact_tracks_resilience(seed),
    'random': lambda seed: build_random_tree(seed, depth=3, branching=3),
}


def build_example(name: str, seed: int = 0) -> ScenarioTree:
    """Factory for the named example presets"""
    if name not in EXAMPLES:
        raise ValueError(f"Unknown example: {name} (choose from {', '.join(EXAMPLES)})")
    return EXAMPLES[name](seed)
