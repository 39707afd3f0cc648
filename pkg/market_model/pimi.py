from typing import Dict, List, Mapping, Sequence

from config import Config
from errors import ModelParseError, ModelTooLargeError
from logger import setup_logger
from market_model.model_types import (
    PIMIModel, PimiAtom, ScenarioTree, TreeNode, ValidationReport, Violation, freeze_nodes,
)
from market_model.scenario_tree import parse_horizon, parse_real

logger = setup_logger('MarketModel')


def parse_pimi(spec: Mapping) -> PIMIModel:
    """Parse `{'horizon', 'start', 'pimi': {'gamma_start', 'steps'}}`.

    `steps` holds one atom list per step k = start+1 .. horizon, each atom
    a `[weight, beta, eta]` triple.
    """
    horizon, start = parse_horizon(spec)
    body = spec.get('pimi')
    if not isinstance(body, Mapping):
        raise ModelParseError("PIMI model description needs a 'pimi' mapping")
    if 'gamma_start' not in body:
        raise ModelParseError("PIMI model is missing 'gamma_start'")
    gamma_start = parse_real(body['gamma_start'], 'pimi.gamma_start')
    if gamma_start <= 0.0:
        raise ModelParseError(f"gamma_start must be positive, got {gamma_start!r}")

    raw_steps = body.get('steps')
    if not isinstance(raw_steps, Sequence) or isinstance(raw_steps, (str, bytes)):
        raise ModelParseError("PIMI model needs a 'steps' list")
    if len(raw_steps) != horizon - start:
        raise ModelParseError(
            f"PIMI model has {len(raw_steps)} steps, expected horizon - start = {horizon - start}"
        )

    steps = []
    for k, raw_atoms in enumerate(raw_steps, start=start + 1):
        if not isinstance(raw_atoms, Sequence) or not raw_atoms:
            raise ModelParseError(f"Step {k} needs a non-empty atom list")
        atoms = []
        for i, raw in enumerate(raw_atoms):
            where = f"pimi.steps[{k - start - 1}][{i}]"
            if not isinstance(raw, Sequence) or len(raw) != 3:
                raise ModelParseError(f"{where}: expected [weight, beta, eta]")
            weight, beta, eta = (parse_real(v, where) for v in raw)
            if not 0.0 < weight <= 1.0:
                raise ModelParseError(f"{where}: weight {weight!r} outside (0, 1]")
            if beta <= 0.0 or eta <= 0.0:
                raise ModelParseError(f"{where}: beta and eta must be positive")
            atoms.append(PimiAtom(weight, beta, eta))
        total = sum(a.weight for a in atoms)
        if abs(total - 1.0) > Config.PROB_TOL:
            raise ModelParseError(f"Step {k} weights sum to {total!r}")
        steps.append(tuple(atoms))

    return PIMIModel(horizon=horizon, start=start, gamma_start=gamma_start, steps=tuple(steps))


def validate_pimi(model: PIMIModel) -> ValidationReport:
    report = ValidationReport()
    for k in model.step_indices:
        location = f"step {k}"
        for atom in model.atoms(k):
            if atom.beta <= 0.0 or atom.eta <= 0.0:
                report.violations.append(Violation(location, 'positivity', min(atom.beta, atom.eta)))
        _, _, mean_alpha = model.step_means(k)
        report.measured[location] = mean_alpha
        if not mean_alpha < 1.0 - Config.STRUCTURAL_MARGIN:
            report.violations.append(Violation(location, 'structural_assumption', mean_alpha))
    if not report.ok:
        logger.warning(f"PIMI validation found {len(report.violations)} violation(s)")
    return report


def pimi_node_count(model: PIMIModel) -> int:
    total, width = 1, 1
    for k in model.step_indices:
        width *= len(model.atoms(k))
        total += width
    return total


def pimi_to_tree(model: PIMIModel) -> ScenarioTree:
    """Expand a PIMI model into its product tree.

    Every node of level k-1 gets one child per atom of step k, in atom
    order; ids are assigned breadth first.
    """
    count = pimi_node_count(model)
    if count > Config.NODE_CAP:
        raise ModelTooLargeError(
            f"PIMI expansion needs {count} nodes, above the cap of {Config.NODE_CAP}"
        )

    nodes: Dict[int, TreeNode] = {}
    children: Dict[int, List[int]] = {0: []}
    raw = {0: (model.start, None, 1.0, 1.0, model.gamma_start)}
    levels = [(0,)]
    next_id = 1
    for k in model.step_indices:
        level = []
        for parent in levels[-1]:
            parent_gamma = raw[parent][4]
            for atom in model.atoms(k):
                raw[next_id] = (k, parent, atom.weight, atom.beta, parent_gamma * atom.eta)
                children[parent].append(next_id)
                children[next_id] = []
                level.append(next_id)
                next_id += 1
        levels.append(tuple(level))

    for node_id, (time, parent, prob, beta, gamma) in raw.items():
        nodes[node_id] = TreeNode(node_id, time, parent, prob, beta, gamma, tuple(children[node_id]))

    logger.debug(f"Expanded PIMI model into {count} nodes")
    return ScenarioTree(
        horizon=model.horizon,
        start=model.start,
        nodes=freeze_nodes(nodes),
        root=0,
        levels=tuple(levels),
    )


def pimi_to_dict(model: PIMIModel) -> Dict:
    return {
        'horizon': model.horizon,
        'start': model.start,
        'pimi': {
            'gamma_start': model.gamma_start,
            'steps': [[[a.weight, a.beta, a.eta] for a in atoms] for atoms in model.steps],
        },
    }


def deterministic_pimi(betas: Sequence[float], etas: Sequence[float], gamma_start: float = 1.0,
                       start: int = 0) -> PIMIModel:
    """Single-atom PIMI model, i.e. deterministic beta and eta"""
    if len(betas) != len(etas):
        raise ModelParseError(f"Got {len(betas)} betas and {len(etas)} etas")
    return parse_pimi({
        'horizon': start + len(betas),
        'start': start,
        'pimi': {
            'gamma_start': gamma_start,
            'steps': [[[1.0, b, e]] for b, e in zip(betas, etas)],
        },
    })
