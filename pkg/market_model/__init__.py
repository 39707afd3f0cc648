from .model_types import (
    PIMIModel, PimiAtom, ScenarioTree, TreeNode, ValidationReport, Violation,
)
from .scenario_tree import build_chain, build_tree, serialize, structural_sum, to_dict, validate
from .pimi import deterministic_pimi, parse_pimi, pimi_to_dict, pimi_to_tree, validate_pimi
from .model_io import dump_model, load_model, model_from_dict, model_to_dict, save_model

# example_builders depends on backward_engine and is imported directly
