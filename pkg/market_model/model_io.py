import json
from pathlib import Path
from typing import Mapping, Union

import requests

from config import Config
from errors import ModelParseError
from logger import setup_logger
from market_model.model_types import PIMIModel, ScenarioTree
from market_model.pimi import parse_pimi, pimi_to_dict
from market_model.scenario_tree import build_tree, to_dict

logger = setup_logger('ModelIO')

Model = Union[ScenarioTree, PIMIModel]


def model_from_dict(spec: Mapping) -> Model:
    """Dispatch on the description shape: `pimi` block or explicit `nodes`"""
    if not isinstance(spec, Mapping):
        raise ModelParseError(f"Model description must be a mapping, got {type(spec).__name__}")
    if 'pimi' in spec:
        if 'nodes' in spec:
            raise ModelParseError("Model description has both 'nodes' and 'pimi'")
        return parse_pimi(spec)
    return build_tree(spec)


def model_to_dict(model: Model) -> dict:
    if isinstance(model, PIMIModel):
        return pimi_to_dict(model)
    return to_dict(model)


def _read_source(source: str) -> str:
    if source.startswith(('http://', 'https://')):
        try:
            response = requests.get(source, timeout=Config.HTTP_TIMEOUT)
            response.raise_for_status()
        except requests.RequestException as e:
            raise ModelParseError(f"Could not fetch model from {source}: {e}") from e
        return response.text
    try:
        return Path(source).read_text()
    except OSError as e:
        raise ModelParseError(f"Could not read model file {source}: {e}") from e


def load_model(source: str) -> Model:
    """Load a model from a file path or an http(s) URL"""
    text = _read_source(str(source))
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelParseError(f"Model {source} is not valid JSON: {e}") from e
    model = model_from_dict(spec)
    logger.info(f"Loaded {'PIMI' if isinstance(model, PIMIModel) else 'tree'} model from {source}")
    return model


def dump_model(model: Model) -> str:
    return json.dumps(model_to_dict(model), indent=4)


def save_model(model: Model, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_model(model))
    logger.debug(f"Saved model to {path}")
