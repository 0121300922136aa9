"""
Experiment config loading, overrides, validation and hashing.
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Type, Union

from pydantic import BaseModel, ValidationError

from ranlab.core.exceptions import ConfigError
from ranlab.schemas.experiment import ExperimentConfig

logger = logging.getLogger(__name__)


def _strip_comments(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if not line.lstrip().startswith("//"))


def load_raw(config_path: Union[str, Path]) -> dict:
    """
    Read a JSON config file; full-line // comments are ignored.

    Raises:
        ConfigError: If the file is missing or is not a JSON object
    """
    path = Path(config_path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        raw = json.loads(_strip_comments(path.read_text()))
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON in {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return raw


def parse_value(text: str):
    """JSON literal if it parses, plain string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _field_model(model: Type[BaseModel], key: str) -> Optional[Type[BaseModel]]:
    annotation = model.model_fields[key].annotation
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    return None


def check_key(dotted: str, model: Type[BaseModel] = ExperimentConfig) -> None:
    """
    Raise ConfigError unless the dotted key names a field of the schema.
    """
    parts = dotted.split(".")
    current: Optional[Type[BaseModel]] = model
    for i, part in enumerate(parts):
        if current is None or part not in current.model_fields:
            raise ConfigError(dotted, "unknown config key")
        current = _field_model(current, part)
        if current is None and i < len(parts) - 1:
            raise ConfigError(dotted, "unknown config key")


def apply_overrides(raw: dict, overrides: Iterable[str]) -> dict:
    """
    Apply dotted.key=value overrides to a raw config dictionary.

    Raises:
        ConfigError: If an override is malformed or names an unknown key
    """
    raw = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like dotted.key=value")
        dotted, text = item.split("=", 1)
        dotted = dotted.strip()
        check_key(dotted)
        node = raw
        parts = dotted.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[parts[-1]] = parse_value(text)
        logger.debug(f"Override {dotted} = {node[parts[-1]]!r}")
    return raw


def validate_raw(raw: dict) -> ExperimentConfig:
    """
    Validate a raw config against the schema.

    Raises:
        ConfigError: Located at the first failing field's dotted path
    """
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(key, first["msg"]) from e


def defaulted_fields(raw: dict, model: Type[BaseModel] = ExperimentConfig, prefix: str = "") -> List[str]:
    """Dotted paths of schema fields the raw config leaves at their defaults."""
    out = []
    for name in model.model_fields:
        path = f"{prefix}{name}"
        nested = _field_model(model, name)
        if name not in raw:
            out.append(path)
        elif nested is not None and isinstance(raw[name], dict):
            out.extend(defaulted_fields(raw[name], nested, f"{path}."))
    return out


def load_config(config_path: Union[str, Path], overrides: Iterable[str] = ()) -> Tuple[ExperimentConfig, dict]:
    """
    Load, override and validate an experiment config.

    Returns:
        Tuple of (validated config, raw dictionary after overrides)
    """
    raw = apply_overrides(load_raw(config_path), overrides)
    return validate_raw(raw), raw


def canonical_json(cfg: ExperimentConfig) -> str:
    """
    Key-sorted compact JSON of the fields a run actually reads.

    Only experiment, seeds and the active sub-config are kept, so output_dir
    and the other experiments' sections never change the hash.
    """
    payload = cfg.model_dump(mode="json", include={"experiment", "seeds", cfg.experiment})
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()
