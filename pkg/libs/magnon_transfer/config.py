from __future__ import annotations

import copy
import hashlib
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import yaml
from pydantic import ValidationError

from .device import build_effective_model, validate_regime
from .errors import ConfigError
from .models import ScenarioConfig

_INITIAL_PATTERN = re.compile(r"^(fock|cat):([+-]?\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)$")
_ASSIGNMENT_PATTERN = re.compile(r"^([a-z_][a-z0-9_]*(?:\.[a-z0-9_]+)*)=(.*)$")
_REPLACED_SECTIONS = {"initial"}
_DEFAULT_PRESETS_DIR = Path(__file__).resolve().parents[2] / "config" / "presets"

YamlPath = Tuple[str, ...]


def presets_dir() -> Path:
    return Path(os.getenv("MAGNON_TRANSFER_PRESETS_DIR", str(_DEFAULT_PRESETS_DIR)))


def preset_names() -> List[str]:
    return sorted(path.stem for path in presets_dir().glob("*.yaml"))


def preset_path(name: str) -> Path:
    path = presets_dir() / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"Unsupported preset: {name} (available: {', '.join(preset_names()) or 'none'})")
    return path


def load_preset(name: str) -> Dict[str, Any]:
    data = yaml.safe_load(preset_path(name).read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"preset {name} is not a mapping")
    return data


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key not in _REPLACED_SECTIONS:
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_initial_shorthand(text: str) -> Dict[str, Any]:
    """``fock:2`` or ``cat:1.5`` to an ``initial`` section."""
    match = _INITIAL_PATTERN.match(text.strip().lower())
    if not match:
        raise ConfigError(f"Unsupported initial-state format: {text} (expected fock:<k> or cat:<zeta>)")
    kind, value = match.group(1), match.group(2)
    if kind == "fock":
        try:
            level = int(value)
        except ValueError as exc:
            raise ConfigError(f"Fock level must be an integer: {text}") from exc
        return {"kind": "fock", "k": level}
    return {"kind": "cat", "zeta": float(value)}


def apply_assignment(data: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    """Set a dotted key from ``section.key=value``; the value is read as YAML."""
    match = _ASSIGNMENT_PATTERN.match(assignment.strip())
    if not match:
        raise ConfigError(f"Unsupported override format: {assignment} (expected section.key=value)")
    keys = match.group(1).split(".")
    try:
        value = yaml.safe_load(match.group(2))
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {assignment}: unreadable value") from exc
    updated = copy.deepcopy(data)
    node = updated
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override {assignment}: {key} is not a section")
        node = child
    node[keys[-1]] = value
    return updated


def _key_lines(raw_text: str) -> Dict[YamlPath, int]:
    """1-based line of every mapping key, addressed by its path."""
    lines: Dict[YamlPath, int] = {}
    try:
        root = yaml.compose(raw_text)
    except yaml.YAMLError:
        return lines

    def walk(node: Any, path: YamlPath) -> None:
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                child = path + (str(key_node.value),)
                lines[child] = key_node.start_mark.line + 1
                walk(value_node, child)
        elif isinstance(node, yaml.SequenceNode):
            for index, item in enumerate(node.value):
                child = path + (str(index),)
                lines[child] = item.start_mark.line + 1
                walk(item, child)

    if root is not None:
        walk(root, ())
    return lines


def _format_errors(exc: ValidationError, lines: Dict[YamlPath, int]) -> str:
    messages: List[str] = []
    for error in exc.errors():
        loc = tuple(str(part) for part in error.get("loc", ()))
        # discriminated unions add the tag to the location
        path = tuple(part for part in loc if part not in ("fock", "cat", "superposition"))
        dotted = ".".join(path) or "config"
        line: Optional[int] = None
        for size in range(len(path), 0, -1):
            if path[:size] in lines:
                line = lines[path[:size]]
                break
        prefix = f"line {line}: " if line is not None else ""
        messages.append(f"{prefix}{dotted}: {error.get('msg', 'invalid value')}")
    return "; ".join(messages)


def validate_config(
    raw_text: str,
    *,
    overrides: Sequence[str] = (),
    initial: Optional[str] = None,
) -> ScenarioConfig:
    """Parse YAML text, merge it over its scenario preset and validate the result."""
    try:
        data = yaml.safe_load(raw_text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        location = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{location}unreadable YAML: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(data, dict):
        raise ConfigError("line 1: config must be a mapping of sections")

    scenario = data.get("scenario")
    if isinstance(scenario, str) and scenario != "custom" and scenario in preset_names():
        data = deep_merge(load_preset(scenario), data)
    for assignment in overrides:
        data = apply_assignment(data, assignment)
    if initial:
        data["initial"] = parse_initial_shorthand(initial)

    try:
        config = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, _key_lines(raw_text))) from exc

    if config.device is not None:
        params = config.device.to_params()
        model = build_effective_model(params)
        config.attach_device_summary(model, validate_regime(params, model))
    return config


def load_config(path: Union[str, Path], **kwargs: Any) -> ScenarioConfig:
    try:
        raw_text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return validate_config(raw_text, **kwargs)


def load_preset_config(name: str, **kwargs: Any) -> ScenarioConfig:
    preset_path(name)
    return validate_config(f"scenario: {name}\n", **kwargs)


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True, default_flow_style=False)


def config_fingerprint(config: ScenarioConfig) -> str:
    return hashlib.sha256(dump_config(config).encode("utf-8")).hexdigest()
