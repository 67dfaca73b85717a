"""JSON run configuration shared by the command-line front end.

A run config is a single JSON object with optional sections "model",
"loss", "train", "wiener", an optional top-level "seed" shortcut, and an
optional "paths" table of default locations. Every section accepts exactly
the fields of its dataclass; unknown keys anywhere are rejected rather than
ignored, so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError, FormatError
from .model import ModelConfig
from .preprocess import WienerConfig
from .training import LossConfig, TrainConfig


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    wiener: WienerConfig = field(default_factory=WienerConfig)
    paths: dict = field(default_factory=dict)


_TUPLE_FIELDS = {"encoder_channels", "dilations", "decoder_channels"}


def _build_section(cls, mapping: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(mapping) - names
    if unknown:
        raise ConfigError(f"unknown keys in {section!r} section: {sorted(unknown)}")
    kwargs = {}
    for key, value in mapping.items():
        if key in _TUPLE_FIELDS:
            if not isinstance(value, list):
                raise ConfigError(f"{section}.{key} must be a JSON array")
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad value in {section!r} section: {exc}") from exc


_SECTIONS = {
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "wiener": WienerConfig,
}


def run_config_from_mapping(doc: dict) -> RunConfig:
    """Validate a parsed JSON object into a RunConfig.

    Sections may be omitted (defaults apply) but may not contain unknown
    keys. A top-level "seed" is shorthand for train.seed and must not
    contradict an explicit one.
    """
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = set(doc) - set(_SECTIONS) - {"seed", "paths"}
    if unknown:
        raise ConfigError(f"unknown top-level keys in run config: {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        raw = doc.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"section {name!r} must be a JSON object")
        sections[name] = _build_section(cls, raw, name)
    if "seed" in doc:
        seed = doc["seed"]
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        train_section = doc.get("train", {})
        if "seed" in train_section and train_section["seed"] != seed:
            raise ConfigError("top-level seed contradicts train.seed")
        sections["train"] = dataclasses.replace(sections["train"], seed=seed)
    paths = doc.get("paths", {})
    if not isinstance(paths, dict) or not all(isinstance(v, str) for v in paths.values()):
        raise ConfigError("paths must be a JSON object of strings")
    return RunConfig(paths=dict(paths), **sections)


def load_run_config(path) -> RunConfig:
    """Read and validate a JSON run config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    return run_config_from_mapping(doc)
