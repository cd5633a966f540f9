#!/usr/bin/env python3
"""
Experiment Configuration
Strict YAML run configurations, named presets and config hashing.
"""

import copy
import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from environments import DimMode, KeyTermRewardModel
from policies import PolicyType


class EnvironmentKind(str, Enum):
    SYNTHETIC_STOCHASTIC = "synthetic-stochastic"
    SYNTHETIC_CONTEXTUAL = "synthetic-contextual"
    DATASET = "dataset"


class ConfigError(ValueError):
    """Configuration problem with an optional source position or field path."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None,
                 field_path: Optional[str] = None):
        self.line = line
        self.column = column
        self.field_path = field_path
        location = ""
        if line is not None:
            location = f" (line {line}, column {column})"
        elif field_path:
            location = f" (field '{field_path}')"
        super().__init__(f"{message}{location}")


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid', populate_by_name=True, frozen=True)


class GeneratorSpec(StrictModel):
    """Synthetic dataset written before loading a dataset environment."""
    num_users: int = Field(20, ge=1)
    num_items: int = Field(200, ge=1)
    num_keyterms: int = Field(20, ge=1)
    dim: int = Field(20, ge=1)
    seed: int = 0
    keyterm_contexts: bool = False


DATASET_FILE_FIELDS = ('items_file', 'keyterms_file', 'graph_file', 'users_file')


class EnvironmentSpec(StrictModel):
    kind: EnvironmentKind
    num_keyterms: int = Field(10, ge=1)
    items_per_keyterm: int = Field(10, ge=1)
    discount: float = Field(0.5, alias='lambda')
    noise_sigma: float = Field(0.1, ge=0)
    dim_mode: DimMode = DimMode.ONE_HOT
    dim: Optional[int] = Field(None, ge=1)
    keyterm_model: KeyTermRewardModel = KeyTermRewardModel.DISCOUNTED_MAX
    items_file: Optional[Path] = None
    keyterms_file: Optional[Path] = None
    graph_file: Optional[Path] = None
    users_file: Optional[Path] = None
    generator: Optional[GeneratorSpec] = None

    @field_validator('discount')
    @classmethod
    def _discount_in_range(cls, value: float) -> float:
        if not (0 < value <= 1):
            raise ValueError(f"lambda out of range: {value} (must satisfy 0 < lambda <= 1)")
        return value

    @model_validator(mode='after')
    def _dataset_files(self) -> 'EnvironmentSpec':
        if self.kind is not EnvironmentKind.DATASET:
            return self
        if self.generator is not None:
            return self
        for name in ('items_file', 'graph_file', 'users_file'):
            path = getattr(self, name)
            if path is None:
                raise ValueError(f"dataset environment requires '{name}' (or a 'generator' block)")
            if not Path(path).exists():
                raise ValueError(f"{name} does not exist: {path}")
        if self.keyterms_file is not None and not Path(self.keyterms_file).exists():
            raise ValueError(f"keyterms_file does not exist: {self.keyterms_file}")
        return self

    def file_digests(self) -> Dict[str, str]:
        """SHA-256 of each referenced dataset file that exists, keyed by field name."""
        digests = {}
        for name in DATASET_FILE_FIELDS:
            path = getattr(self, name)
            if path is not None and Path(path).is_file():
                digests[name] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        return digests


class PolicySpec(StrictModel):
    kind: PolicyType
    gamma: float = Field(1.0, ge=0)
    alpha: float = Field(1.0, ge=0)
    schedule_scale: int = Field(10, ge=0)
    schedule_base: float = Field(10.0, gt=1)
    label: Optional[str] = None

    @field_validator('kind', mode='before')
    @classmethod
    def _known_kind(cls, value: Any) -> Any:
        if isinstance(value, PolicyType):
            return value
        known = [kind.value for kind in PolicyType]
        if value not in known:
            raise ValueError(f"unknown policy kind '{value}' (expected one of {', '.join(known)})")
        return value

    @property
    def name(self) -> str:
        return self.label or self.kind.value


class RunConfig(StrictModel):
    name: str
    environment: EnvironmentSpec
    policies: List[PolicySpec] = Field(min_length=1)
    horizon: int = Field(ge=1)
    repetitions: int = Field(1, ge=1)
    base_seed: int = 0
    output_dir: Path = Path("outputs")
    workers: int = Field(1, ge=1)
    save_traces: bool = False

    @model_validator(mode='after')
    def _unique_policy_names(self) -> 'RunConfig':
        names = [policy.name for policy in self.policies]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate policy names {duplicates}; set 'label' to disambiguate")
        return self

    def config_hash(self) -> str:
        """
        SHA-256 over the fields that change results (not output location or worker count).

        Referenced dataset files contribute a digest of their contents, so editing a file
        in place changes the hash.
        """
        payload = self.model_dump(mode='json', by_alias=True, exclude={'output_dir', 'workers', 'name'})
        payload['file_digests'] = self.environment.file_digests()
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


PRESETS: Dict[str, Dict[str, Any]] = {
    'paper-synthetic': {
        'name': 'paper-synthetic',
        'environment': {
            'kind': 'synthetic-stochastic',
            'num_keyterms': 10,
            'items_per_keyterm': 10,
            'lambda': 0.5,
        },
        'policies': [
            {'kind': 'hier_ucb', 'gamma': 1.0},
            {'kind': 'ucb'},
            {'kind': 'hier_linucb', 'gamma': 1.0, 'alpha': 1.0},
        ],
        'horizon': 50000,
        'repetitions': 50,
        'base_seed': 0,
    },
    'desk-contextual': {
        'name': 'desk-contextual',
        'environment': {
            'kind': 'dataset',
            'lambda': 0.5,
            'noise_sigma': 0.1,
            'generator': {'num_users': 20, 'num_items': 200, 'num_keyterms': 20, 'dim': 20, 'seed': 0},
        },
        'policies': [
            {'kind': 'hier_linucb', 'gamma': 0.5, 'alpha': 0.25},
            {'kind': 'linucb', 'alpha': 0.25},
            {'kind': 'freqcon_linucb', 'alpha': 0.25},
        ],
        'horizon': 30000,
        'repetitions': 20,
        'base_seed': 0,
    },
    'smoke': {
        'name': 'smoke',
        'environment': {'kind': 'synthetic-stochastic', 'num_keyterms': 2, 'items_per_keyterm': 3,
                        'lambda': 0.5},
        'policies': [{'kind': 'hier_ucb'}, {'kind': 'ucb'}, {'kind': 'oracle'}],
        'horizon': 500,
        'repetitions': 3,
        'base_seed': 0,
    },
}


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _from_dict(document: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        first = exc.errors()[0]
        path = '.'.join(str(part) for part in first['loc'])
        message = first['msg']
        if first['type'] == 'extra_forbidden':
            message = f"unknown key '{first['loc'][-1]}'"
        raise ConfigError(message.removeprefix('Value error, '), field_path=path or None) from exc


def load_preset(name: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}' (available: {', '.join(sorted(PRESETS))})",
                          field_path='preset')
    return _from_dict(_merge(PRESETS[name], overrides or {}))


def parse_config(text: str, preset: Optional[str] = None) -> RunConfig:
    """
    Parse and validate a YAML run configuration.

    A top-level `preset:` key (or the `preset` argument) starts from a named preset and
    applies the rest of the document as overrides.
    """
    try:
        document = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML parse error: {exc.problem}",
                          line=mark.line + 1 if mark else None,
                          column=mark.column + 1 if mark else None) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from exc

    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a mapping at the top level")

    document = dict(document)
    preset_name = document.pop('preset', None) or preset
    if preset_name is not None:
        return load_preset(str(preset_name), document)
    return _from_dict(document)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding='utf-8'))


def with_overrides(config: RunConfig, **fields: Any) -> RunConfig:
    """Copy with CLI-level overrides (output_dir, base_seed, workers) re-validated."""
    updates = {key: value for key, value in fields.items() if value is not None}
    if not updates:
        return config
    return _from_dict(_merge(config.model_dump(mode='python', by_alias=True), updates))
