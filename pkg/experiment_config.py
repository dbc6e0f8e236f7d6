"""
Experiment configuration for the Monte Carlo harness
Overlays a JSON file on built-in defaults and validates the result
"""

import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from allocator import Objective
from bayes import CurrentState, MedicalRecord, builtin_current_states, state_from_index
from errors import ConfigError, DomainError
from medical_records import OBSERVATION_DAYS, load_record, synthesize_record
from scenario import ScenarioConfig

logger = logging.getLogger(__name__)


class ModelFamily(Enum):
    """Allocation model run before and after prioritization"""
    WSRMAX = "wsrmax"
    PF = "pf"

    @property
    def objectives(self) -> Tuple[Objective, Objective]:
        """(before-phase, after-phase) objectives"""
        if self is ModelFamily.WSRMAX:
            return Objective.WSRMAX, Objective.WSRMAX
        return Objective.PF_BEFORE, Objective.PF_AFTER


@dataclass(frozen=True)
class RecordSource:
    """A CSV record on disk or a synthetic record drawn from a seed"""
    path: Optional[str] = None
    synthetic_seed: Optional[int] = None
    stroke_rate: float = 0.4
    days: int = OBSERVATION_DAYS

    def __post_init__(self):
        if (self.path is None) == (self.synthetic_seed is None):
            raise ConfigError("a record source needs exactly one of 'path' or 'synthetic_seed'")

    def load(self, base_dir: Union[str, Path, None] = None) -> MedicalRecord:
        """Read or synthesize the record; relative paths resolve against base_dir"""
        if self.path is not None:
            path = Path(self.path)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return load_record(path)
        return synthesize_record(self.synthetic_seed, self.stroke_rate, self.days)

    def to_dict(self) -> Dict[str, Any]:
        """JSON form of the source, as accepted by from_dict"""
        if self.path is not None:
            return {"path": self.path}
        return {"synthetic_seed": self.synthetic_seed, "stroke_rate": self.stroke_rate, "days": self.days}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RecordSource":
        """Parse one records entry; unknown keys raise ConfigError"""
        unknown = set(data) - {"path", "synthetic_seed", "stroke_rate", "days"}
        if unknown:
            raise ConfigError(f"unknown record source keys: {sorted(unknown)}")
        return cls(**data)


def default_records(count: int) -> Tuple[RecordSource, ...]:
    """Synthetic records with moderate to high stroke rates in rotation"""
    rates = (0.5, 0.6, 0.7)
    return tuple(RecordSource(synthetic_seed=8 + i, stroke_rate=rates[i % 3]) for i in range(count))


DEFAULT_RECORDS = default_records(3)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    instances: int = 400
    alphas: Tuple[float, ...] = (50.0, 500.0, 1000.0)
    states: Tuple[CurrentState, ...] = field(default_factory=lambda: tuple(builtin_current_states()))
    families: Tuple[ModelFamily, ...] = (ModelFamily.WSRMAX, ModelFamily.PF)
    records: Tuple[RecordSource, ...] = DEFAULT_RECORDS
    master_seed: int = 2019
    smoothing: float = 1.0
    base_dir: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.instances < 1:
            raise ConfigError(f"instances must be >= 1, got {self.instances}")
        if not self.alphas or any(not (math.isfinite(a) and a >= 0) for a in self.alphas):
            raise ConfigError(f"alphas must be a non-empty list of finite values >= 0, got {self.alphas}")
        if not self.states:
            raise ConfigError("at least one current state is required")
        if not self.families:
            raise ConfigError("at least one model family is required")
        if len(self.records) != self.scenario.num_outpatients:
            raise ConfigError(
                f"{self.scenario.num_outpatients} outpatients need as many records, got {len(self.records)}")
        if not self.smoothing >= 0:
            raise ConfigError(f"smoothing must be >= 0, got {self.smoothing}")

    def to_dict(self) -> Dict[str, Any]:
        """Effective config in the shape ExperimentConfigManager reads"""
        return {
            "scenario": self.scenario.to_dict(),
            "instances": self.instances,
            "alphas": list(self.alphas),
            "states": [dict(zip(("cholesterol", "systolic", "diastolic", "smoking"), s.to_names()))
                       for s in self.states],
            "objectives": [f.value for f in self.families],
            "records": [r.to_dict() for r in self.records],
            "master_seed": self.master_seed,
            "smoothing": self.smoothing,
        }


class ExperimentConfigManager:
    KEYS = ("scenario", "instances", "alphas", "states", "objectives", "records", "master_seed", "smoothing")

    def __init__(self, config_file: Optional[Union[str, Path]] = None):
        """Load config_file over the defaults; no file means defaults only"""
        self.config_file = Path(config_file) if config_file is not None else None
        self.records_given = False
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        config = self._create_default_config()
        if self.config_file is None:
            return config
        try:
            with open(self.config_file, "r") as f:
                overrides = json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"Error loading config file {self.config_file}: {e}")
            raise ConfigError(f"{self.config_file} is not valid JSON: {e}") from e
        if not isinstance(overrides, dict):
            raise ConfigError(f"{self.config_file} must hold a JSON object")

        unknown = set(overrides) - set(self.KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in overrides.items():
            if key == "scenario":
                config["scenario"] = self._merge_scenario(config["scenario"], value)
            else:
                config[key] = value
        self.records_given = "records" in overrides
        logger.info(f"Loaded experiment configuration from {self.config_file}")
        return config

    @staticmethod
    def _merge_scenario(base: Dict[str, Any], override: Any) -> Dict[str, Any]:
        if not isinstance(override, dict):
            raise ConfigError("'scenario' must be an object")
        merged = copy.deepcopy(base)
        for key, value in override.items():
            if key == "channel" and isinstance(value, dict):
                merged["channel"].update(value)
            else:
                merged[key] = value
        return merged

    @staticmethod
    def _create_default_config() -> Dict[str, Any]:
        defaults = ExperimentConfig()
        config = defaults.to_dict()
        config["states"] = list(range(1, len(defaults.states) + 1))
        return config

    @staticmethod
    def _parse_state(entry: Any) -> CurrentState:
        try:
            if isinstance(entry, int) and not isinstance(entry, bool):
                return state_from_index(entry)
            if isinstance(entry, dict):
                return CurrentState.from_names(
                    entry["cholesterol"], entry["systolic"], entry["diastolic"], entry["smoking"])
        except KeyError as e:
            raise ConfigError(f"state {entry} is missing {e}") from e
        except DomainError as e:
            raise ConfigError(str(e)) from e
        raise ConfigError(f"a state is a 1-based index or a level object, got {entry!r}")

    def build(self) -> ExperimentConfig:
        """Validated, immutable view of the loaded configuration"""
        config = self.config
        try:
            families = tuple(ModelFamily(name) for name in config["objectives"])
        except ValueError as e:
            raise ConfigError(f"objectives must be drawn from {[f.value for f in ModelFamily]}: {e}") from e
        try:
            scenario = ScenarioConfig.from_dict(config["scenario"])
            if self.records_given:
                records = tuple(RecordSource.from_dict(r) for r in config["records"])
            else:
                records = default_records(scenario.num_outpatients)
            return ExperimentConfig(
                scenario=scenario,
                instances=int(config["instances"]),
                alphas=tuple(config["alphas"]),
                states=tuple(self._parse_state(s) for s in config["states"]),
                families=families,
                records=records,
                master_seed=int(config["master_seed"]),
                smoothing=float(config["smoothing"]),
                base_dir=str(self.config_file.parent) if self.config_file is not None else None,
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid experiment config: {e}") from e

    def export_config(self, filename: Union[str, Path]):
        """Write the effective configuration"""
        try:
            with open(filename, "w") as f:
                json.dump(self.config, f, indent=2)
            logger.info(f"Exported experiment configuration to {filename}")
        except OSError as e:
            logger.error(f"Error exporting configuration: {e}")
            raise

    @classmethod
    def write_default(cls, filename: Union[str, Path], overwrite: bool = False):
        """Write the default configuration; an existing file needs overwrite=True"""
        if os.path.exists(filename) and not overwrite:
            raise ConfigError(f"{filename} already exists")
        cls().export_config(filename)
