"""Load named experiment suites from YAML."""

from pathlib import Path
from typing import Any, Optional, Union

import yaml
from pydantic import ValidationError

from src.models.experiment import ConfigError, ExperimentConfig
from src.models.victim import VictimSpec
from src.victim.config import DEFAULT_VICTIMS_PATH, load_victim_presets, spec_from_dict

DEFAULT_EXPERIMENTS_PATH = Path(__file__).resolve().parents[2] / "config" / "experiments.yaml"


def _resolve_victims(
    entries: list[Union[str, dict[str, Any], VictimSpec]], victims_path: Union[str, Path]
) -> list[VictimSpec]:
    presets: Optional[dict[str, VictimSpec]] = None
    specs = []
    for entry in entries:
        if isinstance(entry, str):
            if presets is None:
                presets = load_victim_presets(victims_path)
            if entry not in presets:
                raise ConfigError(f"unknown victim preset '{entry}'; have {sorted(presets)}")
            specs.append(presets[entry])
        elif isinstance(entry, VictimSpec):
            specs.append(entry)
        else:
            specs.append(spec_from_dict(entry))
    return specs


def list_suites(path: Union[str, Path] = DEFAULT_EXPERIMENTS_PATH) -> list[str]:
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    return sorted((data.get("suites") or {}).keys())


def experiment_from_dict(
    data: dict[str, Any],
    name: str = "experiment",
    victims_path: Union[str, Path] = DEFAULT_VICTIMS_PATH,
    overrides: Optional[dict[str, Any]] = None,
) -> ExperimentConfig:
    """Validate a suite mapping; attack/mode compatibility is checked here, before any query."""
    data = {"name": name, **data, **(overrides or {})}
    data["victims"] = _resolve_victims(list(data.get("victims") or []), victims_path)
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment '{name}': {e}") from e
    config.check_compatibility()
    return config


def load_experiment(
    suite: str,
    path: Union[str, Path] = DEFAULT_EXPERIMENTS_PATH,
    victims_path: Union[str, Path] = DEFAULT_VICTIMS_PATH,
    overrides: Optional[dict[str, Any]] = None,
) -> ExperimentConfig:
    """The named suite, with top-level overrides such as seeds or output_dir."""
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    suites = data.get("suites") or {}
    if suite not in suites:
        raise ConfigError(f"unknown suite '{suite}'; have {sorted(suites)}")
    return experiment_from_dict(suites[suite] or {}, suite, victims_path, overrides)
