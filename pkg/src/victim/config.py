"""Load and save victim specifications as YAML."""

from pathlib import Path
from typing import Any, Optional, Union

import yaml

from src.models.victim import VictimConfigError, VictimSpec

DEFAULT_VICTIMS_PATH = Path(__file__).resolve().parents[2] / "config" / "victims.yaml"


def _flatten(entry: dict[str, Any]) -> dict[str, Any]:
    """Merge an optional nested `defenses:` block into the top level."""
    data = dict(entry)
    defenses = data.pop("defenses", None) or {}
    for key, value in defenses.items():
        data[key] = value
    return data


def spec_from_dict(entry: dict[str, Any], name: Optional[str] = None) -> VictimSpec:
    data = _flatten(entry)
    if name is not None:
        data.setdefault("name", name)
    return VictimSpec.model_validate(data)


def load_victim_presets(path: Union[str, Path] = DEFAULT_VICTIMS_PATH) -> dict[str, VictimSpec]:
    """Every named victim in a victims file."""
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    victims = data.get("victims", data)
    if not isinstance(victims, dict):
        raise VictimConfigError(f"{path}: expected a mapping of victim presets")
    return {name: spec_from_dict(entry or {}, name) for name, entry in victims.items()}


def load_victim_spec(
    path: Union[str, Path] = DEFAULT_VICTIMS_PATH, preset: Optional[str] = None
) -> VictimSpec:
    """A single spec: the named preset, or the file itself when it holds one victim."""
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if "victims" in data:
        presets = load_victim_presets(path)
        if preset is None:
            if len(presets) != 1:
                raise VictimConfigError(
                    f"{path} defines {len(presets)} victims; choose one of {sorted(presets)}"
                )
            return next(iter(presets.values()))
        if preset not in presets:
            raise VictimConfigError(f"unknown victim preset '{preset}'; have {sorted(presets)}")
        return presets[preset]
    return spec_from_dict(data)


def dump_victim_spec(spec: VictimSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    data = spec.model_dump(mode="json", by_alias=True, exclude_defaults=True)
    data.setdefault("l", spec.vocab_size)
    data.setdefault("h", spec.hidden_dim)
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=False)
    return path
