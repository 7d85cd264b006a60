"""Experiment configuration: a flat TOML file parsed strictly into ``ExperimentConfig``."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from touchloc.actions import (
    DEFAULT_FIXED_TIME,
    DEFAULT_INPLANE,
    DEFAULT_MARGIN,
    DEFAULT_SPEED,
    DEFAULT_SPHERE_RADIUS,
    DEFAULT_TABLE_SCATTER,
)
from touchloc.geometry import BUILTIN_MESHES

SCHEMES = ("ig", "hp", "whp", "random", "human")
TERMINATIONS = ("budget", "mass", "entropy")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of a batch run.  Field names are the config-file keys."""

    scene: str = "drill"  # builtin name or path to an .obj file
    sensed_pose: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    truth_offset: tuple[float, float, float, float] = (0.015, -0.015, -0.01, 0.05)
    prior_cov_diag: tuple[float, float, float, float] = (0.03, 0.03, 0.03, 0.1)
    particles: int = 300
    n_human: int = 3
    n_sphere: int = 9
    n_normal: int = 45
    n_table: int = 3
    metrics: tuple[str, ...] = ("ig", "hp", "whp", "random")
    d_T: float = 1.0
    sigma: float = 0.5
    ig_sigma: float = 0.5
    ig_squared: bool = False
    obs_spacing: float = 1.0
    nocontact_multiplicity: int = 1
    noise_sigma: float = 0.1
    termination: str = "budget"
    termination_value: float = 5.0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = "runs/out"
    speed: float = DEFAULT_SPEED
    fixed_time: float = DEFAULT_FIXED_TIME
    sphere_radius: float = DEFAULT_SPHERE_RADIUS
    inplane: float = DEFAULT_INPLANE
    margin: float = DEFAULT_MARGIN
    table_scatter: float = DEFAULT_TABLE_SCATTER
    jitter_scale: float = 0.1  # resampling noise, as a fraction of the prior std-devs
    lazy: bool = True  # lazy greedy for hp/whp; ig always runs naive greedy
    baseline_update: str = "whp"  # weighting used by random/human to update the belief
    record_timing: bool = False  # selection_ms is wall-clock, so it breaks byte-identical reruns
    rig: str = "three_finger"
    rig_spread: float = 0.03
    spatial_index: bool = True
    workers: int = 1

    def __post_init__(self):
        counts = (self.particles, self.n_human + self.n_sphere + self.n_normal + self.n_table)
        if any(c <= 0 for c in counts) or min(self.n_human, self.n_sphere, self.n_normal, self.n_table) < 0:
            raise ConfigError("particle and action counts must be positive")
        if self.n_human > 3:
            raise ConfigError("there are only 3 human-designed actions")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not self.metrics:
            raise ConfigError("metrics must be non-empty")
        bad = [m for m in self.metrics if m not in SCHEMES]
        if bad:
            raise ConfigError(f"unknown metric(s) {bad}; choose from {SCHEMES}")
        if "human" in self.metrics and self.n_human != 3:
            raise ConfigError("the human scheme needs n_human = 3")
        if self.termination not in TERMINATIONS:
            raise ConfigError(f"termination must be one of {TERMINATIONS}")
        if self.baseline_update not in ("hp", "whp"):
            raise ConfigError("baseline_update must be 'hp' or 'whp'")
        if self.rig not in ("single", "three_finger"):
            raise ConfigError("rig must be 'single' or 'three_finger'")
        for name in ("d_T", "sigma", "ig_sigma", "obs_spacing", "speed"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if any(v <= 0 for v in self.prior_cov_diag):
            raise ConfigError("prior_cov_diag entries must be positive")
        if self.nocontact_multiplicity < 1 or self.workers < 1:
            raise ConfigError("nocontact_multiplicity and workers must be >= 1")
        if self.scene not in BUILTIN_MESHES and not Path(self.scene).suffix == ".obj":
            raise ConfigError(f"scene must be one of {sorted(BUILTIN_MESHES)} or an .obj path")

    @property
    def action_counts(self) -> dict[str, int]:
        return dict(human=self.n_human, sphere=self.n_sphere, normal=self.n_normal, table=self.n_table)

    @property
    def n_actions(self) -> int:
        return sum(self.action_counts.values())

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, value):
    default = _FIELDS[name].default
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list")
        if len(default) == 4 and name != "metrics" and name != "seeds" and len(value) != 4:
            raise ConfigError(f"{name} needs 4 entries")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string")
    return value


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {k: _coerce(k, v) for k, v in data.items()}
    scene = values.get("scene")
    if scene and scene not in BUILTIN_MESHES and base_dir is not None and not Path(scene).is_absolute():
        values["scene"] = str((base_dir / scene).resolve())
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found table(s) {nested}")
    return config_from_dict(data, path.parent)


def dump_config(cfg: ExperimentConfig) -> str:
    """The config as TOML text, keys in field order."""
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        lines.append(f"{name} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(v)
