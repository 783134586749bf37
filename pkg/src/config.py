"""
Pipeline configuration: one pydantic model per module namespace, with defaults tuned for
abdominal CT with oral contrast (2 mm voxels, 216 mm^3 supervoxels, 50,000 RANSAC
iterations, ...).

Precedence, lowest to highest: model defaults, JSON config file, environment (.env),
command-line overrides.
"""

import json
import os
from pathlib import Path
from typing import Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from errors import ConfigError

load_dotenv(override=True)

MODES = ("sp", "tsp", "tsp+cyl")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class VolumeConfig(_Section):
    spacing_mm: float = Field(2.0, gt=0)
    crop_z_mm: Optional[Tuple[float, float]] = None


class FilterConfig(_Section):
    # 1, 1.5 and 2 voxels at the default 2 mm spacing
    scales_mm: Tuple[float, ...] = (2.0, 3.0, 4.0)
    threshold: float = Field(0.5, gt=0, lt=1)
    bright_lumen: bool = True

    @model_validator(mode="after")
    def _check_scales(self):
        if not self.scales_mm or any(s <= 0 for s in self.scales_mm):
            raise ValueError("scales_mm needs at least one positive scale")
        return self


class SupervoxelConfig(_Section):
    target_volume_mm3: float = Field(216.0, gt=0)
    compactness: float = Field(0.01, gt=0)
    max_iter: int = Field(10, ge=1)


class SamplingConfig(_Section):
    theta_v_mm: float = Field(3.0, gt=0)
    theta_d_mm: float = Field(6.0, gt=0)


class CylinderConfig(_Section):
    patch_mm: float = Field(36.0, gt=0)
    height_mm: float = Field(18.0, gt=0)
    iterations: int = Field(50_000, ge=1)
    inlier_tol_mm: float = Field(1.0, gt=0)
    radius_min_mm: float = Field(7.04, gt=0)
    radius_max_mm: float = Field(15.28, gt=0)
    min_support: int = Field(30, ge=1)

    @model_validator(mode="after")
    def _check_radius_range(self):
        if self.radius_min_mm >= self.radius_max_mm:
            raise ValueError("radius_min_mm must be smaller than radius_max_mm")
        return self

    @property
    def radius_range(self):
        return (self.radius_min_mm, self.radius_max_mm)


class GraphConfig(_Section):
    lam: float = Field(1.0, ge=0)
    default_cyl_cost: float = Field(0.5, ge=0, le=1)


class TspConfig(_Section):
    delta_mm: float = Field(50.0, gt=0)
    dummy_cost: float = Field(1e9, gt=0)
    improve: bool = True


class MetricsConfig(_Section):
    resample_mm: float = Field(1.0, gt=0)
    jump_tol_mm: float = Field(20.0, gt=0)
    dist_tol_mm: float = Field(10.0, gt=0)


class PipelineConfig(_Section):
    volume: VolumeConfig = Field(default_factory=VolumeConfig)
    filters: FilterConfig = Field(default_factory=FilterConfig)
    supervoxel: SupervoxelConfig = Field(default_factory=SupervoxelConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    cylinders: CylinderConfig = Field(default_factory=CylinderConfig)
    graph: GraphConfig = Field(default_factory=GraphConfig)
    tsp: TspConfig = Field(default_factory=TspConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    mode: Literal["sp", "tsp", "tsp+cyl"] = "tsp+cyl"
    seed: int = Field(0, ge=0)
    threads: Optional[int] = Field(None, ge=1)

    def to_json(self):
        """Deterministic JSON text (sorted keys) for effective_config.json."""
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def _env_overrides():
    overrides = {}
    if os.getenv("TUBETRACK_SEED"):
        overrides["seed"] = int(os.environ["TUBETRACK_SEED"])
    if os.getenv("TUBETRACK_THREADS"):
        overrides["threads"] = int(os.environ["TUBETRACK_THREADS"])
    return overrides


def _parse_value(text):
    """Parse a command-line override value as JSON, falling back to the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data, overrides):
    """Apply dotted ``namespace.key=value`` overrides to a nested config dict.

    Args:
        data (dict): Nested config data, modified in place.
        overrides (list[str]): Items like ``"graph.lam=0"`` or ``"seed=3"``.

    Returns:
        dict: The updated data.
    """
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        target = data
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = _parse_value(value.strip())
    return data


def load_config(path=None, overrides=None, use_env=True):
    """Build the effective PipelineConfig.

    Args:
        path: Optional flat JSON file with one object per namespace.
        overrides: Optional list of dotted ``key=value`` strings (highest precedence).
        use_env: Whether TUBETRACK_* environment variables are applied.

    Returns:
        PipelineConfig: The validated configuration.

    Raises:
        ConfigError: If the file is unreadable or any value is invalid.
    """
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file '{path}' does not exist")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file '{path}' is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigError(f"config file '{path}' must contain a JSON object")
    if use_env:
        data.update(_env_overrides())
    apply_overrides(data, overrides)
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"invalid config value for '{field}': {first['msg']}")
