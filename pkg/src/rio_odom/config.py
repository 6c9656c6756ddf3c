"""Run configuration: one YAML file describes a whole run.

Schema (every section optional except one of ``dataset``/``scene``)::

    dataset:        # files on disk, see DatasetConfig
      layout: mulran | boreas | synthetic
      radar_dir: path            # relative paths resolve against the YAML file
      imu_file: path
      gt_file: path
      meters_per_pixel: 0.5
      ...
    scene:          # or: generate a synthetic sequence in memory
      motion_profile: [[duration, v_x, v_y, w_z], ...]
      ...
    registration:   # RegistrationConfig fields
      upsample: 4
    kalman:         # KalmanConfig fields (diagonals or full matrices)
      Q: [0, 0, 0.05, 2, 2]
    ablation:
      mode: fuse | radar_only | radar_kf | imu_only
      gyro_bias_on: true
      hpf_on: true
    gyro_bias: 0.001  # overrides dataset/scene value used for compensation
    outputs:
      directory: out
      plot: true
    timing: true
    evaluation:
      segment_step: 1
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, RioError
from .fusion import KalmanConfig
from .ingestion.datasets import DatasetConfig
from .ingestion.synthetic import SyntheticSceneSpec
from .pipeline import MODES
from .registration import RegistrationConfig


@dataclass(frozen=True)
class Ablation:
    mode: str = "fuse"
    gyro_bias_on: bool = True
    hpf_on: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}", field="ablation.mode")


@dataclass(frozen=True)
class Outputs:
    directory: Path | None = None
    plot: bool = True


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig | None = None
    scene: SyntheticSceneSpec | None = None
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    kalman: KalmanConfig = field(default_factory=KalmanConfig)
    ablation: Ablation = field(default_factory=Ablation)
    gyro_bias: float | None = None
    outputs: Outputs = field(default_factory=Outputs)
    timing: bool = True
    segment_step: int = 1
    twist: bool = True

    def __post_init__(self):
        if (self.dataset is None) == (self.scene is None):
            raise ConfigError("exactly one of dataset or scene is required", field="dataset")
        if self.segment_step < 1:
            raise ConfigError("segment_step must be >= 1", field="evaluation.segment_step")

    @property
    def available_bias(self) -> float:
        """Bias value used when compensation is on."""
        if self.gyro_bias is not None:
            return self.gyro_bias
        if self.dataset is not None:
            return self.dataset.gyro_bias
        return self.scene.gyro_bias

    def effective_registration(self) -> RegistrationConfig:
        hpf = self.ablation.hpf_on
        return replace(self.registration, hpf=hpf, hpf_translation=hpf and self.registration.hpf_translation)

    def effective_kalman(self) -> KalmanConfig:
        bias = self.available_bias if self.ablation.gyro_bias_on else 0.0
        return replace(self.kalman, gyro_bias=bias)

    def with_ablation(self, **flags) -> "RunConfig":
        return replace(self, ablation=replace(self.ablation, **flags))


def _build(cls, section: str, data: Any, **extra):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", field=section)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", field=section)
    try:
        return cls(**{**data, **extra})
    except ConfigError:
        raise
    except (TypeError, ValueError, RioError) as exc:
        raise ConfigError(str(exc), field=section) from exc


def _resolve(base: Path, data: dict, keys) -> dict:
    out = dict(data)
    for k in keys:
        if out.get(k) is not None:
            p = Path(out[k]).expanduser()
            out[k] = p if p.is_absolute() else (base / p)
    return out


def config_from_dict(data: dict, base_dir: Path | str = ".") -> RunConfig:
    """Validate a parsed YAML mapping; errors name the offending field."""
    base = Path(base_dir)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    known = {"dataset", "scene", "registration", "kalman", "ablation", "gyro_bias", "outputs",
             "timing", "evaluation", "twist"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", field="(top level)")

    dataset = None
    if data.get("dataset") is not None:
        ds = _resolve(base, data["dataset"], ("radar_dir", "imu_file", "gt_file"))
        dataset = _build(DatasetConfig, "dataset", ds)
    scene = None
    if data.get("scene") is not None:
        sc = dict(data["scene"])
        for key in ("motion_profile", "imu_noise_std", "start_pose"):
            if key in sc and sc[key] is not None:
                sc[key] = tuple(tuple(v) if isinstance(v, list) else v for v in sc[key])
        scene = _build(SyntheticSceneSpec, "scene", sc)
    outputs = dict(data.get("outputs") or {})
    outputs = _resolve(base, outputs, ("directory",))
    evaluation = data.get("evaluation") or {}
    if not isinstance(evaluation, dict) or set(evaluation) - {"segment_step"}:
        raise ConfigError("only segment_step is supported", field="evaluation")
    try:
        return RunConfig(
            dataset=dataset,
            scene=scene,
            registration=_build(RegistrationConfig, "registration", data.get("registration")),
            kalman=_build(KalmanConfig, "kalman", data.get("kalman")),
            ablation=_build(Ablation, "ablation", data.get("ablation")),
            gyro_bias=None if data.get("gyro_bias") is None else float(data["gyro_bias"]),
            outputs=_build(Outputs, "outputs", outputs),
            timing=bool(data.get("timing", True)),
            segment_step=int(evaluation.get("segment_step", 1)),
            twist=bool(data.get("twist", True)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(data or {}, path.parent)
