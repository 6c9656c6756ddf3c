"""Dataset readers, the synthetic scene generator and event merging."""

from .datasets import (
    DatasetConfig,
    calibrate_gyro_bias,
    load_ground_truth,
    load_images,
    load_imu,
    load_radar_sequence,
    radar_span,
    to_working_image,
    write_imu_csv,
    write_scan,
)
from .events import merge_events, merge_measurements, radar_events
from .synthetic import SyntheticSceneSpec, SyntheticSequence, VelocityProfile, generate_synthetic

__all__ = [
    "DatasetConfig",
    "SyntheticSceneSpec",
    "SyntheticSequence",
    "VelocityProfile",
    "calibrate_gyro_bias",
    "generate_synthetic",
    "load_ground_truth",
    "load_images",
    "load_imu",
    "load_radar_sequence",
    "merge_events",
    "merge_measurements",
    "radar_events",
    "radar_span",
    "to_working_image",
    "write_imu_csv",
    "write_scan",
]
