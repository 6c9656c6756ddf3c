"""End-to-end runs and the seven-row ablation matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

from .config import RunConfig
from .errors import EvaluationError, RioError
from .evaluation import OdomErrors, format_table, kitti_errors, write_metrics_csv
from .fusion import ImuSample
from .imaging import Image
from .ingestion.datasets import load_ground_truth, load_images, load_imu, radar_span
from .ingestion.synthetic import generate_synthetic
from .pipeline import (RadarTrack, StageTimings, attach_filter_costs, clip_imu, estimate,
                       register_scans)
from .trajectory import Trajectory, write_csv, write_kitti

log = logging.getLogger(__name__)


@dataclass
class Inputs:
    """Measurements of one sequence. ``scans`` returns a fresh pass each call."""

    scans: Callable[[], Iterator[Image]]
    imu: list[ImuSample]
    gt: Trajectory | None


def load_inputs(cfg: RunConfig) -> Inputs:
    if cfg.scene is not None:
        seq = generate_synthetic(cfg.scene)
        return Inputs(lambda: iter(seq.scans), list(seq.imu), seq.gt)
    ds = cfg.dataset
    span = radar_span(ds)
    imu = load_imu(ds, span) if ds.imu_file is not None else []
    gt = load_ground_truth(ds) if ds.gt_file is not None else None
    return Inputs(lambda: load_images(ds), imu, gt)


@dataclass
class RunResult:
    trajectory: Trajectory
    errors: OdomErrors | None
    timings: StageTimings | None
    track: RadarTrack | None


def _evaluate(gt: Trajectory | None, est: Trajectory, step: int) -> OdomErrors | None:
    if gt is None:
        return None
    return kitti_errors(gt, est, step=step)


def run(cfg: RunConfig, inputs: Inputs | None = None, track: RadarTrack | None = None) -> RunResult:
    """Estimate the trajectory of one configuration and, with ground truth, score it.

    Outputs are written when ``cfg.outputs.directory`` is set. ``track``
    reuses registration results from an earlier pass over the same scans.
    """
    inputs = inputs or load_inputs(cfg)
    mode = cfg.ablation.mode
    if mode != "imu_only" and track is None:
        track = register_scans(inputs.scans(), cfg.effective_registration(), twist=cfg.twist)
    imu = inputs.imu
    if track is not None and track.span is not None:
        imu = clip_imu(imu, track.span)
    est, costs = estimate(mode, track, imu, cfg.effective_kalman(), inputs.gt)
    timings = attach_filter_costs(track.timings, costs) if (cfg.timing and track is not None) else None
    errors = _evaluate(inputs.gt, est, cfg.segment_step)
    result = RunResult(est, errors, timings, track)
    if cfg.outputs.directory is not None:
        write_outputs(result, inputs.gt, Path(cfg.outputs.directory), plot=cfg.outputs.plot)
    return result


def write_outputs(result: RunResult, gt: Trajectory | None, directory: Path, plot: bool = True) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_csv(result.trajectory, directory / "trajectory.csv")
    write_kitti(result.trajectory, directory / "trajectory_kitti.txt")
    if result.errors is not None:
        rows = [("run", result.errors)]
        write_metrics_csv(directory / "metrics.csv", rows)
        (directory / "metrics.txt").write_text(format_table(rows) + "\n")
    if result.timings is not None:
        result.timings.write_csv(directory / "timing.csv")
    if plot:
        from .plotting import emit_plot
        emit_plot(gt, result.trajectory, directory / "trajectory.svg")


# (test id, label, mode, gyro bias compensation, HPF)
ABLATION_ROWS = (
    (1, "radar only", "radar_only", False, False),
    (2, "IMU + KF", "imu_only", False, False),
    (3, "radar + KF", "radar_kf", False, False),
    (4, "radar + IMU + KF", "fuse", False, False),
    (5, "radar + IMU + KF + gyro bias", "fuse", True, False),
    (6, "radar + IMU + KF + HPF", "fuse", False, True),
    (7, "full (bias + HPF)", "fuse", True, True),
)


@dataclass
class AblationRow:
    test_id: int
    label: str
    errors: OdomErrors | None
    failure: str | None = None
    trajectory: Trajectory | None = None

    @property
    def name(self) -> str:
        return f"#{self.test_id} {self.label}"


def ablation_suite(base: RunConfig, inputs: Inputs | None = None) -> list[AblationRow]:
    """Run every row of the ablation matrix on one sequence.

    The scans are registered once per HPF setting and those radar
    velocities are shared by all rows with that setting. A failing row is
    reported and does not stop the others.
    """
    inputs = inputs or load_inputs(base)
    if inputs.gt is None:
        raise EvaluationError("the ablation suite needs ground truth")
    tracks: dict[bool, RadarTrack] = {}
    rows: list[AblationRow] = []
    for test_id, label, mode, bias, hpf in ABLATION_ROWS:
        cfg = base.with_ablation(mode=mode, gyro_bias_on=bias, hpf_on=hpf)
        try:
            track = None
            if mode != "imu_only":
                if hpf not in tracks:
                    tracks[hpf] = register_scans(inputs.scans(), cfg.effective_registration(),
                                                 twist=cfg.twist)
                track = tracks[hpf]
            imu = clip_imu(inputs.imu, track.span) if track is not None else inputs.imu
            est, _ = estimate(mode, track, imu, cfg.effective_kalman(), inputs.gt)
            rows.append(AblationRow(test_id, label, kitti_errors(inputs.gt, est, step=base.segment_step),
                                    trajectory=est))
        except RioError as exc:
            log.error("ablation row #%d failed: %s", test_id, exc)
            rows.append(AblationRow(test_id, label, None, failure=str(exc)))
    if base.outputs.directory is not None:
        out = Path(base.outputs.directory)
        out.mkdir(parents=True, exist_ok=True)
        table = [(r.name, r.errors) for r in rows]
        write_metrics_csv(out / "ablation.csv", table)
        (out / "ablation.txt").write_text(format_table(table) + "\n")
    return rows
