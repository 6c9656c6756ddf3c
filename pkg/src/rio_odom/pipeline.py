"""Batch odometry: scans and IMU samples in, a trajectory out.

Registration runs once per pass over the scans and its velocity outputs are
kept, so several estimator configurations (the ablation rows) can consume
the identical radar measurements.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import DegenerateMeasurementError, InvalidInputError, OrderingError, RioError
from .fusion import ImuSample, KalmanConfig, KalmanState, predict, update_imu, update_radar
from .imaging import Image
from .ingestion.events import merge_measurements
from .registration import RadarVelocity, RegistrationConfig, ScanRegistrar, to_velocity
from .trajectory import Pose2, Trajectory, TrajectoryBuilder, integrate, resample

log = logging.getLogger(__name__)

MODES = ("radar_only", "radar_kf", "imu_only", "fuse")


@dataclass
class FrameTiming:
    """Wall-clock cost of one radar frame, in milliseconds."""

    timestamp: float
    load_ms: float = 0.0
    rotation_ms: float = 0.0
    translation_ms: float = 0.0
    predict_ms: float = 0.0
    update_ms: float = 0.0

    @property
    def total_ms(self) -> float:
        return self.load_ms + self.rotation_ms + self.translation_ms + self.predict_ms + self.update_ms


@dataclass
class StageTimings:
    frames: list[FrameTiming] = field(default_factory=list)

    COLUMNS = ("timestamp", "load_ms", "rotation_ms", "translation_ms", "predict_ms", "update_ms")

    def __len__(self) -> int:
        return len(self.frames)

    def means(self) -> dict[str, float]:
        if not self.frames:
            return {c: 0.0 for c in self.COLUMNS[1:]}
        return {c: float(np.mean([getattr(f, c) for f in self.frames])) for c in self.COLUMNS[1:]}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for f in self.frames:
                w.writerow([repr(f.timestamp)] + [f"{getattr(f, c):.4f}" for c in self.COLUMNS[1:]])


@dataclass
class RadarTrack:
    """Registration output of one pass over a scan sequence."""

    velocities: list[RadarVelocity]
    timings: StageTimings
    span: tuple[float, float] | None
    dropped: int = 0


def register_scans(scans: Iterable[Image], cfg: RegistrationConfig, twist: bool = True) -> RadarTrack:
    """Register consecutive scans; unusable scans are skipped and counted.

    Each pulled scan gets one timing record. Pulling from ``scans`` is timed
    as loading, so lazy readers have their decode cost attributed there.
    """
    registrar = ScanRegistrar(cfg)
    velocities: list[RadarVelocity] = []
    timings = StageTimings()
    first = last = None
    dropped = 0
    it = iter(scans)
    while True:
        t0 = time.perf_counter()
        try:
            scan = next(it)
        except StopIteration:
            break
        record = FrameTiming(scan.timestamp, load_ms=(time.perf_counter() - t0) * 1e3)
        timings.frames.append(record)
        first = scan.timestamp if first is None else first
        last = scan.timestamp
        try:
            result = registrar.push(scan)
        except RioError as exc:
            dropped += 1
            log.warning("radar frame at t=%.6f dropped: %s", scan.timestamp, exc)
            continue
        finally:
            record.rotation_ms = registrar.timing.rotation_ms
            record.translation_ms = registrar.timing.translation_ms
        if result is not None:
            velocities.append(to_velocity(result, twist=twist))
    span = None if first is None else (first, last)
    return RadarTrack(velocities, timings, span, dropped)


def _start_pose(gt: Trajectory | None, t0: float) -> Pose2:
    if gt is None or len(gt) == 0:
        return Pose2(0.0, 0.0, 0.0, t0)
    if gt.t[0] <= t0 <= gt.t[-1]:
        p = resample(gt, [t0])[0]
    else:
        p = gt[0] if t0 < gt.t[0] else gt[len(gt) - 1]
    return Pose2(p.x, p.y, p.yaw, t0)


def integrate_radar(velocities: Sequence[RadarVelocity], start: Pose2) -> Trajectory:
    """Dead-reckon radar velocities directly, one pose per scan."""
    builder = TrajectoryBuilder()
    builder.append(start)
    pose = start
    for v in velocities:
        dt = v.timestamp - pose.timestamp
        if dt <= 0:
            continue
        pose = integrate(pose, v, dt)
        pose = Pose2(pose.x, pose.y, pose.yaw, v.timestamp)
        builder.append(pose)
    return builder.build()


@dataclass
class FilterRun:
    trajectory: Trajectory
    final_state: KalmanState
    radar_costs: dict[float, tuple[float, float]]
    skipped: int = 0


def run_filter(events: Iterable, cfg: KalmanConfig, start: Pose2) -> FilterRun:
    """Fuse a time-ordered event stream, dead-reckoning one pose per event.

    The pose step over each inter-event interval uses the filter's velocity
    predicted to the middle of that interval. A measurement that cannot be
    applied is logged and the filter coasts on its prediction.
    """
    state = cfg.initial_state(start.timestamp)
    pose = start
    builder = TrajectoryBuilder()
    builder.append(start)
    radar_costs: dict[float, tuple[float, float]] = {}
    skipped = 0
    for event in events:
        dt = event.timestamp - state.t
        if dt < 0:
            skipped += 1
            log.warning("event at t=%.6f is older than the filter state; skipped", event.timestamp)
            continue
        t0 = time.perf_counter()
        if dt > 0:
            mid = predict(state, 0.5 * dt, cfg)
            pose = integrate(pose, mid, dt)
            state = predict(state, dt, cfg)
        state = KalmanState(state.x, state.P, event.timestamp)
        t1 = time.perf_counter()
        try:
            if event.is_imu:
                state = update_imu(state, event.payload, cfg)
            else:
                state = update_radar(state, event.payload, cfg)
        except (DegenerateMeasurementError, InvalidInputError, OrderingError) as exc:
            skipped += 1
            log.warning("measurement at t=%.6f not applied: %s", event.timestamp, exc)
        t2 = time.perf_counter()
        if not event.is_imu:
            radar_costs[event.timestamp] = ((t1 - t0) * 1e3, (t2 - t1) * 1e3)
        pose = Pose2(pose.x, pose.y, pose.yaw, event.timestamp)
        builder.append(pose)
    return FilterRun(builder.build(), state, radar_costs, skipped)


def estimate(mode: str, track: RadarTrack | None, imu: Sequence[ImuSample],
             kalman: KalmanConfig, gt: Trajectory | None = None,
             t0: float | None = None) -> tuple[Trajectory, dict[float, tuple[float, float]]]:
    """Trajectory for one estimator ``mode`` from shared measurements.

    The start time is the first radar scan when radar is used, otherwise the
    first IMU sample; the start pose comes from ``gt`` when given.
    Returns the trajectory and per-radar-event ``(predict_ms, update_ms)``.
    """
    if mode not in MODES:
        raise InvalidInputError(f"unknown mode {mode!r}")
    uses_radar = mode != "imu_only"
    if uses_radar and (track is None or track.span is None):
        raise InvalidInputError(f"mode {mode} needs radar scans")
    if t0 is None:
        if uses_radar:
            t0 = track.span[0]
        elif imu:
            t0 = imu[0].timestamp
        else:
            raise InvalidInputError("no measurements")
    start = _start_pose(gt, t0)
    if mode == "radar_only":
        return integrate_radar(track.velocities, start), {}
    radar = [v for v in track.velocities if v.timestamp >= t0] if uses_radar else []
    inertial = [s for s in imu if s.timestamp >= t0] if mode in ("fuse", "imu_only") else []
    run = run_filter(merge_measurements(radar, inertial), kalman, start)
    return run.trajectory, run.radar_costs


def attach_filter_costs(timings: StageTimings, costs: dict[float, tuple[float, float]]) -> StageTimings:
    """Copy of ``timings`` with predict/update costs filled in per radar frame."""
    frames = []
    for f in timings.frames:
        p, u = costs.get(f.timestamp, (0.0, 0.0))
        frames.append(replace(f, predict_ms=p, update_ms=u))
    return StageTimings(frames)


def clip_imu(imu: Sequence[ImuSample], span: tuple[float, float] | None) -> list[ImuSample]:
    if span is None:
        return list(imu)
    return [s for s in imu if span[0] <= s.timestamp <= span[1]]


ScanSource = Callable[[], Iterator[Image]]
