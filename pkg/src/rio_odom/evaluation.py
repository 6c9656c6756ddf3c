"""KITTI odometry metrics over fixed arc-length sub-trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError
from .trajectory import Trajectory, normalize_angle, resample

SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


@dataclass(frozen=True)
class LengthError:
    length: float
    t_err_pct: float
    r_err_deg_per_100m: float
    count: int


@dataclass(frozen=True)
class OdomErrors:
    """Average translational (%) and rotational (deg/100 m) drift.

    ``empty`` is set when the ground truth is shorter than every segment
    length; the averages are then 0 and meaningless.
    """

    t_err_pct: float
    r_err_deg_per_100m: float
    per_length: list[LengthError] = field(default_factory=list)
    empty: bool = False

    @property
    def segments(self) -> int:
        return sum(p.count for p in self.per_length)

    def summary(self) -> str:
        """The usual ``t_err / r_err`` cell."""
        return f"{self.t_err_pct:.2f}/{self.r_err_deg_per_100m:.2f}"


def path_length(traj: Trajectory) -> float:
    """Sum of Euclidean distances between consecutive positions."""
    if len(traj) < 2:
        return 0.0
    return float(np.hypot(np.diff(traj.x), np.diff(traj.y)).sum())


def _cumulative_distance(traj: Trajectory) -> np.ndarray:
    d = np.zeros(len(traj))
    if len(traj) > 1:
        d[1:] = np.cumsum(np.hypot(np.diff(traj.x), np.diff(traj.y)))
    return d


def _relative(traj: Trajectory, i: np.ndarray, j: np.ndarray):
    c, s = np.cos(traj.yaw[i]), np.sin(traj.yaw[i])
    ex, ey = traj.x[j] - traj.x[i], traj.y[j] - traj.y[i]
    return c * ex + s * ey, -s * ex + c * ey, normalize_angle(traj.yaw[j] - traj.yaw[i])


def kitti_errors(gt: Trajectory, est: Trajectory, lengths=SEGMENT_LENGTHS,
                 step: int = 1) -> OdomErrors:
    """Segment-wise relative pose error, averaged over all segments.

    The estimate is resampled onto the ground-truth timestamps inside the
    overlap of both spans. Starting at every ``step``-th ground-truth pose,
    each segment ends at the first pose whose travelled distance exceeds the
    segment length; its error is the residual of the estimated relative motion
    against the true one, divided by the nominal length.

    Raises:
        EvaluationError: if the two trajectories do not overlap in time.
    """
    if len(gt) == 0 or len(est) == 0:
        raise EvaluationError("empty trajectory")
    t0 = max(gt.t[0], est.t[0])
    t1 = min(gt.t[-1], est.t[-1])
    if t1 <= t0:
        raise EvaluationError("ground truth and estimate do not overlap in time")
    gt = gt.window(t0, t1)
    est = resample(est, gt.t)
    dist = _cumulative_distance(gt)
    starts = np.arange(0, len(gt), max(int(step), 1))

    per_length: list[LengthError] = []
    all_t, all_r = [], []
    for length in lengths:
        ends = np.searchsorted(dist, dist[starts] + length, side="right")
        ok = ends < len(gt)
        i, j = starts[ok], ends[ok]
        if i.size == 0:
            per_length.append(LengthError(float(length), 0.0, 0.0, 0))
            continue
        gx, gy, gth = _relative(gt, i, j)
        ex, ey, eth = _relative(est, i, j)
        # pose_error = inv(delta_est) * delta_gt
        c, s = np.cos(eth), np.sin(eth)
        rx, ry = gx - ex, gy - ey
        t_err = np.hypot(c * rx + s * ry, -s * rx + c * ry) / length
        r_err = np.abs(normalize_angle(gth - eth)) / length
        all_t.append(t_err)
        all_r.append(r_err)
        per_length.append(LengthError(float(length), float(100.0 * t_err.mean()),
                                      float(math.degrees(r_err.mean()) * 100.0), int(i.size)))
    if not all_t:
        return OdomErrors(0.0, 0.0, per_length, empty=True)
    t_all = np.concatenate(all_t)
    r_all = np.concatenate(all_r)
    return OdomErrors(float(100.0 * t_all.mean()), float(math.degrees(r_all.mean()) * 100.0),
                      per_length)


def format_table(rows: list[tuple[str, OdomErrors | None]]) -> str:
    """Text table of ``name | t_err[%] / r_err[deg/100m]`` lines."""
    width = max([len(name) for name, _ in rows] + [4])
    lines = [f"{'test':<{width}} | translational error [%] / rotational error [deg/100m]"]
    lines.append("-" * len(lines[0]))
    for name, err in rows:
        cell = "failed" if err is None else ("n/a (trajectory too short)" if err.empty else err.summary())
        lines.append(f"{name:<{width}} | {cell}")
    return "\n".join(lines)


def write_metrics_csv(path, rows: list[tuple[str, OdomErrors | None]]) -> None:
    with open(path, "w") as fh:
        fh.write("test,t_err_pct,r_err_deg_per_100m,segments\n")
        for name, err in rows:
            if err is None:
                fh.write(f"{name},,,0\n")
            else:
                fh.write(f"{name},{err.t_err_pct:.6f},{err.r_err_deg_per_100m:.6f},{err.segments}\n")
