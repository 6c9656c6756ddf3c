"""SE(2) pose bookkeeping: composition, dead reckoning, interpolation, export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, OutOfRangeError


def normalize_angle(a):
    """Wrap to ``(-pi, pi]``; works on scalars and arrays."""
    wrapped = math.pi - np.mod(math.pi - np.asarray(a, dtype=np.float64), 2.0 * math.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    yaw: float
    timestamp: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.yaw, self.timestamp)):
            raise InvalidInputError("pose must be finite")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))


@dataclass(frozen=True)
class Transform2:
    """Relative motion expressed in the source frame."""

    dx: float
    dy: float
    dtheta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dtheta)):
            raise InvalidInputError("transform must be finite")
        object.__setattr__(self, "dtheta", normalize_angle(self.dtheta))

    def inverse(self) -> "Transform2":
        c, s = math.cos(self.dtheta), math.sin(self.dtheta)
        return Transform2(-(c * self.dx + s * self.dy), s * self.dx - c * self.dy, -self.dtheta)

    def then(self, other: "Transform2") -> "Transform2":
        """``self`` followed by ``other`` (``other`` given in the frame reached by ``self``)."""
        c, s = math.cos(self.dtheta), math.sin(self.dtheta)
        return Transform2(self.dx + c * other.dx - s * other.dy,
                          self.dy + s * other.dx + c * other.dy,
                          self.dtheta + other.dtheta)


def compose(pose: Pose2, t: Transform2) -> Pose2:
    """Concatenate a relative transform onto a pose."""
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    return Pose2(pose.x + c * t.dx - s * t.dy, pose.y + s * t.dx + c * t.dy,
                 pose.yaw + t.dtheta, pose.timestamp)


def relative(a: Pose2, b: Pose2) -> Transform2:
    """Transform taking pose ``a`` to pose ``b``, in ``a``'s frame."""
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    ex, ey = b.x - a.x, b.y - a.y
    return Transform2(c * ex + s * ey, -s * ex + c * ey, b.yaw - a.yaw)


def integrate(pose: Pose2, state, dt: float) -> Pose2:
    """Dead-reckon body-frame velocities over ``dt`` with a midpoint-yaw step.

    ``state`` is anything with ``v_x``, ``v_y`` and ``w_z`` attributes
    (a :class:`~rio_odom.fusion.KalmanState` or a radar velocity).
    """
    if dt < 0:
        raise InvalidInputError("dt must be >= 0")
    vx, vy, wz = float(state.v_x), float(state.v_y), float(state.w_z)
    mid = pose.yaw + 0.5 * wz * dt
    c, s = math.cos(mid), math.sin(mid)
    return Pose2(pose.x + (vx * c - vy * s) * dt, pose.y + (vx * s + vy * c) * dt,
                 pose.yaw + wz * dt, pose.timestamp + dt)


def to_homogeneous(pose: Pose2) -> np.ndarray:
    """4x4 ``[R t; 0 1]`` with ``R`` a rotation about z."""
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    m = np.eye(4)
    m[0, 0], m[0, 1], m[1, 0], m[1, 1] = c, -s, s, c
    m[0, 3], m[1, 3] = pose.x, pose.y
    return m


def from_homogeneous(m: np.ndarray, timestamp: float = 0.0) -> Pose2:
    m = np.asarray(m, dtype=np.float64)
    return Pose2(float(m[0, 3]), float(m[1, 3]), math.atan2(m[1, 0], m[0, 0]), timestamp)


class Trajectory:
    """Immutable, timestamp-ordered pose sequence backed by numpy arrays."""

    __slots__ = ("t", "x", "y", "yaw")

    def __init__(self, t, x, y, yaw):
        arrays = [np.array(v, dtype=np.float64).reshape(-1) for v in (t, x, y, yaw)]
        n = arrays[0].size
        if any(a.size != n for a in arrays):
            raise InvalidInputError("trajectory columns differ in length")
        if n > 1 and np.any(np.diff(arrays[0]) <= 0):
            raise InvalidInputError("trajectory timestamps must be strictly increasing")
        arrays[3] = np.atleast_1d(normalize_angle(arrays[3])) if n else arrays[3]
        for a in arrays:
            a.flags.writeable = False
        self.t, self.x, self.y, self.yaw = arrays

    @classmethod
    def from_poses(cls, poses: Iterable[Pose2]) -> "Trajectory":
        poses = list(poses)
        return cls([p.timestamp for p in poses], [p.x for p in poses],
                   [p.y for p in poses], [p.yaw for p in poses])

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, i: int) -> Pose2:
        return Pose2(float(self.x[i]), float(self.y[i]), float(self.yaw[i]), float(self.t[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def poses(self) -> list[Pose2]:
        return list(self)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def transformed(self, t: Transform2) -> "Trajectory":
        """Apply the rigid motion ``t`` (world frame) to every pose."""
        c, s = math.cos(t.dtheta), math.sin(t.dtheta)
        return Trajectory(self.t, t.dx + c * self.x - s * self.y, t.dy + s * self.x + c * self.y,
                          self.yaw + t.dtheta)

    def window(self, t0: float, t1: float) -> "Trajectory":
        keep = (self.t >= t0) & (self.t <= t1)
        return Trajectory(self.t[keep], self.x[keep], self.y[keep], self.yaw[keep])


class TrajectoryBuilder:
    """Append-only accumulator; call :meth:`build` once at the end."""

    def __init__(self):
        self._rows: list[tuple[float, float, float, float]] = []

    def append(self, pose: Pose2) -> None:
        if self._rows and pose.timestamp <= self._rows[-1][0]:
            if pose.timestamp == self._rows[-1][0]:
                self._rows[-1] = (pose.timestamp, pose.x, pose.y, pose.yaw)
                return
            raise InvalidInputError("poses must be appended in time order")
        self._rows.append((pose.timestamp, pose.x, pose.y, pose.yaw))

    def __len__(self) -> int:
        return len(self._rows)

    def build(self) -> Trajectory:
        if not self._rows:
            return Trajectory([], [], [], [])
        t, x, y, yaw = zip(*self._rows)
        return Trajectory(t, x, y, yaw)


def resample(traj: Trajectory, times: Sequence[float]) -> Trajectory:
    """Vectorised :func:`interpolate` at every query time."""
    q = np.asarray(times, dtype=np.float64)
    if len(traj) == 0:
        raise OutOfRangeError("empty trajectory")
    if q.size and (q.min() < traj.t[0] or q.max() > traj.t[-1]):
        raise OutOfRangeError(f"query outside [{traj.t[0]}, {traj.t[-1]}]")
    if len(traj) == 1:
        return Trajectory(q, np.full(q.size, traj.x[0]), np.full(q.size, traj.y[0]),
                          np.full(q.size, traj.yaw[0]))
    i = np.clip(np.searchsorted(traj.t, q, side="right") - 1, 0, len(traj) - 2)
    t0, t1 = traj.t[i], traj.t[i + 1]
    u = (q - t0) / (t1 - t0)
    x = traj.x[i] + u * (traj.x[i + 1] - traj.x[i])
    y = traj.y[i] + u * (traj.y[i + 1] - traj.y[i])
    yaw = traj.yaw[i] + u * normalize_angle(traj.yaw[i + 1] - traj.yaw[i])
    exact = u == 0.0
    x[exact], y[exact], yaw[exact] = traj.x[i][exact], traj.y[i][exact], traj.yaw[i][exact]
    return Trajectory(q, x, y, yaw)


def interpolate(traj: Trajectory, t_query: float) -> Pose2:
    """Pose at ``t_query``: linear in position, shortest-arc in yaw (planar SLERP).

    Raises :class:`OutOfRangeError` outside the trajectory span.
    """
    return resample(traj, [t_query])[0]


# --------------------------------------------------------------------------
# export / import


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(traj: Trajectory, path) -> None:
    """``timestamp,x,y,yaw`` with one pose per line."""
    with open(path, "w", newline="") as fh:
        fh.write("timestamp,x,y,yaw\n")
        for row in zip(traj.t, traj.x, traj.y, traj.yaw):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path) -> Trajectory:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().lower() == "timestamp":
                continue
            rows.append([float(v) for v in rec[:4]])
    if not rows:
        return Trajectory([], [], [], [])
    arr = np.array(rows)
    return Trajectory(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def write_kitti(traj: Trajectory, path) -> None:
    """Twelve space-separated values per pose: the upper 3x4 block of the 4x4 matrix."""
    with open(path, "w") as fh:
        for pose in traj:
            m = to_homogeneous(pose)[:3, :]
            fh.write(" ".join(f"{v:.9e}" for v in m.ravel()) + "\n")


def read_kitti(path, timestamps: Sequence[float] | None = None) -> Trajectory:
    data = np.loadtxt(Path(path), ndmin=2)
    if data.shape[1] != 12:
        raise InvalidInputError(f"{path}: expected 12 values per line")
    t = np.arange(len(data), dtype=np.float64) if timestamps is None else np.asarray(timestamps)
    return Trajectory(t, data[:, 3], data[:, 7], np.arctan2(data[:, 4], data[:, 0]))
