"""Five-state Kalman filter fusing radar velocities and raw IMU samples.

State vector ``[v_x, v_y, w_z, a_x, a_y]`` (body frame) under a
constant-acceleration process model. Updates are applied asynchronously:
each measurement first propagates the state to its own timestamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DegenerateMeasurementError, InvalidInputError, OrderingError
from .registration import RadarVelocity

VX, VY, WZ, AX, AY = range(5)
STATE_SIZE = 5

RADAR_ROWS = (VX, VY, WZ)
IMU_ROWS = (WZ, AX, AY)


def _selector(rows) -> np.ndarray:
    h = np.zeros((len(rows), STATE_SIZE))
    h[np.arange(len(rows)), rows] = 1.0
    h.flags.writeable = False
    return h


H_RADAR = _selector(RADAR_ROWS)
H_IMU = _selector(IMU_ROWS)


def _matrix(value, n: int) -> np.ndarray:
    m = np.asarray(value, dtype=np.float64)
    if m.ndim == 1:
        m = np.diag(m)
    if m.shape != (n, n):
        raise InvalidInputError(f"expected a {n}x{n} matrix or length-{n} diagonal, got {m.shape}")
    if not np.allclose(m, m.T, atol=1e-12):
        raise InvalidInputError("noise matrices must be symmetric")
    if np.linalg.eigvalsh(m).min() < -1e-12:
        raise InvalidInputError("noise matrices must be positive semi-definite")
    m = m.copy()
    m.flags.writeable = False
    return m


@dataclass(frozen=True, eq=False)
class KalmanConfig:
    """Noise model and control input of the filter.

    ``Q`` is a spectral density: the predict step adds ``Q * dt``. Matrices
    may be given as full arrays or as their diagonals.

    ``control`` maps the scalar gyro bias into the state at predict time
    (times ``dt``). It is zero by default because the bias is compensated at
    measurement time, in :func:`update_imu`.

    With ``interval_mean`` a radar velocity averaged over ``interval`` seconds
    is modelled as ``v - a * interval / 2``, i.e. the state velocity at the
    middle of the interval; otherwise it is read as the current velocity.
    """

    Q: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.05, 2.0, 2.0]))
    R_radar: np.ndarray = field(default_factory=lambda: np.array([0.05, 0.05, 2e-3]))
    R_imu: np.ndarray = field(default_factory=lambda: np.array([1e-4, 0.01, 0.01]))
    gyro_bias: float = 0.0
    initial_P: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 0.1, 1.0, 1.0]))
    control: np.ndarray = field(default_factory=lambda: np.zeros(STATE_SIZE))
    joseph: bool = False
    interval_mean: bool = True

    def __post_init__(self):
        object.__setattr__(self, "Q", _matrix(self.Q, STATE_SIZE))
        object.__setattr__(self, "R_radar", _matrix(self.R_radar, 3))
        object.__setattr__(self, "R_imu", _matrix(self.R_imu, 3))
        object.__setattr__(self, "initial_P", _matrix(self.initial_P, STATE_SIZE))
        ctrl = np.asarray(self.control, dtype=np.float64).reshape(STATE_SIZE)
        object.__setattr__(self, "control", ctrl)
        if not math.isfinite(self.gyro_bias):
            raise InvalidInputError("gyro_bias must be finite")

    def initial_state(self, t: float = 0.0) -> "KalmanState":
        return KalmanState(np.zeros(STATE_SIZE), self.initial_P, t)


@dataclass(frozen=True, eq=False)
class KalmanState:
    """Mean ``x``, covariance ``P`` and time of validity ``t``."""

    x: np.ndarray
    P: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64).reshape(STATE_SIZE)
        p = np.asarray(self.P, dtype=np.float64).reshape(STATE_SIZE, STATE_SIZE)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", p)

    @property
    def v_x(self) -> float:
        return float(self.x[VX])

    @property
    def v_y(self) -> float:
        return float(self.x[VY])

    @property
    def w_z(self) -> float:
        return float(self.x[WZ])


@dataclass(frozen=True)
class ImuSample:
    """Raw planar IMU reading: accelerations in m/s^2, yaw rate in rad/s."""

    timestamp: float
    accel_x: float
    accel_y: float
    gyro_z: float


Payload = Union[ImuSample, RadarVelocity]


@dataclass(frozen=True)
class MeasurementEvent:
    """A timestamped sensor reading fed to :func:`step`."""

    timestamp: float
    payload: Payload

    @classmethod
    def of(cls, payload: Payload) -> "MeasurementEvent":
        return cls(payload.timestamp, payload)

    @property
    def is_imu(self) -> bool:
        return isinstance(self.payload, ImuSample)


def transition(dt: float) -> np.ndarray:
    f = np.eye(STATE_SIZE)
    f[VX, AX] = dt
    f[VY, AY] = dt
    return f


def predict(state: KalmanState, dt: float, cfg: KalmanConfig) -> KalmanState:
    """Propagate by ``dt`` seconds: ``x <- F x + B u``, ``P <- F P F^T + Q dt``."""
    if dt < 0 or not math.isfinite(dt):
        raise InvalidInputError(f"predict interval must be >= 0, got {dt}")
    if dt == 0:
        return state
    f = transition(dt)
    x = f @ state.x + cfg.control * (cfg.gyro_bias * dt)
    p = f @ state.P @ f.T + cfg.Q * dt
    return KalmanState(x, 0.5 * (p + p.T), state.t + dt)


def _update(state: KalmanState, z: np.ndarray, h: np.ndarray, r: np.ndarray,
            cfg: KalmanConfig) -> KalmanState:
    p = state.P
    ph = p @ h.T
    s = h @ ph + r
    d = np.diag(s)
    try:
        # conditioning of the correlation form, so mixed units do not count as singular
        if not np.all(d > 0) or np.linalg.cond(s / np.sqrt(np.outer(d, d))) > 1e12:
            raise np.linalg.LinAlgError
        k = np.linalg.solve(s, ph.T).T
    except np.linalg.LinAlgError as exc:
        raise DegenerateMeasurementError("singular innovation covariance") from exc
    x = state.x + k @ (z - h @ state.x)
    i_kh = np.eye(STATE_SIZE) - k @ h
    if cfg.joseph:
        p_new = i_kh @ p @ i_kh.T + k @ r @ k.T
    else:
        p_new = i_kh @ p
    return KalmanState(x, 0.5 * (p_new + p_new.T), state.t)


def _check_time(state: KalmanState, timestamp: float) -> None:
    if abs(timestamp - state.t) > 1e-9:
        raise InvalidInputError(
            f"measurement at t={timestamp} but state valid at t={state.t}; predict first"
        )


def radar_jacobian(interval: float, cfg: KalmanConfig) -> np.ndarray:
    if not (cfg.interval_mean and interval > 0):
        return H_RADAR
    h = H_RADAR.copy()
    h[0, AX] = h[1, AY] = -0.5 * interval
    return h


def update_radar(state: KalmanState, z: RadarVelocity, cfg: KalmanConfig) -> KalmanState:
    """Correct ``(v_x, v_y, w_z)`` with a radar velocity ending at ``state.t``."""
    _check_time(state, z.timestamp)
    h = radar_jacobian(z.interval, cfg)
    return _update(state, np.array([z.v_x, z.v_y, z.w_z]), h, cfg.R_radar, cfg)


def update_imu(state: KalmanState, z: ImuSample, cfg: KalmanConfig) -> KalmanState:
    """Correct ``(w_z, a_x, a_y)`` with a bias-compensated IMU sample."""
    _check_time(state, z.timestamp)
    meas = np.array([z.gyro_z - cfg.gyro_bias, z.accel_x, z.accel_y])
    return _update(state, meas, H_IMU, cfg.R_imu, cfg)


def step(state: KalmanState, event: MeasurementEvent, cfg: KalmanConfig) -> KalmanState:
    """Predict to ``event.timestamp`` and apply the matching update."""
    if event.timestamp < state.t:
        raise OrderingError(f"event at t={event.timestamp} precedes state t={state.t}")
    state = predict(state, event.timestamp - state.t, cfg)
    # absorb floating-point drift of the accumulated time
    state = KalmanState(state.x, state.P, event.timestamp)
    if event.is_imu:
        return update_imu(state, event.payload, cfg)
    return update_radar(state, event.payload, cfg)
