"""Synthetic radar + IMU sequences with exact ground truth.

A field of point scatterers is rendered as Gaussian blobs in the sensor frame
along a trajectory driven by a body-frame velocity profile. The profile is
piecewise linear in time (constant targets joined by linear ramps), so the
true accelerations are piecewise constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from collections.abc import Sequence

import numpy as np

from ..errors import GenerationError
from ..fusion import ImuSample
from ..imaging import Image
from ..trajectory import Trajectory


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Parameters of a generated sequence.

    ``motion_profile`` is a sequence of ``(duration_s, v_x, v_y, w_z)``
    targets. The first segment starts at its target; later ones ramp
    linearly from the previous target over ``min(ramp_time, duration)``.

    ``accel_model`` selects what the accelerometer reports: ``"kinematic"``
    gives the time derivative of the body-frame velocity (what the filter's
    process model assumes); ``"specific_force"`` adds the centripetal term
    ``w_z x v`` a physical sensor would also see.
    """

    num_scatterers: int = 3000
    world_extent: float = 500.0
    blob_sigma: float = 1.2
    motion_profile: Sequence[tuple[float, float, float, float]] = ((10.0, 5.0, 0.0, 0.0),)
    imu_rate: float = 100.0
    radar_rate: float = 4.0
    imu_noise_std: tuple[float, float] = (0.0, 0.0)
    gyro_bias: float = 0.0
    clutter_fraction: float = 0.0
    seed: int = 0
    image_size: int = 256
    meters_per_pixel: float = 0.5
    intensity_noise_std: float = 0.0
    background_amplitude: float = 0.0
    ramp_time: float = 2.0
    start_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    accel_model: str = "kinematic"

    def __post_init__(self):
        if self.imu_rate <= 0 or self.radar_rate <= 0:
            raise GenerationError("sensor rates must be positive")
        if not 0.0 <= self.clutter_fraction < 1.0:
            raise GenerationError("clutter_fraction must be in [0, 1)")
        if self.num_scatterers < 0 or self.world_extent <= 0 or self.blob_sigma <= 0:
            raise GenerationError("scene size parameters must be positive")
        if self.image_size < 8 or self.meters_per_pixel <= 0:
            raise GenerationError("image_size must be >= 8 and meters_per_pixel > 0")
        if not self.motion_profile or any(seg[0] <= 0 for seg in self.motion_profile):
            raise GenerationError("motion profile needs segments of positive duration")
        if self.accel_model not in ("kinematic", "specific_force"):
            raise GenerationError(f"unknown accel_model {self.accel_model!r}")
        object.__setattr__(self, "motion_profile",
                           tuple(tuple(float(v) for v in seg) for seg in self.motion_profile))

    @property
    def duration(self) -> float:
        return float(sum(seg[0] for seg in self.motion_profile))

    @property
    def max_range(self) -> float:
        return (self.image_size // 2 - 1) * self.meters_per_pixel


class VelocityProfile:
    """Body-frame velocity ``(v_x, v_y, w_z)`` as a function of time."""

    def __init__(self, segments: Sequence[tuple[float, float, float, float]], ramp_time: float):
        durations = np.array([s[0] for s in segments], dtype=np.float64)
        self.targets = np.array([s[1:] for s in segments], dtype=np.float64)
        self.starts = np.concatenate(([0.0], np.cumsum(durations)[:-1]))
        self.ramps = np.minimum(ramp_time, durations) if ramp_time > 0 else np.zeros_like(durations)
        self.previous = np.vstack((self.targets[:1], self.targets[:-1]))
        self.duration = float(durations.sum())

    def _segment(self, t: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.starts, t, side="right") - 1, 0, len(self.starts) - 1)

    def velocity(self, t) -> np.ndarray:
        """``(n, 3)`` velocities at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        k = self._segment(t)
        ramp = self.ramps[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(ramp > 0, np.clip((t - self.starts[k]) / ramp, 0.0, 1.0), 1.0)
        return self.previous[k] + (self.targets[k] - self.previous[k]) * u[:, None]

    def acceleration(self, t) -> np.ndarray:
        """``(n, 3)`` time derivatives of :meth:`velocity` (right-continuous)."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        k = self._segment(t)
        ramp = self.ramps[k]
        active = (ramp > 0) & (t - self.starts[k] < ramp)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = (self.targets[k] - self.previous[k]) / ramp[:, None]
        return np.where(active[:, None], slope, 0.0)


class RenderedScans(Sequence):
    """Read-only list of scans, rendered on access.

    Frame ``k`` always uses its own noise stream, so access order does not
    change the pixels and memory stays flat for long sequences.
    """

    def __init__(self, renderer: "SceneRenderer", poses: np.ndarray, times: np.ndarray,
                 frame_seeds: list | None):
        self._renderer = renderer
        self._poses = poses
        self._times = times
        self._seeds = frame_seeds

    def __len__(self) -> int:
        return len(self._times)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        rng = np.random.default_rng(self._seeds[k]) if self._seeds is not None else None
        px = self._renderer.render(self._poses[k], rng)
        return Image(px, meters_per_pixel=self._renderer.spec.meters_per_pixel,
                     timestamp=float(self._times[k]))


@dataclass(frozen=True, eq=False)
class SyntheticSequence:
    scans: RenderedScans
    imu: list[ImuSample]
    gt: Trajectory
    profile: VelocityProfile
    spec: SyntheticSceneSpec
    scan_poses: Trajectory = field(repr=False, default=None)


def _integrate_poses(profile: VelocityProfile, times: np.ndarray, start, substeps: int) -> np.ndarray:
    """Poses ``(n, 3)`` at the sorted ``times`` by fine midpoint integration."""
    fine = [times[:1]]
    for a, b in zip(times[:-1], times[1:]):
        fine.append(np.linspace(a, b, substeps + 1)[1:])
    grid = np.concatenate(fine)
    mids = 0.5 * (grid[:-1] + grid[1:])
    dt = np.diff(grid)
    v_mid = profile.velocity(mids)
    v_grid = profile.velocity(grid)
    # trapezoid in yaw is exact for piecewise-linear yaw rate between kinks
    dyaw = 0.5 * (v_grid[:-1, 2] + v_grid[1:, 2]) * dt
    yaw = start[2] + np.concatenate(([0.0], np.cumsum(dyaw)))
    yaw_mid = start[2] + np.concatenate(([0.0], np.cumsum(dyaw)))[:-1] + v_mid[:, 2] * 0.5 * dt
    c, s = np.cos(yaw_mid), np.sin(yaw_mid)
    dx = (c * v_mid[:, 0] - s * v_mid[:, 1]) * dt
    dy = (s * v_mid[:, 0] + c * v_mid[:, 1]) * dt
    x = start[0] + np.concatenate(([0.0], np.cumsum(dx)))
    y = start[1] + np.concatenate(([0.0], np.cumsum(dy)))
    pick = np.arange(len(times)) * substeps
    return np.column_stack((x[pick], y[pick], yaw[pick]))


class SceneRenderer:
    """Renders the scatterer field as seen from a given pose."""

    def __init__(self, spec: SyntheticSceneSpec, rng: np.random.Generator,
                 centre: tuple[float, float] | None = None):
        self.spec = spec
        half = spec.world_extent / 2.0
        cx, cy = centre if centre is not None else spec.start_pose[:2]
        self.points = np.column_stack((rng.uniform(cx - half, cx + half, spec.num_scatterers),
                                       rng.uniform(cy - half, cy + half, spec.num_scatterers)))
        self.amplitudes = rng.uniform(0.3, 1.0, spec.num_scatterers)
        n = spec.image_size
        self.centre = n // 2
        idx = np.arange(n)
        rr, cc = np.meshgrid(idx, idx, indexing="ij")
        self.disc = np.hypot(rr - self.centre, cc - self.centre) <= spec.max_range / spec.meters_per_pixel
        self.background = self._background(rng, rr, cc) if spec.background_amplitude > 0 else None
        k = int(math.ceil(3.5 * spec.blob_sigma))
        off = np.arange(-k, k + 1)
        self.patch_r, self.patch_c = np.meshgrid(off, off, indexing="ij")

    def _background(self, rng, rr, cc) -> np.ndarray:
        """Smooth sensor-fixed returns (near-field clutter, antenna sidelobes)."""
        n = self.spec.image_size
        bg = np.zeros((n, n))
        for _ in range(6):
            r = rng.uniform(0.0, 0.35 * n)
            a = rng.uniform(0.0, 2 * math.pi)
            sig = rng.uniform(0.08, 0.2) * n
            r0, c0 = self.centre - r * math.sin(a), self.centre + r * math.cos(a)
            bg += rng.uniform(0.5, 1.0) * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * sig**2))
        return bg * (self.spec.background_amplitude / bg.max())

    def render(self, pose, rng: np.random.Generator | None = None) -> np.ndarray:
        spec = self.spec
        n = spec.image_size
        x, y, yaw = pose
        c, s = math.cos(yaw), math.sin(yaw)
        ex, ey = self.points[:, 0] - x, self.points[:, 1] - y
        bx, by = c * ex + s * ey, -s * ex + c * ey
        keep = np.hypot(bx, by) < spec.max_range
        col = self.centre + bx[keep] / spec.meters_per_pixel
        row = self.centre - by[keep] / spec.meters_per_pixel
        amp = self.amplitudes[keep]
        base_r, base_c = np.rint(row).astype(np.intp), np.rint(col).astype(np.intp)
        pr = base_r[:, None, None] + self.patch_r
        pc = base_c[:, None, None] + self.patch_c
        val = amp[:, None, None] * np.exp(
            -((pr - row[:, None, None]) ** 2 + (pc - col[:, None, None]) ** 2) / (2 * spec.blob_sigma**2))
        ok = (pr >= 0) & (pr < n) & (pc >= 0) & (pc < n)
        img = np.bincount((pr[ok] * n + pc[ok]), weights=val[ok], minlength=n * n).reshape(n, n)
        if self.background is not None:
            img += self.background
        if rng is not None:
            if spec.intensity_noise_std > 0:
                img += rng.normal(0.0, spec.intensity_noise_std, img.shape)
            if spec.clutter_fraction > 0:
                hit = rng.random(img.shape) < spec.clutter_fraction
                img[hit] = rng.uniform(0.5, 1.0, int(hit.sum()))
        img[~self.disc] = 0.0
        return np.clip(img, 0.0, 1.0)


def generate_synthetic(spec: SyntheticSceneSpec) -> SyntheticSequence:
    """Render scans, IMU samples and ground-truth poses for ``spec``.

    Deterministic for a fixed spec (the seed included). Ground truth holds the
    exact pose at every IMU timestamp.

    Raises:
        GenerationError: if the trajectory does not fit in the scatterer
            field (a square of side ``world_extent`` centred on its bounding box).
    """
    profile = VelocityProfile(spec.motion_profile, spec.ramp_time)
    seeds = np.random.SeedSequence(spec.seed).spawn(3)
    scene_rng = np.random.default_rng(seeds[0])
    imu_rng = np.random.default_rng(seeds[1])
    frame_seeds = seeds[2]

    duration = profile.duration
    imu_t = np.arange(int(math.floor(duration * spec.imu_rate + 1e-9)) + 1) / spec.imu_rate
    radar_t = np.arange(int(math.floor(duration * spec.radar_rate + 1e-9)) + 1) / spec.radar_rate
    all_t = np.unique(np.round(np.concatenate((imu_t, radar_t)), 12))
    poses = _integrate_poses(profile, all_t, spec.start_pose, substeps=10)

    lo, hi = poses[:, :2].min(axis=0), poses[:, :2].max(axis=0)
    if np.any(hi - lo > spec.world_extent):
        raise GenerationError(
            f"trajectory spans {np.max(hi - lo):.1f} m, more than world_extent={spec.world_extent} m")
    centre = tuple(0.5 * (lo + hi))

    lookup = {round(t, 12): i for i, t in enumerate(all_t)}
    imu_idx = np.array([lookup[round(t, 12)] for t in imu_t])
    radar_idx = np.array([lookup[round(t, 12)] for t in radar_t])
    gt = Trajectory(imu_t, poses[imu_idx, 0], poses[imu_idx, 1], poses[imu_idx, 2])
    scan_poses = Trajectory(radar_t, poses[radar_idx, 0], poses[radar_idx, 1], poses[radar_idx, 2])

    vel = profile.velocity(imu_t)
    acc = profile.acceleration(imu_t)[:, :2].copy()
    if spec.accel_model == "specific_force":
        acc[:, 0] -= vel[:, 2] * vel[:, 1]
        acc[:, 1] += vel[:, 2] * vel[:, 0]
    acc_std, gyro_std = spec.imu_noise_std
    acc_noise = imu_rng.normal(0.0, 1.0, acc.shape) * acc_std
    gyro_noise = imu_rng.normal(0.0, 1.0, imu_t.size) * gyro_std
    gyro = vel[:, 2] + gyro_noise + spec.gyro_bias
    imu = [ImuSample(float(t), float(ax), float(ay), float(g))
           for t, (ax, ay), g in zip(imu_t, acc + acc_noise, gyro)]

    renderer = SceneRenderer(spec, scene_rng, centre)
    noisy = spec.intensity_noise_std > 0 or spec.clutter_fraction > 0
    seeds_per_frame = frame_seeds.spawn(len(radar_t)) if noisy else None
    scans = RenderedScans(renderer, poses[radar_idx], radar_t, seeds_per_frame)
    return SyntheticSequence(scans, imu, gt, profile, spec, scan_poses)
