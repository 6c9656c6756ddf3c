"""Readers for scan-per-file radar datasets and delimited IMU / pose logs.

Supported layouts:

``mulran``
    polar PNGs named ``<unix ns>.png``; one column per azimuth, one row
    per range bin; azimuths evenly spaced.
``boreas``
    polar PNGs named ``<unix us>.png``; one *row* per azimuth, the first 11
    columns holding per-azimuth metadata (int64 timestamp in us, uint16
    encoder count, valid flag), then range bins.
``synthetic``
    16-bit Cartesian PNGs named ``<unix ns>.png`` with the sensor at the
    image centre, as written by :func:`write_scan`.

Column maps name the IMU fields either by header or by integer index; a
leading ``-`` negates the column (use it to align sensor axes).
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
from PIL import Image as PILImage

from ..errors import ConfigError, DatasetError, EmptyDatasetError, ScanLoadError
from ..fusion import ImuSample
from ..imaging import Image, PolarScan, downsample, polar_to_cartesian
from ..trajectory import Trajectory

log = logging.getLogger(__name__)

LAYOUTS = ("mulran", "boreas", "synthetic")
BOREAS_META_COLUMNS = 11
BOREAS_ENCODER_SIZE = 5600
MAX_MALFORMED_FRACTION = 0.05
SYNTHETIC_FULL_SCALE = 65535.0

# per-layout IMU defaults: column map, time scale to seconds, header present
IMU_DEFAULTS: dict[str, tuple[dict[str, str | int], float, bool]] = {
    "mulran": ({"timestamp": 0, "gyro_z": 10, "accel_x": 11, "accel_y": 12}, 1e-9, False),
    "boreas": ({"timestamp": "GPSTime", "gyro_z": "angvel_z", "accel_x": "accelx",
                "accel_y": "accely"}, 1.0, True),
    "synthetic": ({"timestamp": "timestamp", "accel_x": "accel_x", "accel_y": "accel_y",
                   "gyro_z": "gyro_z"}, 1.0, True),
}
# file names carry integer ticks; divide by these to get seconds
FILENAME_TICKS_PER_SECOND = {"mulran": 10**9, "boreas": 10**6, "synthetic": 10**9}


def _to_seconds(value: float, scale: float) -> float:
    # dividing by an integral tick rate keeps e.g. 250000000 ns == 0.25 s exactly
    inv = 1.0 / scale
    return value / round(inv) if scale < 1 and abs(inv - round(inv)) < 1e-6 else value * scale


@dataclass(frozen=True)
class DatasetConfig:
    """Where a sequence lives and how to decode it.

    ``meters_per_pixel`` is the working resolution after downsampling to
    ``image_size``; polar scans are first rendered at ``render_oversample``
    times that size. ``azimuth_direction`` is the sense in which the
    sensor's azimuth grows, seen from above (``cw`` for Navtech units).
    """

    layout: str
    radar_dir: Path
    imu_file: Path | None = None
    gt_file: Path | None = None
    range_resolution: float = 0.0596
    meters_per_pixel: float = 0.5
    frame_stride: int = 1
    gyro_bias: float = 0.0
    clip_imu_to_radar_span: bool = True
    image_size: int = 640
    render_oversample: int = 2
    azimuth_direction: str = "cw"
    imu_columns: Mapping[str, str | int] | None = None
    imu_time_scale: float | None = None
    imu_header: bool | None = None
    gt_format: str = "xyyaw"
    gt_time_scale: float = 1.0

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}", field="dataset.layout")
        if self.frame_stride < 1:
            raise ConfigError("frame_stride must be >= 1", field="dataset.frame_stride")
        if not self.range_resolution > 0:
            raise ConfigError("range_resolution must be > 0", field="dataset.range_resolution")
        if not self.meters_per_pixel > 0:
            raise ConfigError("meters_per_pixel must be > 0", field="dataset.meters_per_pixel")
        if self.image_size < 8 or self.render_oversample < 1:
            raise ConfigError("image_size must be >= 8", field="dataset.image_size")
        if self.azimuth_direction not in ("cw", "ccw"):
            raise ConfigError("azimuth_direction must be cw or ccw", field="dataset.azimuth_direction")
        if self.gt_format not in ("xyyaw", "pose12"):
            raise ConfigError("gt_format must be xyyaw or pose12", field="dataset.gt_format")
        if not math.isfinite(self.gyro_bias):
            raise ConfigError("gyro_bias must be finite", field="dataset.gyro_bias")
        for name in ("radar_dir", "imu_file", "gt_file"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, Path):
                object.__setattr__(self, name, Path(value))

    def with_changes(self, **changes) -> "DatasetConfig":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# radar scans


_STEM = re.compile(r"^(\d+)$")


def scan_files(cfg: DatasetConfig) -> list[tuple[float, Path]]:
    """``(timestamp_s, path)`` of every scan file, sorted, before striding."""
    root = cfg.radar_dir
    if not root.is_dir():
        raise DatasetError(f"radar directory {root} does not exist")
    ticks = FILENAME_TICKS_PER_SECOND[cfg.layout]
    found = []
    for path in root.iterdir():
        m = _STEM.match(path.stem)
        if path.suffix.lower() == ".png" and m:
            found.append((int(m.group(1)), path))
    if not found:
        raise EmptyDatasetError(f"no scan files in {root}")
    found.sort()
    return [(stamp / ticks, path) for stamp, path in found]


def _read_png(path: Path) -> np.ndarray:
    try:
        with PILImage.open(path) as im:
            return np.asarray(im)
    except (OSError, ValueError) as exc:
        raise ScanLoadError(path, str(exc)) from exc


def _orient(azimuths: np.ndarray, intensities: np.ndarray, direction: str):
    """Azimuths as CCW angles in ``[0, 2pi)``, sorted."""
    azimuths = np.mod(azimuths, 2 * math.pi)
    if direction == "cw":
        azimuths = np.mod(-azimuths, 2 * math.pi)
    order = np.argsort(azimuths, kind="stable")
    return azimuths[order], intensities[order]


def _decode_mulran(raw: np.ndarray, stamp: float, cfg: DatasetConfig, path: Path) -> PolarScan:
    if raw.ndim != 2:
        raise ScanLoadError(path, f"expected a single-channel image, got shape {raw.shape}")
    intens = raw.T.astype(np.float64) / 255.0
    az = np.arange(intens.shape[0]) * (2 * math.pi / intens.shape[0])
    az, intens = _orient(az, intens, cfg.azimuth_direction)
    return PolarScan(az, intens, cfg.range_resolution, stamp)


def _decode_boreas(raw: np.ndarray, stamp: float, cfg: DatasetConfig, path: Path) -> PolarScan:
    if raw.ndim != 2 or raw.shape[1] <= BOREAS_META_COLUMNS:
        raise ScanLoadError(path, f"unexpected raster shape {raw.shape}")
    meta = np.ascontiguousarray(raw[:, :BOREAS_META_COLUMNS].astype(np.uint8))
    encoder = meta[:, 8:10].copy().view("<u2").reshape(-1).astype(np.float64)
    az = encoder * (2 * math.pi / BOREAS_ENCODER_SIZE)
    if np.unique(np.mod(az, 2 * math.pi)).size != az.size:
        raise ScanLoadError(path, "duplicate azimuth encoder values")
    intens = raw[:, BOREAS_META_COLUMNS:].astype(np.float64) / 255.0
    az, intens = _orient(az, intens, cfg.azimuth_direction)
    return PolarScan(az, intens, cfg.range_resolution, stamp)


def _decode_synthetic(raw: np.ndarray, stamp: float, cfg: DatasetConfig, path: Path) -> Image:
    if raw.ndim != 2:
        raise ScanLoadError(path, f"expected a single-channel image, got shape {raw.shape}")
    return Image(raw.astype(np.float64) / SYNTHETIC_FULL_SCALE,
                 meters_per_pixel=cfg.meters_per_pixel, timestamp=stamp)


_DECODERS = {"mulran": _decode_mulran, "boreas": _decode_boreas, "synthetic": _decode_synthetic}


def load_scan(path: Path, stamp: float, cfg: DatasetConfig) -> PolarScan | Image:
    raw = _read_png(path)
    try:
        return _DECODERS[cfg.layout](raw, stamp, cfg, path)
    except ScanLoadError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScanLoadError(path, str(exc)) from exc


def load_radar_sequence(cfg: DatasetConfig) -> Iterator[PolarScan | Image]:
    """Lazily yield scans in timestamp order, every ``frame_stride``-th file.

    The file listing happens eagerly, so a missing or empty directory fails
    on the call; a corrupt file raises :class:`ScanLoadError` when reached.
    """
    files = scan_files(cfg)[:: cfg.frame_stride]

    def stream():
        for stamp, path in files:
            yield load_scan(path, stamp, cfg)

    return stream()


def to_working_image(scan: PolarScan | Image, cfg: DatasetConfig) -> Image:
    """Render a polar scan to Cartesian and bring it to the working size."""
    if isinstance(scan, Image):
        if scan.width > cfg.image_size:
            return downsample(scan, cfg.image_size, cfg.image_size)
        return scan
    fine = cfg.image_size * cfg.render_oversample
    cart = polar_to_cartesian(scan, fine, cfg.meters_per_pixel / cfg.render_oversample)
    if cfg.render_oversample == 1:
        return cart
    return downsample(cart, cfg.image_size, cfg.image_size)


def load_images(cfg: DatasetConfig, on_error=None) -> Iterator[Image]:
    """:func:`load_radar_sequence` rendered to working images.

    Unreadable scans are logged and skipped, or passed to ``on_error``.
    """
    files = scan_files(cfg)[:: cfg.frame_stride]
    for stamp, path in files:
        try:
            yield to_working_image(load_scan(path, stamp, cfg), cfg)
        except ScanLoadError as exc:
            if on_error is not None:
                on_error(exc)
            else:
                log.warning("skipping scan: %s", exc)


def write_scan(directory, scan: Image | PolarScan, layout: str = "synthetic") -> Path:
    """Write ``scan`` in the file convention of ``layout``; returns the path.

    Cartesian images are quantised to 16 bits, polar intensities to 8 bits.
    Polar scans are assumed to be in the sensor's native azimuth order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if layout == "synthetic":
        if not isinstance(scan, Image):
            raise DatasetError("synthetic layout stores Cartesian images")
        stamp = int(round(scan.timestamp * FILENAME_TICKS_PER_SECOND[layout]))
        px = np.rint(np.clip(scan.pixels, 0.0, 1.0) * SYNTHETIC_FULL_SCALE).astype(np.uint16)
        raster = PILImage.fromarray(px)
    elif layout in ("mulran", "boreas"):
        if not isinstance(scan, PolarScan):
            raise DatasetError(f"{layout} layout stores polar scans")
        stamp = int(round(scan.timestamp * FILENAME_TICKS_PER_SECOND[layout]))
        q = np.rint(np.clip(scan.intensities, 0.0, 1.0) * 255).astype(np.uint8)
        if layout == "mulran":
            raster = PILImage.fromarray(np.ascontiguousarray(q.T))
        else:
            meta = np.zeros((q.shape[0], BOREAS_META_COLUMNS), dtype=np.uint8)
            us = np.full(q.shape[0], stamp, dtype="<i8")
            meta[:, :8] = us.view(np.uint8).reshape(-1, 8)
            enc = np.rint(scan.azimuths * BOREAS_ENCODER_SIZE / (2 * math.pi)).astype("<u2")
            meta[:, 8:10] = enc.view(np.uint8).reshape(-1, 2)
            meta[:, 10] = 255
            raster = PILImage.fromarray(np.hstack((meta, q)))
    else:
        raise DatasetError(f"unknown layout {layout!r}")
    path = directory / f"{stamp}.png"
    raster.save(path)
    return path


# --------------------------------------------------------------------------
# IMU


def _column_getter(header: list[str] | None, spec: str | int):
    sign = 1.0
    if isinstance(spec, str) and spec.startswith("-"):
        sign, spec = -1.0, spec[1:]
    if isinstance(spec, str) and spec.isdigit():
        spec = int(spec)
    if isinstance(spec, str):
        if header is None or spec not in header:
            raise DatasetError(f"IMU column {spec!r} not in header {header}")
        spec = header.index(spec)
    return spec, sign


def load_imu(cfg: DatasetConfig, radar_span: tuple[float, float] | None = None) -> list[ImuSample]:
    """Parse raw IMU samples, sorted by time.

    Values are taken as-is (no smoothing or bias removal). Rows that fail to
    parse are skipped with a warning; more than 5 % of them is an error.
    With ``clip_imu_to_radar_span`` set and ``radar_span`` given, samples
    outside that interval are dropped.
    """
    if cfg.imu_file is None or not cfg.imu_file.is_file():
        raise DatasetError(f"IMU file {cfg.imu_file} does not exist")
    columns, scale, header_default = IMU_DEFAULTS[cfg.layout]
    columns = dict(columns)
    columns.update(cfg.imu_columns or {})
    scale = cfg.imu_time_scale if cfg.imu_time_scale is not None else scale
    has_header = cfg.imu_header if cfg.imu_header is not None else header_default

    with open(cfg.imu_file, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    header = [c.strip() for c in rows.pop(0)] if has_header and rows else None
    getters = {k: _column_getter(header, columns[k])
               for k in ("timestamp", "accel_x", "accel_y", "gyro_z")}

    samples, bad = [], 0
    for lineno, row in enumerate(rows, start=2 if header else 1):
        try:
            vals = {k: sign * float(row[i]) for k, (i, sign) in getters.items()}
            if not all(math.isfinite(v) for v in vals.values()):
                raise ValueError("non-finite value")
        except (ValueError, IndexError) as exc:
            bad += 1
            log.warning("%s:%d: skipping malformed IMU row (%s)", cfg.imu_file, lineno, exc)
            continue
        samples.append(ImuSample(_to_seconds(vals["timestamp"], scale), vals["accel_x"],
                                 vals["accel_y"], vals["gyro_z"]))
    if rows and bad / len(rows) > MAX_MALFORMED_FRACTION:
        raise DatasetError(f"{cfg.imu_file}: {bad} of {len(rows)} IMU rows malformed")
    samples.sort(key=lambda s: s.timestamp)
    if cfg.clip_imu_to_radar_span and radar_span is not None:
        t0, t1 = radar_span
        samples = [s for s in samples if t0 <= s.timestamp <= t1]
    return samples


def radar_span(cfg: DatasetConfig) -> tuple[float, float]:
    """Time span of the (strided) scan sequence, from file names alone."""
    files = scan_files(cfg)[:: cfg.frame_stride]
    return files[0][0], files[-1][0]


def write_imu_csv(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("timestamp,accel_x,accel_y,gyro_z\n")
        for s in samples:
            fh.write(f"{s.timestamp!r},{s.accel_x!r},{s.accel_y!r},{s.gyro_z!r}\n")


# --------------------------------------------------------------------------
# ground truth


def load_ground_truth(cfg: DatasetConfig) -> Trajectory:
    """Read ``timestamp,x,y,yaw`` rows, or ``timestamp`` plus a 3x4 pose matrix.

    Rows with repeated timestamps keep the first occurrence.
    """
    if cfg.gt_file is None or not cfg.gt_file.is_file():
        raise DatasetError(f"ground-truth file {cfg.gt_file} does not exist")
    rows = []
    with open(cfg.gt_file, newline="") as fh:
        for rec in csv.reader(fh):
            try:
                vals = [float(v) for v in rec]
            except ValueError:
                continue  # header or comment
            if cfg.gt_format == "xyyaw" and len(vals) >= 4:
                rows.append((vals[0], vals[1], vals[2], vals[3]))
            elif cfg.gt_format == "pose12" and len(vals) >= 13:
                m = vals[1:13]
                rows.append((vals[0], m[3], m[7], math.atan2(m[4], m[0])))
    if not rows:
        raise DatasetError(f"{cfg.gt_file}: no poses")
    arr = np.array(sorted(rows))
    arr[:, 0] = [_to_seconds(v, cfg.gt_time_scale) for v in arr[:, 0]]
    keep = np.concatenate(([True], np.diff(arr[:, 0]) > 0))
    arr = arr[keep]
    return Trajectory(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def calibrate_gyro_bias(samples, t0: float, t1: float) -> float:
    """Mean yaw rate over a stretch known to be stationary."""
    vals = [s.gyro_z for s in samples if t0 <= s.timestamp <= t1]
    if not vals:
        raise DatasetError(f"no IMU samples in [{t0}, {t1}]")
    return float(np.mean(vals))
