"""Time-ordered merge of registered radar scans and IMU samples."""

from __future__ import annotations

import heapq
import logging
from typing import Callable, Iterable, Iterator

from ..errors import RioError
from ..fusion import ImuSample, MeasurementEvent
from ..imaging import Image
from ..registration import RadarVelocity

log = logging.getLogger(__name__)

RegisterFn = Callable[[Image, Image], RadarVelocity]

_IMU_FIRST, _RADAR = 0, 1


def radar_events(scans: Iterable[Image], register_pair: RegisterFn,
                 on_drop: Callable[[Image, Exception], None] | None = None) -> Iterator[MeasurementEvent]:
    """Register consecutive scans and yield one velocity event per pair.

    A pair that fails to register is dropped. If the earlier scan of the
    failing pair had already registered once, it stays the reference (the
    newer scan is presumed bad); otherwise the newer scan replaces it.
    """
    prev: Image | None = None
    prev_good = False
    for scan in scans:
        if prev is None:
            prev = scan
            continue
        try:
            vel = register_pair(prev, scan)
        except RioError as exc:
            log.warning("dropping radar event at t=%.6f: %s", scan.timestamp, exc)
            if on_drop is not None:
                on_drop(scan, exc)
            if not prev_good:
                prev = scan
            continue
        prev, prev_good = scan, True
        yield MeasurementEvent(vel.timestamp, vel)


def merge_measurements(radar: Iterable[RadarVelocity],
                       imu: Iterable[ImuSample]) -> Iterator[MeasurementEvent]:
    """Merge already-registered radar velocities with IMU samples; IMU wins ties."""
    imu_keyed = ((s.timestamp, _IMU_FIRST, MeasurementEvent.of(s)) for s in imu)
    radar_keyed = ((v.timestamp, _RADAR, MeasurementEvent.of(v)) for v in radar)
    merged = heapq.merge(imu_keyed, radar_keyed, key=lambda item: (item[0], item[1]))
    return (event for _, _, event in merged)


def merge_events(radar: Iterable[Image], imu: Iterable[ImuSample], register_pair: RegisterFn,
                 on_drop: Callable[[Image, Exception], None] | None = None) -> Iterator[MeasurementEvent]:
    """Lazily merge both streams by timestamp; IMU wins ties.

    Both inputs must already be in time order. Radar velocity events carry
    the later scan's timestamp.
    """
    velocities = (e.payload for e in radar_events(radar, register_pair, on_drop))
    return merge_measurements(velocities, imu)
