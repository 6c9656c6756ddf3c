"""Radar image carrier and the preprocessing used ahead of registration.

Pixel conventions used throughout the package:

* arrays are row-major ``(height, width)``;
* the sensor (and the centre of rotation) sits at pixel ``(height // 2, width // 2)``;
* metric axes are ``+x`` to the right (increasing column) and ``+y`` up
  (decreasing row); angles are counter-clockwise in that frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
import scipy.ndimage as ndi
import scipy.sparse as sp

from .errors import InvalidInputError

TWO_PI = 2.0 * math.pi


def _frozen(array, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(array, dtype=dtype)
    if arr.flags.writeable or not arr.flags.c_contiguous:
        arr = np.array(arr, dtype=dtype, order="C", copy=True)
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    """Dense 2-D grayscale grid with physical metadata.

    ``meters_per_pixel`` is 0 for non-spatial images such as spectra.
    Radar scans are stored in ``[0, 1]``; derived images (filtered, spectra)
    only have to be finite.
    """

    pixels: np.ndarray
    meters_per_pixel: float = 0.0
    timestamp: float = 0.0

    def __post_init__(self):
        px = _frozen(self.pixels)
        if px.ndim != 2 or px.shape[0] == 0 or px.shape[1] == 0:
            raise InvalidInputError(f"image must be a non-empty 2-D grid, got shape {px.shape}")
        if not np.isfinite(px).all():
            raise InvalidInputError("image contains NaN or Inf")
        if not math.isfinite(self.meters_per_pixel) or self.meters_per_pixel < 0:
            raise InvalidInputError("meters_per_pixel must be finite and >= 0")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def with_pixels(self, pixels, **changes) -> "Image":
        return replace(self, pixels=pixels, **changes)


@dataclass(frozen=True, eq=False)
class PolarScan:
    """Azimuth-major scanning-radar sweep.

    ``intensities[i, k]`` is the return on beam ``azimuths[i]`` at range
    ``k * range_resolution``.
    """

    azimuths: np.ndarray
    intensities: np.ndarray
    range_resolution: float
    timestamp: float = 0.0
    ranges_per_beam: int = field(init=False)

    def __post_init__(self):
        az = _frozen(self.azimuths)
        inten = _frozen(self.intensities)
        if az.ndim != 1 or inten.ndim != 2 or inten.shape[0] != az.size:
            raise InvalidInputError(
                f"intensity grid {inten.shape} inconsistent with {az.size} azimuths"
            )
        if az.size and (np.any(np.diff(az) <= 0) or az[0] < 0 or az[-1] >= TWO_PI):
            raise InvalidInputError("azimuths must be strictly increasing within [0, 2*pi)")
        if not self.range_resolution > 0:
            raise InvalidInputError("range_resolution must be > 0")
        if not np.isfinite(inten).all():
            raise InvalidInputError("polar intensities contain NaN or Inf")
        object.__setattr__(self, "azimuths", az)
        object.__setattr__(self, "intensities", inten)
        object.__setattr__(self, "ranges_per_beam", inten.shape[1])


# --------------------------------------------------------------------------
# polar -> cartesian rendering


def _cartesian_operator(azimuths: np.ndarray, n_bins: int, range_resolution: float,
                        out_size: int, meters_per_pixel: float, nearest: bool) -> sp.csr_matrix:
    n_az = azimuths.size
    c = out_size // 2
    idx = np.arange(out_size, dtype=np.float64)
    x = (idx[None, :] - c) * meters_per_pixel
    y = (c - idx[:, None]) * meters_per_pixel
    rng = np.hypot(x, y).ravel() / range_resolution
    az = np.mod(np.arctan2(y, x), TWO_PI).ravel()

    # periodic extension so every angle has a bracketing beam pair
    ext = np.concatenate(([azimuths[-1] - TWO_PI], azimuths, [azimuths[0] + TWO_PI]))
    lo = np.clip(np.searchsorted(ext, az, side="right") - 1, 0, n_az)
    frac_a = (az - ext[lo]) / (ext[lo + 1] - ext[lo])
    a0 = (lo - 1) % n_az
    a1 = lo % n_az

    inside = rng <= n_bins - 1
    pix = np.flatnonzero(inside)
    rng = rng[inside]
    frac_a, a0, a1 = frac_a[inside], a0[inside], a1[inside]

    if nearest:
        beam = np.where(frac_a < 0.5, a0, a1)
        rows, cols, vals = pix, beam * n_bins + np.rint(rng).astype(np.intp), np.ones(pix.size)
    else:
        r0 = np.minimum(np.floor(rng).astype(np.intp), n_bins - 2) if n_bins > 1 else np.zeros(pix.size, np.intp)
        frac_r = rng - r0
        r1 = np.minimum(r0 + 1, n_bins - 1)
        rows = np.tile(pix, 4)
        cols = np.concatenate((a0 * n_bins + r0, a0 * n_bins + r1, a1 * n_bins + r0, a1 * n_bins + r1))
        vals = np.concatenate((
            (1 - frac_a) * (1 - frac_r), (1 - frac_a) * frac_r,
            frac_a * (1 - frac_r), frac_a * frac_r,
        ))
    return sp.csr_matrix((vals, (rows, cols)), shape=(out_size * out_size, n_az * n_bins))


@lru_cache(maxsize=8)
def _cached_cartesian_operator(key: bytes, n_bins, range_resolution, out_size, mpp, nearest):
    azimuths = np.frombuffer(key, dtype=np.float64)
    return _cartesian_operator(azimuths, n_bins, range_resolution, out_size, mpp, nearest)


def polar_to_cartesian(scan: PolarScan, out_size: int, meters_per_pixel: float,
                       interpolation: str = "bilinear") -> Image:
    """Render an azimuth-range sweep onto a square Cartesian grid.

    Azimuth 0 points along +x and azimuth increases counter-clockwise. Each
    output pixel is interpolated in (azimuth, range) space from the bracketing
    beams and bins; pixels beyond the last range bin are 0.

    Args:
        scan: the polar sweep.
        out_size: output width and height in pixels.
        meters_per_pixel: output resolution.
        interpolation: ``"bilinear"`` (default) or ``"nearest"``.
    """
    if out_size <= 0 or not meters_per_pixel > 0:
        raise InvalidInputError("out_size and meters_per_pixel must be positive")
    if scan.azimuths.size == 0 or scan.ranges_per_beam == 0:
        raise InvalidInputError("empty polar scan")
    if interpolation not in ("bilinear", "nearest"):
        raise InvalidInputError(f"unknown interpolation {interpolation!r}")
    op = _cached_cartesian_operator(scan.azimuths.tobytes(), scan.ranges_per_beam,
                                    float(scan.range_resolution), int(out_size),
                                    float(meters_per_pixel), interpolation == "nearest")
    out = (op @ scan.intensities.ravel()).reshape(out_size, out_size)
    return Image(out, meters_per_pixel=meters_per_pixel, timestamp=scan.timestamp)


# --------------------------------------------------------------------------
# downsampling


def _area_weights(n_src: int, n_dst: int) -> sp.csr_matrix:
    """Row ``i`` averages source cells overlapping ``[i, i+1) * n_src / n_dst``."""
    ratio = n_src / n_dst
    rows, cols, vals = [], [], []
    for i in range(n_dst):
        lo, hi = i * ratio, (i + 1) * ratio
        for j in range(int(math.floor(lo)), min(int(math.ceil(hi)), n_src)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 1e-12:
                rows.append(i)
                cols.append(j)
                vals.append(overlap / ratio)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_dst, n_src))


def downsample(img: Image, target_w: int, target_h: int) -> Image:
    """Area-averaging reduction to ``target_w x target_h``.

    ``meters_per_pixel`` is scaled by the width ratio.
    """
    h, w = img.shape
    if target_w <= 0 or target_h <= 0:
        raise InvalidInputError("target size must be positive")
    if target_w > w or target_h > h:
        raise InvalidInputError(f"cannot upsample {w}x{h} to {target_w}x{target_h}")
    px = img.pixels
    if w % target_w == 0 and h % target_h == 0:
        fy, fx = h // target_h, w // target_w
        out = px.reshape(target_h, fy, target_w, fx).mean(axis=(1, 3))
    else:
        ay = _area_weights(h, target_h)
        ax = _area_weights(w, target_w)
        out = ay @ (ax @ px.T).T
    return img.with_pixels(out, meters_per_pixel=img.meters_per_pixel * w / target_w)


# --------------------------------------------------------------------------
# high-pass filtering


@lru_cache(maxsize=16)
def hpf_window(shape: tuple[int, int], profile: str = "emphasis", half: bool = False) -> np.ndarray:
    """Real, non-negative spectral weights that vanish at DC.

    Laid out like ``fft2`` output (DC at index ``[0, 0]``); with ``half=True``
    only the ``rfft2`` columns are returned.

    Profiles:
        ``"emphasis"``: ``(1 - X) * (2 - X)`` with ``X = cos(pi*fy) cos(pi*fx)``
        and frequencies in cycles/pixel, the classic Fourier-Mellin emphasis
        filter. It rises from 0 at DC to 2 at the Nyquist corner.
        ``"ramp"``: radial frequency normalised to 1 at the corner.
    """
    h, w = shape
    fy = sfft.fftfreq(h)[:, None]
    fx = (sfft.rfftfreq(w) if half else sfft.fftfreq(w))[None, :]
    if profile == "emphasis":
        x = np.cos(np.pi * fy) * np.cos(np.pi * fx)
        win = (1.0 - x) * (2.0 - x)
    elif profile == "ramp":
        win = np.hypot(fy, fx) / math.sqrt(0.5)
    else:
        raise InvalidInputError(f"unknown HPF profile {profile!r}")
    win[0, 0] = 0.0
    win.flags.writeable = False
    return win


def high_pass_filter(img: Image, profile: str = "emphasis") -> Image:
    """Suppress low spatial frequencies; removes the mean exactly."""
    win = hpf_window(img.shape, profile, half=True)
    out = sfft.irfft2(sfft.rfft2(img.pixels) * win, s=img.shape)
    return img.with_pixels(out)


# --------------------------------------------------------------------------
# rotation


def rotation_matrix_px(angle: float) -> np.ndarray:
    """Output-to-input map in ``(row, col)`` offsets for a CCW rotation by ``angle``."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s], [-s, c]])


def rotate_image(img: Image, angle: float) -> Image:
    """Rotate the content counter-clockwise by ``angle`` (rad) about the sensor pixel.

    Bilinear interpolation; samples falling outside the source are 0.
    """
    if not math.isfinite(angle):
        raise InvalidInputError("angle must be finite")
    if angle == 0.0:
        return img
    h, w = img.shape
    centre = np.array([h // 2, w // 2], dtype=np.float64)
    m = rotation_matrix_px(angle)
    out = ndi.affine_transform(img.pixels, m, offset=centre - m @ centre, order=1,
                               mode="constant", cval=0.0, prefilter=False)
    return img.with_pixels(out)
