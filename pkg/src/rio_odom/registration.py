"""Two-stage phase-correlation registration of consecutive radar images.

Stage one recovers the rotation from the polar-warped magnitude spectra,
which carry no translation. Stage two undoes that rotation in the spatial
domain and phase-correlates the images again to recover the shift.

Sign conventions: :func:`phase_correlation` and the two ``estimate_*``
functions report how the *content* of the second image moved relative to the
first, in array axes (columns, rows) and counter-clockwise radians.
:func:`register` converts this into the *platform* motion from frame k-1 to
frame k, expressed in the k-1 body frame (+x right, +y up in the image).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from .errors import InvalidInputError, UnusableScanError
from .imaging import TWO_PI, Image, hpf_window, rotate_image

#: cross-power bins with a magnitude below this contribute phase 0
PC_EPSILON = 1e-12

WINDOWS = ("none", "hann", "radial")


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Complex 2-D DFT laid out like ``numpy.fft.fft2`` (DC at ``[0, 0]``)."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.ndim != 2:
            raise InvalidInputError("spectrum must be 2-D")
        object.__setattr__(self, "values", vals)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CorrelationPeak:
    """Signed, wrap-corrected location of the phase-correlation peak."""

    dx: float
    dy: float
    response: float


@dataclass(frozen=True)
class RegistrationResult:
    """Platform motion between two scans, in the earlier scan's body frame."""

    theta: float
    dx_m: float
    dy_m: float
    rotation_response: float
    translation_response: float
    dt: float
    timestamp: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidInputError("registration interval must be positive")


@dataclass(frozen=True)
class RadarVelocity:
    """Body-frame velocity measurement produced by scan registration.

    ``interval`` is the time the velocity is averaged over, ending at
    ``timestamp``; 0 marks an instantaneous value.
    """

    v_x: float
    v_y: float
    w_z: float
    timestamp: float
    quality: float = 1.0
    interval: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.v_x, self.v_y, self.w_z, self.timestamp)):
            raise InvalidInputError("radar velocity must be finite")
        if not (math.isfinite(self.interval) and self.interval >= 0):
            raise InvalidInputError("radar velocity interval must be >= 0")


@dataclass(frozen=True)
class RegistrationConfig:
    """Knobs of the registration pipeline.

    Attributes:
        upsample: angular upsampling factor of the polar magnitude images.
        angular_bins: angular bins over a full turn before upsampling.
        radial_bins: radial bins of the polar warp; ``None`` means half the
            smaller image side.
        hpf: apply the high-pass filter before the rotation stage.
        hpf_translation: also apply it before the translation stage.
        hpf_profile: see :func:`~rio_odom.imaging.hpf_window`.
        subpixel: sub-pixel peak refinement for the translation stage.
        subpixel_method: ``"dft"`` evaluates the correlation surface on a
            ``1/subpixel_factor`` grid around the peak; ``"parabolic"`` fits
            three samples per axis (cheaper, biased towards whole pixels).
        rotation_subpixel: parabolic peak refinement along the angular axis.
        window: apodisation of both images before any transform:
            ``"radial"`` (default) fades the outer ``window_taper`` fraction
            of the sensor disc with a raised cosine, ``"hann"`` is a
            separable Hann window, ``"none"`` leaves the images as they are.
            A hard range cut-off is fixed to the sensor and would otherwise
            pull sub-pixel shifts towards zero.
        window_taper: width of the radial fade, as a fraction of the radius.
        rotation_padding: zero-padding factor of the rotation-stage transform.
            A magnitude spectrum sampled on the plain DFT grid is aliased and
            its interpolation locks small rotations to zero; 2 avoids that.
        polar_upsampling: ``"direct"`` samples the magnitude image on the fine
            angular grid; ``"linear"`` warps onto the base grid and linearly
            interpolates along angle.
    """

    upsample: int = 4
    angular_bins: int = 360
    radial_bins: int | None = None
    hpf: bool = True
    hpf_translation: bool = True
    hpf_profile: str = "emphasis"
    subpixel: bool = True
    subpixel_method: str = "dft"
    subpixel_factor: int = 10
    rotation_subpixel: bool = True
    window: str = "radial"
    window_taper: float = 0.2
    rotation_padding: int = 2
    polar_upsampling: str = "direct"

    def __post_init__(self):
        if isinstance(self.window, bool):
            object.__setattr__(self, "window", "hann" if self.window else "none")
        if self.window not in WINDOWS:
            raise InvalidInputError(f"unknown window {self.window!r}")
        if not 0.0 < self.window_taper <= 1.0:
            raise InvalidInputError("window_taper must be in (0, 1]")
        if self.rotation_padding < 1:
            raise InvalidInputError("rotation_padding must be >= 1")
        if self.upsample < 1 or self.angular_bins < 2:
            raise InvalidInputError("upsample must be >= 1 and angular_bins >= 2")
        if self.polar_upsampling not in ("direct", "linear"):
            raise InvalidInputError(f"unknown polar_upsampling {self.polar_upsampling!r}")
        _check_method(self.subpixel_method)
        if self.subpixel_factor < 2:
            raise InvalidInputError("subpixel_factor must be >= 2")


def _check_method(method: str) -> None:
    if method not in ("dft", "parabolic"):
        raise InvalidInputError(f"unknown subpixel method {method!r}")


# --------------------------------------------------------------------------
# transforms


def forward_transform(img: Image) -> Spectrum:
    """Discrete 2-D Fourier transform of the image grid."""
    return Spectrum(sfft.fft2(img.pixels))


def inverse_transform(spec: Spectrum, meters_per_pixel: float = 0.0) -> Image:
    """Real part of the inverse DFT."""
    return Image(sfft.ifft2(spec.values).real, meters_per_pixel=meters_per_pixel)


def _log_magnitude(values: np.ndarray) -> np.ndarray:
    mag = np.log1p(np.abs(values))
    peak = mag.max()
    if peak > 0:
        mag /= peak
    return sfft.fftshift(mag)


def magnitude_spectrum(spec: Spectrum) -> Image:
    """Centred, log-compressed magnitude ``log(1 + |F|)`` scaled to ``[0, 1]``."""
    return Image(_log_magnitude(spec.values))


# --------------------------------------------------------------------------
# polar warp


@lru_cache(maxsize=16)
def _polar_operator(shape: tuple[int, int], angular_bins: int, radial_bins: int,
                    angular_range: float) -> sp.csr_matrix:
    h, w = shape
    cy, cx = h // 2, w // 2
    r_max = min(h, w) / 2.0
    theta = np.arange(angular_bins) * (angular_range / angular_bins)
    radius = np.arange(radial_bins) * (r_max / radial_bins)
    col = cx + radius[None, :] * np.cos(theta)[:, None]
    row = cy - radius[None, :] * np.sin(theta)[:, None]
    r0 = np.floor(row)
    c0 = np.floor(col)
    fr = (row - r0).ravel()
    fc = (col - c0).ravel()
    r0 = r0.astype(np.intp).ravel()
    c0 = c0.astype(np.intp).ravel()
    out_idx = np.arange(angular_bins * radial_bins)
    rows, cols, vals = [], [], []
    for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                        (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr, cc = r0 + dr, c0 + dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w) & (wgt > 0)
        rows.append(out_idx[ok])
        cols.append(rr[ok] * w + cc[ok])
        vals.append(wgt[ok])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(angular_bins * radial_bins, h * w))


def _warp(pixels: np.ndarray, angular_bins: int, radial_bins: int, angular_range: float) -> np.ndarray:
    op = _polar_operator(pixels.shape, angular_bins, radial_bins, float(angular_range))
    return (op @ pixels.ravel()).reshape(angular_bins, radial_bins)


def warp_polar(img: Image, angular_bins: int, radial_bins: int,
               angular_range: float = TWO_PI) -> Image:
    """Resample onto an (angle, radius) grid centred on the sensor pixel.

    Row ``i`` holds angle ``i * angular_range / angular_bins`` (CCW from +x),
    column ``j`` radius ``j * min(w, h) / (2 * radial_bins)`` pixels.
    Bilinear sampling; out-of-image samples are 0.
    """
    if angular_bins <= 0 or radial_bins <= 0:
        raise InvalidInputError("angular_bins and radial_bins must be positive")
    return Image(_warp(img.pixels, angular_bins, radial_bins, angular_range))


def upsample_angular(polar: np.ndarray, factor: int) -> np.ndarray:
    """Linear interpolation along the periodic angular axis (rows)."""
    if factor == 1:
        return polar
    nxt = np.roll(polar, -1, axis=0)
    frac = (np.arange(factor) / factor)[None, :, None]
    out = polar[:, None, :] * (1 - frac) + nxt[:, None, :] * frac
    return out.reshape(polar.shape[0] * factor, polar.shape[1])


# --------------------------------------------------------------------------
# phase correlation


@lru_cache(maxsize=8)
def _window(shape: tuple[int, int], kind: str, taper: float = 0.2) -> np.ndarray | None:
    if kind == "none":
        return None
    if kind == "hann":
        win = np.outer(np.hanning(shape[0]), np.hanning(shape[1]))
    else:
        h, w = shape
        r = np.hypot(np.arange(h)[:, None] - h // 2, np.arange(w)[None, :] - w // 2)
        u = np.clip((r / (min(h, w) / 2.0) - (1.0 - taper)) / taper, 0.0, 1.0)
        win = 0.5 * (1.0 + np.cos(np.pi * u))
    win.flags.writeable = False
    return win


def _apodize(px: np.ndarray, cfg: "RegistrationConfig") -> np.ndarray:
    win = _window(px.shape, cfg.window, cfg.window_taper)
    return px if win is None else px * win


def _parabolic(left: float, centre: float, right: float) -> float:
    denom = left - 2.0 * centre + right
    if denom >= 0 or abs(left - right) <= 1e-12 * abs(centre):
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def _cross_power(fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    """Normalised cross-power of two ``rfft2`` spectra; bins below epsilon are zeroed."""
    cross = fb * np.conj(fa)
    mag = np.abs(cross)
    pc = np.zeros_like(cross)
    np.divide(cross, mag, out=pc, where=mag >= PC_EPSILON)
    return pc


def _correlate(fa: np.ndarray, fb: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Inverse transform of the normalised cross-power of two ``rfft2`` spectra."""
    return sfft.irfft2(_cross_power(fa, fb), s=shape)


def _dft_refine(pc_half: np.ndarray, shape: tuple[int, int], iy: int, ix: int,
                factor: int) -> tuple[float, float]:
    """Sub-pixel offset of the correlation maximum near ``(iy, ix)``.

    Evaluates the band-limited correlation surface on a ``1/factor`` grid
    spanning one pixel either side of the integer peak by a matrix DFT of the
    half spectrum, then fits a parabola on that fine grid.
    """
    h, w = shape
    offsets = np.arange(-factor, factor + 1) / factor
    ky = sfft.fftfreq(h, 1.0 / h)
    kx = np.arange(pc_half.shape[1], dtype=np.float64)
    weights = np.full(kx.size, 2.0)
    weights[0] = 1.0
    if w % 2 == 0:
        weights[-1] = 1.0
    ey = np.exp(2j * np.pi * np.outer(iy + offsets, ky) / h)
    ex = np.exp(2j * np.pi * np.outer(kx, ix + offsets) / w)
    fine = (ey @ (pc_half * weights) @ ex).real
    r, c = np.unravel_index(int(np.argmax(fine)), fine.shape)
    last = fine.shape[0] - 1
    fy = offsets[r] + (_parabolic(fine[r - 1, c], fine[r, c], fine[r + 1, c]) / factor
                       if 0 < r < last else 0.0)
    fx = offsets[c] + (_parabolic(fine[r, c - 1], fine[r, c], fine[r, c + 1]) / factor
                       if 0 < c < last else 0.0)
    return float(fy), float(fx)


def _locate_peak(surface: np.ndarray, subpixel_x: bool, subpixel_y: bool,
                 pc_half: np.ndarray | None = None, factor: int = 0) -> CorrelationPeak:
    """Integer argmax with wrap-around correction, plus optional refinement.

    Refinement is by matrix DFT when ``pc_half`` and ``factor`` are given,
    otherwise a three-point parabola per axis.
    """
    h, w = surface.shape
    iy, ix = np.unravel_index(int(np.argmax(surface)), surface.shape)
    peak = float(surface[iy, ix])
    fx = fy = 0.0
    if pc_half is not None and factor > 1 and (subpixel_x or subpixel_y):
        ry, rx = _dft_refine(pc_half, surface.shape, iy, ix, factor)
        fx, fy = (rx if subpixel_x else 0.0), (ry if subpixel_y else 0.0)
    else:
        if subpixel_x and w >= 3:
            fx = _parabolic(surface[iy, (ix - 1) % w], peak, surface[iy, (ix + 1) % w])
        if subpixel_y and h >= 3:
            fy = _parabolic(surface[(iy - 1) % h, ix], peak, surface[(iy + 1) % h, ix])
    dx = ix - w if ix > w // 2 else ix
    dy = iy - h if iy > h // 2 else iy
    return CorrelationPeak(dx=dx + fx, dy=dy + fy, response=max(peak, 0.0))


def _peak_of(fa: np.ndarray, fb: np.ndarray, shape: tuple[int, int], subpixel: bool,
             method: str, factor: int) -> CorrelationPeak:
    pc = _cross_power(fa, fb)
    surface = sfft.irfft2(pc, s=shape)
    if subpixel and method == "dft":
        return _locate_peak(surface, True, True, pc, factor)
    return _locate_peak(surface, subpixel, subpixel)


def phase_correlation(a: Image, b: Image, subpixel: bool = False, window: bool | str = False,
                      method: str = "dft", factor: int = 10) -> CorrelationPeak:
    """Shift of ``b`` relative to ``a`` from the normalised cross-power spectrum.

    ``b == np.roll(a, (dy, dx), axis=(0, 1))`` yields ``(dx, dy)``. With
    ``subpixel`` the integer peak is refined, by ``method`` ``"dft"``
    (upsampled surface, ``factor`` steps per pixel) or ``"parabolic"``.
    ``window`` is a :class:`RegistrationConfig` window name; ``True`` means Hann.
    """
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    pa, pb = a.pixels, b.pixels
    kind = {True: "hann", False: "none"}.get(window, window)
    if kind not in WINDOWS:
        raise InvalidInputError(f"unknown window {window!r}")
    win = _window(a.shape, kind)
    if win is not None:
        pa, pb = pa * win, pb * win
    _check_method(method)
    return _peak_of(sfft.rfft2(pa), sfft.rfft2(pb), a.shape, subpixel, method, factor)


# --------------------------------------------------------------------------
# rotation and translation stages


def _polar_rows(cfg: RegistrationConfig) -> int:
    # magnitudes of real images are point-symmetric: half a turn holds everything
    return max(cfg.angular_bins * cfg.upsample // 2, 1)


@lru_cache(maxsize=16)
def _half_polar_operator(shape: tuple[int, int], angular_bins: int, radial_bins: int) -> sp.csr_matrix:
    """Bilinear samples of an ``rfft2`` half spectrum on a half-turn polar grid.

    Angle ``theta`` maps to frequency ``(ky, kx) = r (-sin theta, cos theta)``,
    the same orientation as :func:`warp_polar` on an ``fftshift``-ed image;
    samples with ``kx < 0`` are read at ``-k`` since real images have
    point-symmetric magnitudes.
    """
    h, w = shape
    wh = w // 2 + 1
    r_max = min(h, w) / 2.0
    theta = np.arange(angular_bins) * (math.pi / angular_bins)
    radius = np.arange(radial_bins) * (r_max / radial_bins)
    ky = -radius[None, :] * np.sin(theta)[:, None]
    kx = radius[None, :] * np.cos(theta)[:, None]
    flip = kx < 0
    ky, kx = np.where(flip, -ky, ky).ravel(), np.where(flip, -kx, kx).ravel()
    r0, c0 = np.floor(ky), np.floor(kx)
    fr, fc = ky - r0, kx - c0
    r0, c0 = r0.astype(np.intp), c0.astype(np.intp)
    out_idx = np.arange(ky.size)
    rows, cols, vals = [], [], []
    for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                        (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        cc = c0 + dc
        ok = (cc < wh) & (wgt > 0)
        rows.append(out_idx[ok])
        cols.append(((r0[ok] + dr) % h) * wh + cc[ok])
        vals.append(wgt[ok])
    return sp.csr_matrix((np.concatenate(vals).astype(np.float32),
                          (np.concatenate(rows), np.concatenate(cols))), shape=(ky.size, h * wh))


def _padded_spectrum(px: np.ndarray, cfg: RegistrationConfig) -> tuple[np.ndarray, tuple[int, int]]:
    padded = (px.shape[0] * cfg.rotation_padding, px.shape[1] * cfg.rotation_padding)
    # single precision is ample for a log-magnitude and halves the cost
    return sfft.rfft2(px.astype(np.float32), s=padded), padded


@lru_cache(maxsize=8)
def _hpf32(shape: tuple[int, int], profile: str) -> np.ndarray:
    return hpf_window(shape, profile, half=True).astype(np.float32)


def _polar_magnitude(spectrum_half: np.ndarray, shape: tuple[int, int],
                     cfg: RegistrationConfig, radial: int) -> np.ndarray:
    """Log-magnitude of a (zero-padded) half spectrum warped to (angle, radius)."""
    mag = np.abs(spectrum_half)
    if cfg.hpf:
        mag *= _hpf32(shape, cfg.hpf_profile)
    np.log1p(mag, out=mag)
    peak = mag.max()
    if not peak > 0:
        raise UnusableScanError("scan has no spectral content")
    # the correlation itself runs in double precision
    peak = float(peak)
    if cfg.polar_upsampling == "direct":
        op = _half_polar_operator(shape, _polar_rows(cfg), radial)
        return (op @ mag.ravel()).reshape(-1, radial).astype(np.float64) / peak
    op = _half_polar_operator(shape, max(cfg.angular_bins // 2, 1), radial)
    polar = (op @ mag.ravel()).reshape(-1, radial).astype(np.float64) / peak
    return upsample_angular(polar, cfg.upsample)


def _rotation_polar(px: np.ndarray, cfg: RegistrationConfig) -> np.ndarray:
    full, padded = _padded_spectrum(px, cfg)
    return _polar_magnitude(full, padded, cfg, cfg.radial_bins or min(px.shape) // 2)


def _fold_half_turn(theta: float) -> float:
    """Representative of ``theta`` modulo pi in ``(-pi/2, pi/2]``."""
    folded = theta - math.pi * round(theta / math.pi)
    if folded <= -math.pi / 2:
        folded += math.pi
    return folded


def _rotation_from_polar(polar_prev: np.ndarray, polar_curr: np.ndarray,
                         cfg: RegistrationConfig) -> tuple[float, float]:
    pc = _cross_power(sfft.rfft2(polar_prev), sfft.rfft2(polar_curr))
    surface = sfft.irfft2(pc, s=polar_prev.shape)
    if cfg.rotation_subpixel and cfg.subpixel_method == "dft":
        peak = _locate_peak(surface, False, True, pc, cfg.subpixel_factor)
    else:
        peak = _locate_peak(surface, False, cfg.rotation_subpixel)
    # dx is the radial (scale) shift and is discarded
    theta = peak.dy * math.pi / polar_prev.shape[0]
    return _fold_half_turn(theta), peak.response


def _check_usable(img: Image) -> None:
    px = img.pixels
    if px.max() == px.min():
        raise UnusableScanError("scan is constant")


def estimate_rotation(prev: Image, curr: Image, upsample: int = 4,
                      cfg: RegistrationConfig | None = None) -> tuple[float, float]:
    """Rotation of ``curr``'s content relative to ``prev`` (CCW, rad) and peak response.

    The result lies in ``(-pi/2, pi/2]``: magnitude spectra cannot tell
    ``theta`` and ``theta + pi`` apart.
    """
    if prev.shape != curr.shape:
        raise InvalidInputError("images must share dimensions")
    if upsample < 1:
        raise InvalidInputError("upsample must be >= 1")
    cfg = RegistrationConfig(upsample=upsample) if cfg is None else _with_upsample(cfg, upsample)
    _check_usable(prev)
    _check_usable(curr)
    pp, pc = prev.pixels, curr.pixels
    pp, pc = _apodize(pp, cfg), _apodize(pc, cfg)
    polar_prev = _rotation_polar(pp, cfg)
    polar_curr = _rotation_polar(pc, cfg)
    return _rotation_from_polar(polar_prev, polar_curr, cfg)


def _with_upsample(cfg: RegistrationConfig, upsample: int) -> RegistrationConfig:
    if cfg.upsample == upsample:
        return cfg
    from dataclasses import replace
    return replace(cfg, upsample=upsample)


def _translation_spectrum(spectrum_half: np.ndarray, shape, cfg: RegistrationConfig) -> np.ndarray:
    if cfg.hpf_translation:
        return spectrum_half * hpf_window(shape, cfg.hpf_profile, half=True)
    return spectrum_half


def estimate_translation(prev: Image, curr_rot_corrected: Image,
                         cfg: RegistrationConfig | None = None) -> tuple[float, float, float]:
    """Pixel shift ``(dx, dy)`` of the rotation-corrected image relative to ``prev``."""
    cfg = cfg or RegistrationConfig()
    if prev.shape != curr_rot_corrected.shape:
        raise InvalidInputError("images must share dimensions")
    pa, pb = prev.pixels, curr_rot_corrected.pixels
    pa, pb = _apodize(pa, cfg), _apodize(pb, cfg)
    fa = _translation_spectrum(sfft.rfft2(pa), prev.shape, cfg)
    fb = _translation_spectrum(sfft.rfft2(pb), prev.shape, cfg)
    peak = _peak_of(fa, fb, prev.shape, cfg.subpixel, cfg.subpixel_method, cfg.subpixel_factor)
    return peak.dx, peak.dy, peak.response


# --------------------------------------------------------------------------
# full registration


@dataclass(frozen=True, eq=False)
class PreparedScan:
    """Per-scan transforms reused when the scan is the earlier one of a pair."""

    image: Image
    apodized: np.ndarray
    polar: np.ndarray
    cfg: RegistrationConfig

    @cached_property
    def spectrum_half(self) -> np.ndarray:
        # only needed once the scan becomes the reference
        return _translation_spectrum(sfft.rfft2(self.apodized), self.image.shape, self.cfg)


def prepare_scan(img: Image, cfg: RegistrationConfig) -> PreparedScan:
    _check_usable(img)
    px = _apodize(img.pixels, cfg)
    return PreparedScan(img, px, _rotation_polar(px, cfg), cfg)


@dataclass
class StageTiming:
    rotation_ms: float = 0.0
    translation_ms: float = 0.0


def _register_prepared(prev: PreparedScan, curr: PreparedScan, cfg: RegistrationConfig,
                       timing: StageTiming | None = None) -> RegistrationResult:
    a, b = prev.image, curr.image
    dt = b.timestamp - a.timestamp
    if not dt > 0:
        raise InvalidInputError("scans must have increasing timestamps")
    t0 = time.perf_counter()
    content_theta, rot_resp = _rotation_from_polar(prev.polar, curr.polar, cfg)
    t1 = time.perf_counter()
    corrected = rotate_image(b, -content_theta)
    pb = _apodize(corrected.pixels, cfg)
    fb = _translation_spectrum(sfft.rfft2(pb), b.shape, cfg)
    peak = _peak_of(prev.spectrum_half, fb, b.shape, cfg.subpixel, cfg.subpixel_method,
                    cfg.subpixel_factor)
    t2 = time.perf_counter()
    if timing is not None:
        timing.rotation_ms = (t1 - t0) * 1e3
        timing.translation_ms = (t2 - t1) * 1e3
    mpp = a.meters_per_pixel
    # content moves opposite to the platform; image rows grow downwards
    return RegistrationResult(
        theta=-content_theta,
        dx_m=-peak.dx * mpp,
        dy_m=peak.dy * mpp,
        rotation_response=rot_resp,
        translation_response=peak.response,
        dt=dt,
        timestamp=b.timestamp,
    )


def register(prev: Image, curr: Image, cfg: RegistrationConfig | None = None) -> RegistrationResult:
    """Platform motion from ``prev`` to ``curr``.

    Rotation first, then translation on the rotation-corrected ``curr``;
    pixel shifts are scaled by ``prev.meters_per_pixel``.

    Raises:
        UnusableScanError: if either scan is constant (e.g. all zero).
        InvalidInputError: on mismatched shapes or non-increasing timestamps.
    """
    cfg = cfg or RegistrationConfig()
    if prev.shape != curr.shape:
        raise InvalidInputError("images must share dimensions")
    if not curr.timestamp > prev.timestamp:
        raise InvalidInputError("scans must have increasing timestamps")
    return _register_prepared(prepare_scan(prev, cfg), prepare_scan(curr, cfg), cfg)


class ScanRegistrar:
    """Registers a stream of scans pairwise, keeping the previous scan's transforms.

    Not thread-safe; use one instance per worker.
    """

    def __init__(self, cfg: RegistrationConfig | None = None):
        self.cfg = cfg or RegistrationConfig()
        self.timing = StageTiming()
        self._prev: PreparedScan | None = None

    def reset(self) -> None:
        self._prev = None

    def push(self, img: Image) -> RegistrationResult | None:
        """Add the next scan; returns the motion since the last usable scan.

        Raises :class:`UnusableScanError` for a degenerate scan, which is then
        skipped (the previous usable scan stays the reference).
        """
        self.timing = StageTiming()
        t0 = time.perf_counter()
        prepared = prepare_scan(img, self.cfg)
        prep_ms = (time.perf_counter() - t0) * 1e3
        prev, self._prev = self._prev, prepared
        if prev is None:
            self.timing.rotation_ms = prep_ms
            return None
        result = _register_prepared(prev, prepared, self.cfg, self.timing)
        # spectrum and polar warp of the new scan belong to the rotation stage
        self.timing.rotation_ms += prep_ms
        return result


def to_velocity(res: RegistrationResult, twist: bool = True) -> RadarVelocity:
    """Convert an inter-scan transform to body-frame velocities.

    With ``twist=True`` the translation is treated as the chord of a
    constant-velocity arc: it is rotated back by half the heading change (and
    scaled by the chord/arc ratio), so that integrating the returned
    velocities reproduces the measured transform. ``twist=False`` divides the
    raw translation by ``dt``.
    """
    if not res.dt > 0:
        raise InvalidInputError("dt must be positive")
    dx, dy, th = res.dx_m, res.dy_m, res.theta
    if twist and th != 0.0:
        half = 0.5 * th
        scale = half / math.sin(half)
        c, s = math.cos(half), math.sin(half)
        dx, dy = scale * (c * dx + s * dy), scale * (-s * dx + c * dy)
    return RadarVelocity(
        v_x=dx / res.dt,
        v_y=dy / res.dt,
        w_z=th / res.dt,
        timestamp=res.timestamp,
        quality=min(res.rotation_response, res.translation_response),
        interval=res.dt,
    )
