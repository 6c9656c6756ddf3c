import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage as ndi

from rio_odom.errors import InvalidInputError, UnusableScanError
from rio_odom.imaging import Image, rotate_image
from rio_odom.registration import (RegistrationConfig, RegistrationResult, ScanRegistrar,
                                   Spectrum, estimate_rotation, estimate_translation,
                                   forward_transform, inverse_transform, magnitude_spectrum,
                                   phase_correlation, register, to_velocity, warp_polar)

from conftest import blob_scene, smooth_noise

DEG = math.pi / 180


def roll(px, dx, dy):
    return np.roll(px, (dy, dx), axis=(0, 1))


def subshift(px, dx, dy):
    """Exact circular subpixel shift via the Fourier shift theorem."""
    ky = np.fft.fftfreq(px.shape[0])[:, None]
    kx = np.fft.fftfreq(px.shape[1])[None, :]
    return np.fft.ifft2(np.fft.fft2(px) * np.exp(-2j * np.pi * (kx * dx + ky * dy))).real


# -------------------------------------------------------------- transforms

def test_forward_transform_basics():
    assert not forward_transform(Image(np.zeros((8, 6)))).values.any()
    spec = forward_transform(Image(np.full((8, 6), 0.5))).values
    assert spec[0, 0] == pytest.approx(0.5 * 48)
    assert np.abs(spec.ravel()[1:]).max() < 1e-12
    imp = np.zeros((8, 6))
    imp[0, 0] = 1.0
    np.testing.assert_allclose(np.abs(forward_transform(Image(imp)).values), 1.0)


def test_transform_round_trip(rng):
    px = rng.uniform(0, 1, (31, 40))
    back = inverse_transform(forward_transform(Image(px)))
    np.testing.assert_allclose(back.pixels, px, atol=1e-9)


def test_spectrum_dimensions():
    s = Spectrum(np.zeros((3, 5)))
    assert (s.width, s.height) == (5, 3)
    with pytest.raises(InvalidInputError):
        Spectrum(np.zeros(4))


def test_magnitude_of_zero_spectrum_is_zero():
    assert not magnitude_spectrum(Spectrum(np.zeros((8, 8)))).pixels.any()


@settings(max_examples=30, deadline=None)
@given(dx=st.integers(-40, 40), dy=st.integers(-40, 40), seed=st.integers(0, 2**16))
def test_magnitude_is_translation_blind(dx, dy, seed):
    px = np.random.default_rng(seed).uniform(0, 1, (64, 64))
    a = magnitude_spectrum(forward_transform(Image(px))).pixels
    b = magnitude_spectrum(forward_transform(Image(roll(px, dx, dy)))).pixels
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert a.max() == pytest.approx(1.0) and a.min() >= 0


def test_magnitude_rotates_with_image(rng):
    px = blob_scene(rng, 128, 80, sigma=2.0)
    angle = 20 * DEG
    rot = rotate_image(Image(px), angle)
    ma = magnitude_spectrum(forward_transform(Image(px)))
    mb = magnitude_spectrum(forward_transform(rot)).pixels
    expected = rotate_image(ma, angle).pixels
    yy, xx = np.mgrid[:128, :128] - 64
    inner = np.hypot(xx, yy) < 32
    assert np.abs(mb - expected)[inner].mean() < 0.05


# -------------------------------------------------------------- polar warp

def test_warp_polar_isotropic_rows_identical():
    yy, xx = np.mgrid[:65, :65] - 32
    img = Image(np.exp(-(xx ** 2 + yy ** 2) / 200.0))
    out = warp_polar(img, 64, 20).pixels
    # bilinear sampling of a smooth radial profile; rows agree up to interpolation
    assert np.abs(out - out[0]).max() < 2e-3
    exact = Image(np.ones((65, 65)))
    out = warp_polar(exact, 64, 20).pixels
    assert np.abs(out - out[0]).max() < 1e-6


def test_warp_polar_zero_and_validation():
    assert not warp_polar(Image(np.zeros((16, 16))), 8, 4).pixels.any()
    with pytest.raises(InvalidInputError):
        warp_polar(Image(np.zeros((16, 16))), 0, 4)


def test_warp_polar_rotation_is_row_shift(rng):
    px = smooth_noise(rng, 128, 2.0)
    bins, angle = 180, 30 * DEG
    a = warp_polar(Image(px), bins, 50).pixels
    b = warp_polar(rotate_image(Image(px), angle), bins, 50).pixels
    scores = [np.sum(np.roll(a, k, axis=0)[:, 5:45] * b[:, 5:45]) for k in range(bins)]
    assert abs(int(np.argmax(scores)) - angle / (2 * math.pi) * bins) <= 1


# ------------------------------------------------------- phase correlation

def test_phase_correlation_identity(scene, rng):
    pk = phase_correlation(scene, scene, subpixel=True)
    assert (pk.dx, pk.dy) == (0.0, 0.0)
    shifted = phase_correlation(scene, scene.with_pixels(roll(scene.pixels, 2, 2)))
    assert pk.response >= shifted.response
    # every bin carries energy for dense noise, so the peak is the full unit
    px = rng.uniform(0, 1, (32, 32))
    assert phase_correlation(Image(px), Image(px)).response == pytest.approx(1.0)


def test_phase_correlation_integer_shift(scene):
    pk = phase_correlation(scene, scene.with_pixels(roll(scene.pixels, 5, -3)))
    assert (pk.dx, pk.dy) == (5.0, -3.0)


def test_phase_correlation_noisy_shift():
    ok = 0
    for trial in range(100):
        r = np.random.default_rng(trial)
        px = blob_scene(r, 96, 40)
        clean = phase_correlation(Image(px), Image(roll(px, 5, -3)))
        noisy = phase_correlation(Image(px), Image(roll(px, 5, -3) + r.normal(0, 0.05, px.shape)))
        ok += abs(noisy.dx - 5) <= 1 and abs(noisy.dy + 3) <= 1 and noisy.response < clean.response
    assert ok >= 95


def test_phase_correlation_shape_mismatch():
    with pytest.raises(InvalidInputError):
        phase_correlation(Image(np.zeros((8, 8))), Image(np.zeros((8, 9))))


def test_phase_correlation_zero_input_guarded():
    pk = phase_correlation(Image(np.zeros((16, 16))), Image(np.zeros((16, 16))))
    assert math.isfinite(pk.dx) and math.isfinite(pk.response)


@pytest.mark.parametrize("method", ["dft", "parabolic"])
def test_subpixel_methods(method, rng):
    px = smooth_noise(rng, 96, 2.0)
    pk = phase_correlation(Image(px), Image(subshift(px, 3.3, -1.6)), subpixel=True, method=method)
    assert abs(pk.dx - 3.3) < 0.25 and abs(pk.dy + 1.6) < 0.25


def test_dft_refinement_is_tight(rng):
    px = smooth_noise(rng, 96, 2.0)
    pk = phase_correlation(Image(px), Image(subshift(px, 2.45, 0.7)), subpixel=True)
    assert abs(pk.dx - 2.45) < 0.06 and abs(pk.dy - 0.7) < 0.06


def test_window_option_runs(scene):
    pk = phase_correlation(scene, scene.with_pixels(roll(scene.pixels, 4, 2)), window=True)
    assert (pk.dx, pk.dy) == (4.0, 2.0)


@settings(max_examples=25, deadline=None)
@given(sa=st.floats(0.01, 100), sb=st.floats(0.01, 100), seed=st.integers(0, 2**16))
def test_response_invariant_to_intensity_scale(sa, sb, seed):
    px = np.random.default_rng(seed).uniform(0, 1, (32, 32))
    r = np.random.default_rng(seed + 1)
    other = roll(px, 3, 1) + r.normal(0, 0.3, px.shape)
    ref = phase_correlation(Image(px), Image(other))
    pk = phase_correlation(Image(px * sa), Image(other * sb))
    assert (pk.dx, pk.dy) == (ref.dx, ref.dy)
    assert pk.response == pytest.approx(ref.response, rel=1e-9)


def _circular_xcorr_argmax(a, b):
    h, w = a.shape
    best, arg = -np.inf, None
    for dy in range(h):
        for dx in range(w):
            v = float(np.sum(a * np.roll(b, (-dy, -dx), axis=(0, 1))))
            if v > best:
                best, arg = v, (dx, dy)
    dx, dy = arg
    return (dx - w if dx > w // 2 else dx), (dy - h if dy > h // 2 else dy)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**16), dx=st.integers(-10, 10), dy=st.integers(-10, 10))
def test_integer_peak_matches_bruteforce(seed, dx, dy):
    r = np.random.default_rng(seed)
    a = r.uniform(0, 1, (24, 20))
    b = roll(a, dx, dy) + r.normal(0, 0.02, a.shape)
    pk = phase_correlation(Image(a), Image(b))
    assert (int(pk.dx), int(pk.dy)) == _circular_xcorr_argmax(a - a.mean(), b - b.mean())


# ------------------------------------------------------------- rotation

def test_rotation_of_identical_images_is_exactly_zero(scene):
    theta, resp = estimate_rotation(scene, scene)
    assert theta == 0.0 and resp == pytest.approx(1.0)


def test_rotation_ten_degrees(rng):
    px = blob_scene(rng, 192, 150)
    theta, _ = estimate_rotation(Image(px), rotate_image(Image(px), 10 * DEG), upsample=4)
    assert abs(theta - 10 * DEG) <= 2 * math.pi / (4 * 360)


def test_rotation_blind_to_translation(rng):
    px = blob_scene(rng, 192, 150)
    curr = rotate_image(Image(roll(px, 8, -4)), 5 * DEG)
    theta, _ = estimate_rotation(Image(px), curr, upsample=4)
    assert abs(theta - 5 * DEG) <= 2 * math.pi / (4 * 360)


def test_rotation_result_folded_to_half_turn(rng):
    px = blob_scene(rng, 128, 80)
    theta, _ = estimate_rotation(Image(px), rotate_image(Image(px), math.pi - 0.1))
    assert -math.pi / 2 < theta <= math.pi / 2
    assert abs(theta + 0.1) < 0.01


def test_rotation_rejects_degenerate_input(scene):
    with pytest.raises(UnusableScanError):
        estimate_rotation(scene, Image(np.zeros(scene.shape)))
    with pytest.raises(InvalidInputError):
        estimate_rotation(scene, scene, upsample=0)


def test_half_degree_rotation_not_locked_to_zero(rng):
    # an unpadded magnitude spectrum snaps rotations this small to 0
    px = blob_scene(rng, 256, 400)
    theta, _ = estimate_rotation(Image(px), rotate_image(Image(px), 0.5 * DEG))
    assert abs(theta - 0.5 * DEG) < 0.05 * DEG
    unpadded, _ = estimate_rotation(Image(px), rotate_image(Image(px), 0.5 * DEG),
                                    cfg=RegistrationConfig(rotation_padding=1))
    assert abs(unpadded - 0.5 * DEG) > abs(theta - 0.5 * DEG)


@pytest.mark.parametrize("kw", [dict(polar_upsampling="linear"), dict(rotation_subpixel=False),
                                dict(hpf=False), dict(subpixel_method="parabolic")])
def test_rotation_variants(kw, rng):
    px = blob_scene(rng, 160, 120)
    cfg = RegistrationConfig(**kw)
    theta, _ = estimate_rotation(Image(px), rotate_image(Image(px), -7 * DEG), cfg=cfg)
    assert abs(theta + 7 * DEG) <= 2 * math.pi / (4 * 360) + 1e-9


# ----------------------------------------------------------- translation

def test_translation_zero_and_pure_shift(scene):
    dx, dy, _ = estimate_translation(scene, scene)
    assert (dx, dy) == (0.0, 0.0)
    dx, dy, _ = estimate_translation(scene, scene.with_pixels(subshift(scene.pixels, 12, 0)))
    assert abs(dx - 12) <= 0.5 and abs(dy) <= 0.5


def test_translation_with_clutter():
    ok = 0
    for trial in range(20):
        r = np.random.default_rng(100 + trial)
        px = blob_scene(r, 128, 80)
        moved = roll(px, 3, 1)
        mask = r.random(px.shape) < 0.2
        moved[mask] = r.random(mask.sum())
        dx, dy, _ = estimate_translation(Image(px), Image(moved))
        ok += abs(dx - 3) <= 1 and abs(dy - 1) <= 1
    assert ok == 20


# -------------------------------------------------------------- register

def _pair(rng, size=192, theta=0.0, shift=(0.0, 0.0), mpp=0.2, dt=0.25):
    px = blob_scene(rng, size, 200, disc=True)
    a = Image(px, meters_per_pixel=mpp, timestamp=1.0)
    moved = rotate_image(Image(subshift(px, *shift)), theta)
    return a, Image(moved.pixels, meters_per_pixel=mpp, timestamp=1.0 + dt)


def test_register_identical(scene):
    b = Image(scene.pixels, meters_per_pixel=scene.meters_per_pixel, timestamp=1.0)
    res = register(scene, b)
    assert res.theta == 0.0 and res.dx_m == 0.0 and res.dy_m == 0.0 and res.dt == 1.0


def test_register_constructed_pair(rng):
    # content rotates by -2 deg and shifts 12 px left -> platform turned +2 deg and moved +x
    px = blob_scene(rng, 256, 300)
    a = Image(px, meters_per_pixel=0.2, timestamp=0.0)
    curr = rotate_image(Image(subshift(px, -12, 0)), -2 * DEG)
    b = Image(curr.pixels, meters_per_pixel=0.2, timestamp=0.25)
    res = register(a, b)
    assert abs(res.theta - 2 * DEG) <= 2 * math.pi / 1440
    # rotation about the sensor after shifting: translation is expressed in frame k-1
    expected = np.array([12 * 0.2 * math.cos(0), 0.0])
    assert abs(res.dx_m - expected[0]) < 0.5 * 0.2 * 2
    assert abs(res.dy_m) < 0.5 * 0.2 * 2
    assert res.dt == 0.25


def test_register_antisymmetry(rng):
    a, b = _pair(rng, theta=3 * DEG, shift=(4.0, -2.0))
    b2 = Image(a.pixels, meters_per_pixel=a.meters_per_pixel, timestamp=b.timestamp)
    a2 = Image(b.pixels, meters_per_pixel=a.meters_per_pixel, timestamp=a.timestamp)
    fwd, back = register(a, b), register(a2, b2)
    assert abs(fwd.theta + back.theta) <= 2 * math.pi / 1440
    # the reverse translation is the forward one rotated into the other frame
    c, s = math.cos(fwd.theta), math.sin(fwd.theta)
    rx, ry = -(c * fwd.dx_m + s * fwd.dy_m), -(-s * fwd.dx_m + c * fwd.dy_m)
    assert abs(back.dx_m - rx) < 0.2 and abs(back.dy_m - ry) < 0.2


def test_register_errors(scene):
    later = Image(scene.pixels, meters_per_pixel=0.5, timestamp=1.0)
    with pytest.raises(InvalidInputError):
        register(later, scene)
    with pytest.raises(UnusableScanError):
        register(scene, Image(np.zeros(scene.shape), timestamp=1.0))
    with pytest.raises(InvalidInputError):
        register(scene, Image(np.zeros((8, 8)), timestamp=1.0))


def test_registrar_keeps_reference_over_bad_scan(scene):
    reg = ScanRegistrar()
    assert reg.push(scene) is None
    with pytest.raises(UnusableScanError):
        reg.push(Image(np.zeros(scene.shape), timestamp=0.5))
    res = reg.push(Image(scene.pixels, meters_per_pixel=0.5, timestamp=1.0))
    assert res.dt == 1.0
    assert reg.timing.rotation_ms > 0 and reg.timing.translation_ms > 0


def test_config_validation():
    for bad in (dict(upsample=0), dict(polar_upsampling="cubic"), dict(subpixel_method="x"),
                dict(subpixel_factor=1), dict(rotation_padding=0), dict(window="kaiser"),
                dict(window_taper=0.0)):
        with pytest.raises(InvalidInputError):
            RegistrationConfig(**bad)


# ------------------------------------------------------------ velocities

def _res(dx=0.0, dy=0.0, th=0.0, dt=0.25):
    return RegistrationResult(th, dx, dy, 1.0, 0.8, dt, timestamp=5.0)


def test_to_velocity_examples():
    v = to_velocity(_res(2.4, 0.0, 0.0349, 0.25), twist=False)
    assert v.v_x == pytest.approx(9.6) and v.v_y == 0.0 and v.w_z == pytest.approx(0.1396)
    assert v.timestamp == 5.0 and v.quality == 0.8 and v.interval == 0.25
    z = to_velocity(_res())
    assert (z.v_x, z.v_y, z.w_z) == (0.0, 0.0, 0.0)
    r = to_velocity(_res(th=math.pi / 100, dt=1.0))
    assert r.w_z == pytest.approx(math.pi / 100) and r.v_x == 0.0


def test_twist_velocity_reproduces_chord():
    from rio_odom.trajectory import Pose2, integrate

    res = _res(2.0, 0.3, 0.2, 0.25)
    v = to_velocity(res, twist=True)
    pose = Pose2(0, 0, 0, 0)
    for _ in range(2000):
        pose = integrate(pose, v, res.dt / 2000)
    assert pose.x == pytest.approx(2.0, abs=1e-6) and pose.y == pytest.approx(0.3, abs=1e-6)
    assert pose.yaw == pytest.approx(0.2)


def test_dt_must_be_positive():
    with pytest.raises(InvalidInputError):
        _res(dt=0.0)
