import numpy as np
import pytest
from scipy import ndimage as ndi

from rio_odom.imaging import Image


def blob_scene(rng, size=128, n=60, sigma=1.5, disc=True):
    """Sparse Gaussian blobs inside a centred disc, values in [0, 1]."""
    img = np.zeros((size, size))
    c = size // 2
    r_max = 0.42 * size
    pts = 0
    while pts < n:
        y, x = rng.uniform(-r_max, r_max, 2)
        if disc and np.hypot(x, y) > r_max:
            continue
        img[int(round(c + y)), int(round(c + x))] = rng.uniform(0.3, 1.0)
        pts += 1
    img = ndi.gaussian_filter(img, sigma)
    return img / img.max()


def smooth_noise(rng, size=128, sigma=3.0):
    img = ndi.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    img -= img.min()
    return img / img.max()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scene(rng):
    return Image(blob_scene(rng), meters_per_pixel=0.5)


# ------------------------------------------------------- acceptance report

_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; ``report(cid, ok, detail)``."""

    def _add(cid: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  {cid}: {detail}")
        return ok

    return _add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
