import numpy as np
import pytest


def make_textured(size=64, seed=3):
    """Smooth-plus-detail image standing in for a natural photo."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = np.stack(
        [
            0.5 + 0.3 * np.sin(6 * xx + 2 * yy),
            0.5 + 0.3 * np.cos(4 * yy - 3 * xx),
            0.5 + 0.2 * np.sin(9 * xx * yy + 1.0),
        ],
        axis=-1,
    )
    detail = 0.08 * rng.standard_normal((size, size, 3))
    return np.clip(base + detail, 0.0, 1.0)


def make_test_card(size=64):
    """Hard edges: checker blocks, a bright bar and a diagonal line."""
    img = np.zeros((size, size, 3))
    yy, xx = np.mgrid[0:size, 0:size]
    checker = ((yy // 6 + xx // 6) % 2).astype(float)
    img[..., 0] = checker
    img[..., 1] = 0.2 + 0.6 * (xx > size // 2)
    img[..., 2] = 0.9 * (np.abs(yy - xx) < 2)
    img[size // 4 : size // 4 + 5, :, :] = 1.0
    return img


@pytest.fixture
def textured():
    return make_textured()


@pytest.fixture
def test_card():
    return make_test_card()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
