import numpy as np
import pytest

from stegokit.imaging import Channels, PixelImage


def random_image(rng, width, height, channels=Channels.RGB):
    shape = (height, width, channels.count)
    return PixelImage(rng.integers(0, 256, size=shape, dtype=np.uint8), channels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def rgb64(rng):
    return random_image(rng, 64, 48)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
