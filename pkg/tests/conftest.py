import os

import numpy as np
import pytest
from hypothesis import strategies as st

from ledd.imageio import GrayImage

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA = os.path.join(ROOT, "data")
CORPUS = os.path.join(DATA, "corpus")
TRAIN = os.path.join(DATA, "train")
TOY = os.path.join(DATA, "toy")


def random_image(rng, h, w, smooth=False):
    """Uniform noise, or a smooth ramp plus mild noise that looks more like a photo."""
    if not smooth:
        return GrayImage(rng.integers(0, 256, (h, w), dtype=np.uint8))
    yy, xx = np.mgrid[0:h, 0:w]
    base = 128 + 60 * np.sin(xx / 7.0 + rng.uniform(0, 6)) * np.cos(yy / 11.0)
    px = np.clip(np.rint(base + rng.normal(0, 4, (h, w))), 0, 255).astype(np.uint8)
    return GrayImage(px)


@st.composite
def gray_images(draw, max_side=24, min_side=1):
    h = draw(st.integers(min_side, max_side))
    w = draw(st.integers(min_side, max_side))
    data = draw(st.binary(min_size=h * w, max_size=h * w))
    return GrayImage.from_samples(w, h, list(data))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def report(number, ok, detail):
    """Record one acceptance line; the terminal summary prints them all."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
