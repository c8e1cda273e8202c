import math

import numpy as np
import pytest

from sinoplace.ingest import PolarScan
from sinoplace.synth import NoiseSpec, ScanGeometry, random_scene
from sinoplace.warp import CartesianImage, GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_geometry():
    # 100 m of range at 0.2 m per bin
    return ScanGeometry(azimuths=400, range_bins=500, range_resolution=0.2)


@pytest.fixture
def small_grid():
    return GridSpec(side_pixels=101, meters_per_pixel=1.0)


@pytest.fixture
def scene():
    return random_scene(7, (-80.0, 80.0, -80.0, 80.0), count=60)


@pytest.fixture
def noisy_scene(scene):
    return scene.with_noise(NoiseSpec(speckle_sigma=0.2, ring_bins=(30, 31), ring_amplitude=0.5))


def random_scan(rng, az=64, bins=80, res=0.5):
    return PolarScan(rng.random((az, bins)), res, 0)


def random_image(rng, side=41, density=0.3):
    px = rng.random((side, side)) * (rng.random((side, side)) < density)
    return CartesianImage(px, 1.0)


def place_scene(seed, half_extent=150.0, counts=(150, 1500)):
    """A place with a log-uniform number of small reflectors, so densities vary between places."""
    u = np.random.default_rng([seed, 99]).uniform(math.log(counts[0]), math.log(counts[1]))
    return random_scene(seed, (-half_extent, half_extent, -half_extent, half_extent), int(math.exp(u)),
                        radius=(0.8, 3.0))


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, printed in the terminal summary."""

    def record(number, name, passed, detail):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {number:>2} {status}  {name}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
