"""Polar to Cartesian conversion.

Backward warping walks the output grid and samples the polar sweep for every
pixel, so nothing inside the sensor's range disc is left empty. The forward
(scatter) variant is kept only as a reference for comparison.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ParameterError
from .ingest import PolarScan


@dataclass(frozen=True)
class GridSpec:
    """Square Cartesian grid with the sensor at the centre pixel.

    ``max_range`` caps the rendered disc; ``None`` uses the scan's own range.
    """

    side_pixels: int = 401
    meters_per_pixel: float = 1.0
    max_range: Optional[float] = None

    def __post_init__(self):
        if self.side_pixels < 1 or self.side_pixels % 2 == 0:
            raise ParameterError(f"side_pixels must be odd and positive, got {self.side_pixels}")
        if not self.meters_per_pixel > 0:
            raise ParameterError("meters_per_pixel must be positive")
        if self.max_range is not None and not self.max_range > 0:
            raise ParameterError("max_range must be positive")

    @property
    def center(self) -> int:
        return self.side_pixels // 2

    def effective_range(self, scan: PolarScan) -> float:
        if self.max_range is None:
            return scan.max_range
        return min(self.max_range, scan.max_range)

    def pixel_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Metric (x, y) of every pixel centre; x grows with column, y grows upward."""
        idx = (np.arange(self.side_pixels) - self.center) * self.meters_per_pixel
        return np.meshgrid(idx, -idx)


@dataclass(eq=False)
class CartesianImage:
    pixels: np.ndarray
    meters_per_pixel: float

    @property
    def side_pixels(self) -> int:
        return self.pixels.shape[0]

    @property
    def center(self) -> int:
        return self.pixels.shape[0] // 2


def backward_warp(scan: PolarScan, grid: GridSpec = GridSpec(),
                  offset: Tuple[float, float] = (0.0, 0.0), rotation: float = 0.0) -> CartesianImage:
    """Resample ``scan`` onto ``grid`` by bilinear lookup in (azimuth, range).

    Azimuth wraps around; the range index is clamped at the last bin. Pixels
    farther than the maximum range are zero.

    ``offset`` (metres) and ``rotation`` (radians, counter-clockwise) place a
    virtual sensor relative to the real one: the output is what a sensor at
    that pose would see of the same sweep. Both default to the identity.
    """
    px, py = grid.pixel_coordinates()
    if rotation or offset[0] or offset[1]:
        c, s = np.cos(rotation), np.sin(rotation)
        px, py = c * px - s * py + offset[0], s * px + c * py + offset[1]

    r = np.hypot(px, py)
    inside = r <= grid.effective_range(scan)

    n_az, n_bins = scan.intensities.shape
    a = np.mod(np.arctan2(py, px), 2.0 * np.pi) * (n_az / (2.0 * np.pi))
    a_floor = np.floor(a)
    wa = a - a_floor
    k0 = a_floor.astype(np.int64) % n_az
    k1 = (k0 + 1) % n_az

    rb = np.clip(r / scan.range_resolution, 0.0, n_bins - 1)
    b0 = np.floor(rb).astype(np.int64)
    wb = rb - b0
    b1 = np.minimum(b0 + 1, n_bins - 1)

    I = scan.intensities
    out = ((1 - wa) * ((1 - wb) * I[k0, b0] + wb * I[k0, b1])
           + wa * ((1 - wb) * I[k1, b0] + wb * I[k1, b1]))
    out = np.where(inside, out, 0.0)
    return CartesianImage(out, grid.meters_per_pixel)


def forward_warp_reference(scan: PolarScan, grid: GridSpec = GridSpec()) -> CartesianImage:
    """Scatter every polar sample to its nearest pixel, keeping the max on collisions."""
    phi = scan.azimuth_angles()[:, None]
    rng = (np.arange(scan.range_bins) * scan.range_resolution)[None, :]
    keep = np.broadcast_to(rng <= grid.effective_range(scan), scan.intensities.shape)
    x = rng * np.cos(phi)
    y = rng * np.sin(phi)
    cols = np.rint(x / grid.meters_per_pixel).astype(np.int64) + grid.center
    rows = grid.center - np.rint(y / grid.meters_per_pixel).astype(np.int64)
    ok = keep & (cols >= 0) & (cols < grid.side_pixels) & (rows >= 0) & (rows < grid.side_pixels)
    out = np.zeros((grid.side_pixels, grid.side_pixels))
    np.maximum.at(out, (rows[ok], cols[ok]), scan.intensities[ok])
    return CartesianImage(out, grid.meters_per_pixel)
