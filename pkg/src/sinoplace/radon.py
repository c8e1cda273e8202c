"""Radon transform of Cartesian radar images.

The projection at angle ``theta`` integrates the image along lines
perpendicular to the direction ``(cos theta, sin theta)``; the offset ``l`` of a
line is ``x cos theta + y sin theta`` with the sensor at the origin.

Discretization is pixel-driven: every pixel hands its value to the two
offset bins bracketing its projected centre, split linearly. Each column
therefore carries exactly the image mass, and a pixel at the centre lands in
the centre bin for every angle.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .warp import CartesianImage

DEFAULT_N_THETA = 180


@dataclass(eq=False)
class Sinogram:
    """``values[i, j]`` is the line integral at offset index i and angle index j.

    Angles are ``pi * j / n_theta``; offsets are symmetric about the centre
    row and ``spacing`` pixels apart (1 unless the sinogram was downsampled).
    """

    values: np.ndarray
    spacing: float = 1.0

    @property
    def n_l(self) -> int:
        return self.values.shape[0]

    @property
    def n_theta(self) -> int:
        return self.values.shape[1]

    def thetas(self) -> np.ndarray:
        return np.pi * np.arange(self.n_theta) / self.n_theta

    def offsets(self) -> np.ndarray:
        return (np.arange(self.n_l) - (self.n_l - 1) / 2.0) * self.spacing


def offset_count(side_pixels: int) -> int:
    """Number of unit-spaced offsets needed to span the image diagonal."""
    half = math.ceil(side_pixels * math.sqrt(2.0) / 2.0)
    return 2 * half + 1


def radon_transform(img: CartesianImage, n_theta: int = DEFAULT_N_THETA,
                    chunk: int = 12) -> Sinogram:
    if n_theta < 2:
        raise ParameterError("n_theta must be >= 2")
    pixels = np.asarray(img.pixels, dtype=np.float64)
    side = pixels.shape[0]
    n_l = offset_count(side)
    half = (n_l - 1) // 2
    out = np.zeros((n_theta, n_l))

    rows, cols = np.nonzero(pixels)
    if rows.size == 0:
        return Sinogram(out.T.copy())
    mass = pixels[rows, cols]
    x = (cols - side // 2).astype(np.float64)
    y = (side // 2 - rows).astype(np.float64)

    thetas = np.pi * np.arange(n_theta) / n_theta
    for start in range(0, n_theta, chunk):
        th = thetas[start:start + chunk]
        pos = np.cos(th)[:, None] * x + np.sin(th)[:, None] * y + half
        lo = np.floor(pos)
        w = pos - lo
        base = (np.arange(th.size) * n_l)[:, None] + lo.astype(np.int64)
        size = th.size * n_l
        acc = np.bincount(base.ravel(), weights=((1.0 - w) * mass).ravel(), minlength=size)
        acc[1:] += np.bincount(base.ravel(), weights=(w * mass).ravel(), minlength=size)[:-1]
        out[start:start + th.size] = acc[:size].reshape(th.size, n_l)
    return Sinogram(out.T.copy())


def projection_mass(sino: Sinogram, j: int) -> float:
    if not 0 <= j < sino.n_theta:
        raise IndexError(f"column {j} outside [0, {sino.n_theta})")
    return float(sino.values[:, j].sum())
