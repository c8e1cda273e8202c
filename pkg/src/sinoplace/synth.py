"""Synthetic radar scenes with known ground truth.

A scene is a set of Gaussian reflectors in world coordinates. Rendering a
scene from a pose produces a polar sweep in the same convention as real data
(row k looks along bearing 2*pi*k/azimuths counter-clockwise from the vehicle's
heading), optionally corrupted with speckle, range rings and saturated beams.

All randomness comes from NumPy's PCG64 generator seeded through
``SeedSequence``. Scene generation uses ``SeedSequence(seed)``; per-frame noise
uses ``SeedSequence([seed, *pose words, noise_seed])`` where the pose words are
the IEEE-754 bit patterns of x, y and yaw split into 32-bit halves. The same
(scene, pose, seed) therefore gives the same sweep on any platform.
"""

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError
from .ingest import PolarScan, PoseRecord, write_poses, write_scan

log = logging.getLogger(__name__)

FRAME_PERIOD_NS = 250_000_000  # 4 Hz


@dataclass(frozen=True)
class Scatterer:
    x: float
    y: float
    rcs: float
    radius: float


@dataclass(frozen=True)
class NoiseSpec:
    speckle_sigma: float = 0.0
    ring_bins: Tuple[int, ...] = ()
    ring_amplitude: float = 0.0
    saturation_prob: float = 0.0
    clutter_floor: float = 0.0

    def __post_init__(self):
        if self.speckle_sigma < 0 or self.ring_amplitude < 0 or self.clutter_floor < 0:
            raise ParameterError("noise parameters must be >= 0")
        if not 0 <= self.saturation_prob <= 1:
            raise ParameterError("saturation_prob must lie in [0, 1]")
        if any(b < 0 for b in self.ring_bins):
            raise ParameterError("ring bins must be >= 0")


@dataclass(frozen=True)
class ScanGeometry:
    azimuths: int = 400
    range_bins: int = 1000
    range_resolution: float = 0.2

    @property
    def max_range(self) -> float:
        return self.range_bins * self.range_resolution


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    scatterers: Tuple[Scatterer, ...] = ()
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        for s in self.scatterers:
            if not 0 <= s.rcs <= 1:
                raise ParameterError(f"rcs must lie in [0, 1], got {s.rcs}")
            if not s.radius > 0:
                raise ParameterError(f"radius must be positive, got {s.radius}")

    def with_noise(self, noise: NoiseSpec) -> "SceneSpec":
        return SceneSpec(self.seed, self.scatterers, noise)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        noise = d.get("noise", {})
        noise = NoiseSpec(**{**noise, "ring_bins": tuple(noise.get("ring_bins", ()))})
        return cls(int(d["seed"]), tuple(Scatterer(**s) for s in d.get("scatterers", ())), noise)


def random_scene(seed: int, extent=(-150.0, 150.0, -150.0, 150.0), count: int = 150,
                 rcs=(0.2, 1.0), radius=(0.8, 6.0), noise: NoiseSpec = NoiseSpec()) -> SceneSpec:
    """Uniformly scattered reflectors over a rectangle ``(xmin, xmax, ymin, ymax)``.

    Radii are drawn log-uniformly so scenes mix point-like returns with
    extended structures.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    xs = rng.uniform(extent[0], extent[1], count)
    ys = rng.uniform(extent[2], extent[3], count)
    amps = rng.uniform(rcs[0], rcs[1], count)
    rads = np.exp(rng.uniform(math.log(radius[0]), math.log(radius[1]), count))
    return SceneSpec(seed, tuple(Scatterer(float(a), float(b), float(c), float(d))
                                 for a, b, c, d in zip(xs, ys, amps, rads)), noise)


def _pose_words(pose) -> list:
    words = []
    for v in pose:
        (bits,) = struct.unpack("<Q", struct.pack("<d", float(v)))
        words += [bits & 0xFFFFFFFF, bits >> 32]
    return words


def frame_rng(seed: int, pose, noise_seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *_pose_words(pose), int(noise_seed)]))


def render_polar(scene: SceneSpec, pose=(0.0, 0.0, 0.0), geometry: ScanGeometry = ScanGeometry(),
                 timestamp: int = 0, noise_seed: int = 0) -> PolarScan:
    """Render the sweep seen from ``pose = (x, y, yaw)``."""
    n_az, n_bins, res = geometry.azimuths, geometry.range_bins, geometry.range_resolution
    px, py, yaw = (float(v) for v in pose)
    phi = 2.0 * np.pi * np.arange(n_az) / n_az
    rho_b = np.arange(n_bins) * res
    out = np.zeros((n_az, n_bins))
    cy, sy = math.cos(yaw), math.sin(yaw)
    clipped = 0
    for s in scene.scatterers:
        dx, dy = s.x - px, s.y - py
        xs, ys = cy * dx + sy * dy, -sy * dx + cy * dy
        rho = math.hypot(xs, ys)
        reach = 4.0 * s.radius
        if rho - reach > geometry.max_range:
            clipped += 1
            continue
        beta = math.atan2(ys, xs)
        b0 = max(0, int(math.floor((rho - reach) / res)))
        b1 = min(n_bins - 1, int(math.ceil((rho + reach) / res)))
        if b0 > b1:
            continue
        delta = np.mod(phi - beta + np.pi, 2.0 * np.pi) - np.pi
        if rho > reach:
            half = math.asin(reach / rho) + 2.0 * np.pi / n_az
            rows = np.nonzero(np.abs(delta) <= half)[0]
        else:
            rows = np.arange(n_az)
        rb = rho_b[b0:b1 + 1]
        dist2 = rb[None, :] ** 2 + rho * rho - 2.0 * rho * rb[None, :] * np.cos(delta[rows])[:, None]
        out[rows, b0:b1 + 1] += s.rcs * np.exp(-np.maximum(dist2, 0.0) / (2.0 * s.radius ** 2))
    if clipped:
        log.debug("render_polar: %d scatterers beyond max range", clipped)

    noise = scene.noise
    if noise.clutter_floor:
        out += noise.clutter_floor
    if noise.ring_amplitude and noise.ring_bins:
        bins = [b for b in noise.ring_bins if b < n_bins]
        out[:, bins] += noise.ring_amplitude
    if noise.speckle_sigma or noise.saturation_prob:
        rng = frame_rng(scene.seed, (px, py, yaw), noise_seed)
        if noise.speckle_sigma:
            out *= np.maximum(0.0, 1.0 + rng.normal(0.0, noise.speckle_sigma, out.shape))
        if noise.saturation_prob:
            out[rng.random(n_az) < noise.saturation_prob] = 1.0
    np.clip(out, 0.0, 1.0, out=out)
    return PolarScan(out, res, timestamp)


def square_loop(side: float = 100.0, n: int = 40, origin=(0.0, 0.0), overlap: int = 1) -> np.ndarray:
    """Waypoints (x, y, yaw) driving counter-clockwise around a square.

    ``overlap`` extra waypoints continue past the start so the route revisits it.
    """
    per = 4.0 * side
    s = np.arange(n + overlap) * (per / n)
    s = np.mod(s, per)
    leg = np.minimum((s // side).astype(int), 3)
    t = s - leg * side
    corners = np.array([[0, 0], [side, 0], [side, side], [0, side]], dtype=float)
    heads = np.array([0.0, 0.5 * np.pi, np.pi, -0.5 * np.pi])
    dirs = np.stack([np.cos(heads), np.sin(heads)], axis=1)
    xy = corners[leg] + t[:, None] * dirs[leg] + np.asarray(origin, dtype=float)
    return np.column_stack([xy, heads[leg]])


def figure_eight(n: int = 100, radius: float = 80.0, laps: float = 1.0) -> np.ndarray:
    """Lemniscate of Gerono traversed ``laps`` times, heading along the tangent."""
    t = 2.0 * np.pi * laps * np.arange(n) / n
    x = radius * np.sin(t)
    y = radius * np.sin(t) * np.cos(t)
    dx = radius * np.cos(t)
    dy = radius * np.cos(2.0 * t)
    return np.column_stack([x, y, np.arctan2(dy, dx)])


@dataclass
class TrajectoryDataset:
    scans: list
    poses: list
    loop_pairs: list
    scene: SceneSpec
    geometry: ScanGeometry


def make_trajectory_dataset(scene: SceneSpec, waypoints, geometry: ScanGeometry = ScanGeometry(),
                            noise: Optional[NoiseSpec] = None, out_dir=None, boundary_m: float = 20.0,
                            exclusion_window: int = 90, start_ns: int = 1_000_000_000) -> TrajectoryDataset:
    """Render one sweep per waypoint and record the revisit pairs.

    With ``out_dir`` the dataset is written in the ingest formats::

        out_dir/scans/000000.rps ...   raw sweeps
        out_dir/poses.csv              timestamp,x,y,yaw
        out_dir/loops.csv              query,candidate (revisits within boundary_m)
        out_dir/scene.json             the scene, geometry and boundary used
    """
    from .evaluation import build_ground_truth

    if noise is not None:
        scene = scene.with_noise(noise)
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(wp)):
        raise ParameterError("waypoints must be finite")
    scans, poses = [], []
    for i, (x, y, yaw) in enumerate(wp):
        stamp = start_ns + i * FRAME_PERIOD_NS
        scan = render_polar(scene, (x, y, yaw), geometry, stamp)
        # float32 precision so the in-memory sweep equals its on-disk copy
        scan.intensities = scan.intensities.astype(np.float32).astype(np.float64)
        scans.append(scan)
        poses.append(PoseRecord(stamp, float(x), float(y), float(np.pi - np.mod(np.pi - yaw, 2 * np.pi))))
    pairs = []
    if poses:
        gt = build_ground_truth(poses, boundary_m, "intra", exclusion_window)
        pairs = sorted(gt.pairs)
    ds = TrajectoryDataset(scans, poses, pairs, scene, geometry)
    if out_dir is not None:
        write_dataset(ds, out_dir, boundary_m, exclusion_window)
    return ds


def write_dataset(ds: TrajectoryDataset, out_dir, boundary_m: float, exclusion_window: int) -> None:
    out = Path(out_dir)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    for i, scan in enumerate(ds.scans):
        write_scan(scan, out / "scans" / f"{i:06d}.rps")
    write_poses(ds.poses, out / "poses.csv")
    with open(out / "loops.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("query,candidate\n")
        for q, c in ds.loop_pairs:
            fh.write(f"{q},{c}\n")
    meta = {
        "scene": ds.scene.to_dict(),
        "geometry": asdict(ds.geometry),
        "boundary_m": boundary_m,
        "exclusion_window": exclusion_window,
    }
    (out / "scene.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
