"""
Loading polar radar sweeps and ground-truth poses.

Two scan layouts are understood:

* ``image8`` -- a row-major 8-bit grayscale image (PNG or any format Pillow
  reads), one row per azimuth and one column per range bin. Some public
  datasets prefix every row with metadata bytes; ``column_offset`` skips them.
* ``raw`` -- the package's own binary format (magic ``RPS1``), which carries
  its geometry and timestamp and round-trips bit-exactly.

Intensities are always normalized to [0, 1] on load so downstream thresholds
do not depend on the source bit depth.
"""

import csv
import logging
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionError, FormatError, OrderError, ParameterError, RangeError

log = logging.getLogger(__name__)

SCAN_MAGIC = b"RPS1"
_SCAN_HEADER = struct.Struct("<4sIIdq")
POSE_HEADER = ["timestamp", "x", "y", "yaw"]


@dataclass(eq=False)
class PolarScan:
    """One radar sweep: ``intensities[k, b]`` is azimuth row k, range bin b.

    Row k looks along bearing ``2*pi*k/azimuths`` measured counter-clockwise
    from the sensor's forward (+x) axis. Range bin b sits at ``b * range_resolution``
    metres.
    """

    intensities: np.ndarray
    range_resolution: float
    timestamp: int = 0

    def __post_init__(self):
        arr = np.asarray(self.intensities)
        if arr.ndim != 2:
            raise DimensionError(f"intensities must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 4 or arr.shape[1] < 4:
            raise DimensionError(f"need at least 4x4 samples, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ParameterError("intensities must be finite and non-negative")
        if not self.range_resolution > 0:
            raise ParameterError("range_resolution must be positive")
        self.intensities = arr
        self.timestamp = int(self.timestamp)

    @property
    def azimuths(self) -> int:
        return self.intensities.shape[0]

    @property
    def range_bins(self) -> int:
        return self.intensities.shape[1]

    @property
    def max_range(self) -> float:
        return self.range_bins * self.range_resolution

    def azimuth_angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.azimuths) / self.azimuths

    def __eq__(self, other):
        if not isinstance(other, PolarScan):
            return NotImplemented
        return (
            self.range_resolution == other.range_resolution
            and self.timestamp == other.timestamp
            and self.intensities.shape == other.intensities.shape
            and np.array_equal(self.intensities, other.intensities)
        )


@dataclass(frozen=True)
class ScanLayout:
    """How to interpret a scan file.

    Attributes:
        kind: ``"image8"`` or ``"raw"``.
        column_offset: leading bytes (pixels) to drop from every image row.
        range_resolution: metres per bin; only used for ``image8``, the raw
            format stores its own.
        azimuths, range_bins: optional expected dimensions. A file that
            disagrees raises :class:`DimensionError`.
    """

    kind: str = "raw"
    column_offset: int = 0
    range_resolution: float = 0.0438
    azimuths: Optional[int] = None
    range_bins: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("image8", "raw"):
            raise ParameterError(f"unknown scan layout {self.kind!r}")
        if self.column_offset < 0:
            raise ParameterError("column_offset must be >= 0")


@dataclass(frozen=True)
class PoseRecord:
    timestamp: int
    x: float
    y: float
    yaw: float


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def _timestamp_from_name(path: Path) -> int:
    try:
        return int(path.stem)
    except ValueError:
        return 0


def load_scan(path, layout: ScanLayout = ScanLayout()) -> PolarScan:
    path = Path(path)
    if layout.kind == "raw":
        scan = _read_raw(path)
    else:
        scan = _read_image8(path, layout)
    expected = (layout.azimuths, layout.range_bins)
    for name, want, got in zip(("azimuths", "range_bins"), expected, scan.intensities.shape):
        if want is not None and want != got:
            raise DimensionError(f"{path}: layout declares {name}={want}, file has {got}")
    return scan


def _read_image8(path: Path, layout: ScanLayout) -> PolarScan:
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise FormatError(f"{path}: expected 8-bit grayscale image, got mode {im.mode}")
            codes = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a readable image") from exc
    if layout.column_offset >= codes.shape[1]:
        raise DimensionError(f"{path}: column_offset {layout.column_offset} leaves no range bins")
    codes = codes[:, layout.column_offset:]
    return PolarScan(codes.astype(np.float64) / 255.0, layout.range_resolution,
                     _timestamp_from_name(path))


def _read_raw(path: Path) -> PolarScan:
    blob = path.read_bytes()
    if len(blob) < _SCAN_HEADER.size:
        raise FormatError(f"{path}: file shorter than the scan header")
    magic, n_az, n_bins, res, stamp = _SCAN_HEADER.unpack_from(blob)
    if magic != SCAN_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    body = len(blob) - _SCAN_HEADER.size
    if body != 4 * n_az * n_bins:
        raise DimensionError(
            f"{path}: header declares {n_az}x{n_bins} samples but body holds {body} bytes")
    values = np.frombuffer(blob, dtype="<f4", offset=_SCAN_HEADER.size).reshape(n_az, n_bins)
    return PolarScan(values.copy(), res, stamp)


def write_scan(scan: PolarScan, path) -> None:
    """Write ``scan`` in the raw ``RPS1`` format.

    Intensities are stored as float32; a scan whose values are already
    float32-representable survives ``load_scan(write_scan(s))`` bit-exactly.
    """
    header = _SCAN_HEADER.pack(SCAN_MAGIC, scan.azimuths, scan.range_bins,
                               float(scan.range_resolution), int(scan.timestamp))
    body = np.ascontiguousarray(scan.intensities, dtype="<f4").tobytes()
    Path(path).write_bytes(header + body)


def load_poses(path) -> list:
    """Read a ``timestamp,x,y,yaw`` CSV. Rows must already be time-ordered."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != POSE_HEADER:
            raise FormatError(f"{path}: header must be {','.join(POSE_HEADER)}, got {header}")
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                if len(row) != 4:
                    raise ValueError(f"expected 4 fields, got {len(row)}")
                stamp = int(row[0])
                x, y, yaw = (float(v) for v in row[1:])
                if not all(math.isfinite(v) for v in (x, y, yaw)):
                    raise ValueError("non-finite value")
            except ValueError as exc:
                raise FormatError(f"{path}: row {row_no}: {exc}") from exc
            if records and stamp <= records[-1].timestamp:
                raise OrderError(
                    f"{path}: row {row_no}: timestamp {stamp} does not follow {records[-1].timestamp}")
            records.append(PoseRecord(stamp, x, y, float(wrap_angle(yaw))))
    return records


def write_poses(poses: Sequence[PoseRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POSE_HEADER)
        for p in poses:
            writer.writerow([int(p.timestamp), repr(float(p.x)), repr(float(p.y)), repr(float(p.yaw))])


def associate(timestamps, poses: Sequence[PoseRecord]) -> list:
    """Interpolate a pose for every scan timestamp.

    Position is linear in time; yaw follows the shorter arc between the two
    bracketing poses.
    """
    stamps = np.asarray(list(timestamps), dtype=np.int64)
    if stamps.size == 0:
        return []
    if not poses:
        raise RangeError("no poses to associate against")
    knots = np.array([p.timestamp for p in poses], dtype=np.int64)
    xs = np.array([p.x for p in poses])
    ys = np.array([p.y for p in poses])
    yaws = np.array([p.yaw for p in poses])
    bad = (stamps < knots[0]) | (stamps > knots[-1])
    if np.any(bad):
        first = int(stamps[np.argmax(bad)])
        raise RangeError(f"scan timestamp {first} outside pose range [{knots[0]}, {knots[-1]}]")

    hi = np.clip(np.searchsorted(knots, stamps, side="left"), 0, len(knots) - 1)
    exact = knots[hi] == stamps
    lo = np.where(exact, hi, np.maximum(hi - 1, 0))
    span = (knots[hi] - knots[lo]).astype(np.float64)
    w = np.where(span > 0, (stamps - knots[lo]) / np.where(span > 0, span, 1.0), 0.0)

    x = xs[lo] + w * (xs[hi] - xs[lo])
    y = ys[lo] + w * (ys[hi] - ys[lo])
    yaw = wrap_angle(yaws[lo] + w * wrap_angle(yaws[hi] - yaws[lo]))
    # knot timestamps return the stored pose untouched
    x, y, yaw = (np.where(exact, v[hi], u) for v, u in ((xs, x), (ys, y), (yaws, yaw)))
    return [PoseRecord(int(t), float(a), float(b), float(c))
            for t, a, b, c in zip(stamps, x, y, yaw)]


def list_scan_files(directory, layout: ScanLayout) -> list:
    """Scan files in ``directory`` sorted by name (timestamp-named files sort in time order)."""
    suffixes = {".rps"} if layout.kind == "raw" else {".png", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg", ".pgm"}
    names = sorted(n for n in os.listdir(directory) if Path(n).suffix.lower() in suffixes)
    return [Path(directory) / n for n in names]
