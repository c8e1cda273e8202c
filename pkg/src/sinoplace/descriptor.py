"""Frequency-domain place descriptors and their on-disk store.

A descriptor is the DFT along the offset axis of every sinogram column. The
complex values are kept: the matcher needs phase to locate correlation peaks.

Store layout (all integers little-endian)::

    magic    4s   b"RPDB"
    version  u16  1
    tag      u16  0 = fine, 1 = coarse
    n_theta  u32
    n_l      u32
    count    u64
    records  count x n_theta x n_l complex64 (float32 re, float32 im)

Records have a fixed stride, so frame i lives at ``24 + i * stride``.
"""

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import CorruptionError, DimensionError, FormatError, ParameterError
from .radon import Sinogram

STORE_MAGIC = b"RPDB"
STORE_VERSION = 1
_HEADER = struct.Struct("<4sHHIIQ")
RESOLUTION_TAGS = ("fine", "coarse")
STORE_DTYPE = np.dtype("<c8")


@dataclass(eq=False)
class RadarDescriptor:
    rows: np.ndarray
    resolution_tag: str = "fine"
    source_id: int = 0

    @property
    def n_theta(self) -> int:
        return self.rows.shape[0]

    @property
    def n_l(self) -> int:
        return self.rows.shape[1]


def make_descriptor(sino: Sinogram, source_id: int = 0,
                    resolution_tag: Optional[str] = None) -> RadarDescriptor:
    if resolution_tag is None:
        resolution_tag = "fine" if sino.spacing == 1.0 else "coarse"
    rows = np.fft.fft(np.asarray(sino.values, dtype=np.float64).T, axis=1)
    return RadarDescriptor(rows, resolution_tag, int(source_id))


def sinogram_from_descriptor(desc: RadarDescriptor) -> Sinogram:
    return Sinogram(np.fft.ifft(desc.rows, axis=1).real.T.copy())


def downsample_sinogram(sino: Sinogram, factor: int) -> Sinogram:
    """Block-average the offset axis by ``factor``.

    A trailing partial block becomes one extra bin holding the mean of the
    leftover rows.
    """
    if int(factor) != factor or factor < 2:
        raise ParameterError(f"downsample factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    v = np.asarray(sino.values, dtype=np.float64)
    n_full, rem = divmod(v.shape[0], factor)
    parts = []
    if n_full:
        parts.append(v[:n_full * factor].reshape(n_full, factor, -1).mean(axis=1))
    if rem:
        parts.append(v[n_full * factor:].mean(axis=0, keepdims=True))
    return Sinogram(np.concatenate(parts, axis=0), sino.spacing * factor)


def coarse_descriptor(sino: Sinogram, factor: int, source_id: int = 0) -> RadarDescriptor:
    if factor == 1:
        return make_descriptor(sino, source_id, "coarse")
    return make_descriptor(downsample_sinogram(sino, factor), source_id, "coarse")


class DescriptorStore:
    """A stack of same-shaped descriptors indexed by frame number.

    ``frames`` has shape (count, n_theta, n_l) and dtype complex64; it may be
    a read-only memory map when opened from disk.
    """

    def __init__(self, frames: np.ndarray, resolution_tag: str = "fine"):
        if resolution_tag not in RESOLUTION_TAGS:
            raise ParameterError(f"unknown resolution tag {resolution_tag!r}")
        if frames.ndim != 3:
            raise DimensionError(f"frames must be 3-D, got shape {frames.shape}")
        self.frames = frames
        self.resolution_tag = resolution_tag

    @classmethod
    def empty(cls, n_theta: int, n_l: int, resolution_tag: str = "fine") -> "DescriptorStore":
        return cls(np.zeros((0, n_theta, n_l), dtype=STORE_DTYPE), resolution_tag)

    @classmethod
    def from_descriptors(cls, descs: Iterable[RadarDescriptor],
                         resolution_tag: Optional[str] = None) -> "DescriptorStore":
        descs = list(descs)
        if not descs:
            raise ParameterError("from_descriptors needs at least one descriptor; use empty()")
        shape = descs[0].rows.shape
        for d in descs:
            if d.rows.shape != shape:
                raise DimensionError(f"descriptor shape {d.rows.shape} differs from {shape}")
        tag = resolution_tag or descs[0].resolution_tag
        frames = np.stack([d.rows for d in descs]).astype(STORE_DTYPE)
        return cls(frames, tag)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def n_theta(self) -> int:
        return self.frames.shape[1]

    @property
    def n_l(self) -> int:
        return self.frames.shape[2]

    def descriptor(self, i: int) -> RadarDescriptor:
        if not 0 <= i < len(self):
            raise IndexError(f"frame {i} outside [0, {len(self)})")
        return RadarDescriptor(np.asarray(self.frames[i]), self.resolution_tag, i)


class StoreWriter:
    """Stream descriptors into a store file.

    Data goes to a temporary file beside the target that is fsynced and
    renamed into place on a clean exit, so readers never see a partial store.
    """

    def __init__(self, path, n_theta: int, n_l: int, resolution_tag: str = "fine"):
        if resolution_tag not in RESOLUTION_TAGS:
            raise ParameterError(f"unknown resolution tag {resolution_tag!r}")
        self.path = Path(path)
        self.n_theta, self.n_l, self.resolution_tag = n_theta, n_l, resolution_tag
        self.count = 0
        self._fh = None
        self._tmp = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, self._tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name + ".")
        self._fh = os.fdopen(fd, "wb")
        self._fh.write(self._header())
        return self

    def _header(self) -> bytes:
        return _HEADER.pack(STORE_MAGIC, STORE_VERSION, RESOLUTION_TAGS.index(self.resolution_tag),
                            self.n_theta, self.n_l, self.count)

    def append(self, rows: np.ndarray) -> None:
        rows = np.asarray(rows)
        if rows.shape != (self.n_theta, self.n_l):
            raise DimensionError(f"record shape {rows.shape} != {(self.n_theta, self.n_l)}")
        self._fh.write(np.ascontiguousarray(rows, dtype=STORE_DTYPE).tobytes())
        self.count += 1

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self._fh.seek(0)
                self._fh.write(self._header())
                self._fh.flush()
                os.fsync(self._fh.fileno())
            self._fh.close()
            if exc_type is None:
                os.replace(self._tmp, self.path)
        finally:
            if os.path.exists(self._tmp):
                os.unlink(self._tmp)
        return False


def write_store(db: DescriptorStore, path) -> None:
    with StoreWriter(path, db.n_theta, db.n_l, db.resolution_tag) as w:
        for i in range(len(db)):
            w.append(db.frames[i])


def read_store(path, mmap: bool = False) -> DescriptorStore:
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise FormatError(f"{path}: shorter than the store header")
    magic, version, tag, n_theta, n_l, count = _HEADER.unpack(head)
    if magic != STORE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != STORE_VERSION:
        raise FormatError(f"{path}: unsupported store version {version}")
    if tag >= len(RESOLUTION_TAGS):
        raise FormatError(f"{path}: unknown resolution tag {tag}")

    stride = n_theta * n_l * STORE_DTYPE.itemsize
    expected = _HEADER.size + count * stride
    if size < expected:
        frame = (size - _HEADER.size) // stride if stride else 0
        raise CorruptionError(f"{path}: truncated inside frame {frame} of {count}")
    if size > expected:
        raise CorruptionError(f"{path}: {size - expected} unexpected trailing bytes")

    shape = (count, n_theta, n_l)
    if mmap and count:
        frames = np.memmap(path, dtype=STORE_DTYPE, mode="r", offset=_HEADER.size, shape=shape)
    else:
        frames = np.fromfile(path, dtype=STORE_DTYPE, count=count * n_theta * n_l,
                             offset=_HEADER.size).reshape(shape)
    return DescriptorStore(frames, RESOLUTION_TAGS[tag])
