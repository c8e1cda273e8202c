"""Similarity scoring and place retrieval.

The correlation between a query and a candidate is the inverse DFT of
``Q * conj(C)`` per angle row, summed over all rows. Lag ``s`` of the result
is ``sum_theta sum_l S_q(theta, l + s) * S_c(theta, l)``. The distance of a
candidate is how far its correlation peak falls from the query's own
autocorrelation peak::

    d = |max(C_auto) - max(C_qc)|

Retrieval runs this over a downsampled store first, then rescores the best
coarse hits and their temporal neighbours at full resolution.
"""

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np
from numba import njit

from .descriptor import (STORE_DTYPE, DescriptorStore, RadarDescriptor, coarse_descriptor,
                         sinogram_from_descriptor)
from .errors import DimensionError, NoCandidateError, ParameterError

log = logging.getLogger(__name__)

IMAG_RESIDUE_TOL = 1e-6


@dataclass
class CorrelationArray:
    values: np.ndarray

    @property
    def n_l(self) -> int:
        return self.values.shape[0]

    def peak(self) -> Tuple[int, float]:
        s = int(np.argmax(self.values))
        return s, float(self.values[s])


@dataclass(frozen=True)
class SimilarityDistance:
    d: float
    c_auto: float
    c_qi: float


@dataclass
class MatchResult:
    best_index: int
    best_distance: SimilarityDistance
    ranked: List[Tuple[int, float]]
    examined: int = 0

    def to_dict(self) -> dict:
        return {
            "best_index": self.best_index,
            "best_distance": asdict(self.best_distance),
            "ranked": [{"index": i, "d": d} for i, d in self.ranked],
            "examined": self.examined,
        }


@dataclass
class RetrievalConfig:
    """Knobs of the coarse-to-fine search.

    ``coarse_factor`` 1 skips the coarse pass and scores every admissible
    frame at full resolution. ``stride`` keeps every stride-th frame as a
    candidate keyframe. ``top_k`` is the length of the returned ranking.
    """

    coarse_factor: int = 4
    coarse_top_k: int = 10
    neighbor_window: int = 5
    exclusion_window: int = 90
    stride: int = 1
    top_k: int = 10
    normalized: bool = False

    def __post_init__(self):
        for name in ("coarse_top_k", "neighbor_window", "exclusion_window", "top_k"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.coarse_factor < 1:
            raise ParameterError("coarse_factor must be >= 1")
        if self.stride < 1:
            raise ParameterError("stride must be >= 1")


def _check_pair(q: RadarDescriptor, c: RadarDescriptor) -> None:
    if q.rows.shape != c.rows.shape:
        raise DimensionError(f"descriptor shapes differ: {q.rows.shape} vs {c.rows.shape}")
    if q.resolution_tag != c.resolution_tag:
        raise DimensionError(f"resolution tags differ: {q.resolution_tag} vs {c.resolution_tag}")


def cross_correlate(q: RadarDescriptor, c: RadarDescriptor) -> CorrelationArray:
    """Per-row inverse DFT of the cross-power spectrum, summed over angles."""
    _check_pair(q, c)
    qr = np.asarray(q.rows, dtype=np.complex128)
    cr = np.asarray(c.rows, dtype=np.complex128)
    full = np.fft.ifft(qr * np.conj(cr), axis=1).sum(axis=0)
    energy = np.sqrt(np.sum(np.abs(qr) ** 2) * np.sum(np.abs(cr) ** 2)) / q.n_l
    residue = float(np.max(np.abs(full.imag))) if full.size else 0.0
    if residue > IMAG_RESIDUE_TOL * max(energy, np.finfo(float).tiny):
        warnings.warn(f"correlation has imaginary residue {residue:.3g}; inputs may not be real",
                      RuntimeWarning, stacklevel=2)
    return CorrelationArray(full.real)


def _quantize(rows: np.ndarray) -> np.ndarray:
    """Round to storage precision so a fresh query equals its stored copy."""
    return np.asarray(rows).astype(STORE_DTYPE).astype(np.complex128)


@njit(cache=True, nogil=True)
def _spectrum_sums(qre, qim, cre, cim, idx):
    """Sum over angles of ``q * conj(c)`` for frames ``idx`` of planar ``(cre, cim)``.

    Products and sums are float64 and run in a fixed order for every frame,
    so a frame's result does not depend on which other frames are in the
    batch.
    """
    n = idx.shape[0]
    n_theta = cre.shape[1]
    nf = cre.shape[2]
    acc_re = np.zeros((n, nf))
    acc_im = np.zeros((n, nf))
    for k in range(n):
        ar = acc_re[k]
        ai = acc_im[k]
        for t in range(n_theta):
            rr = cre[idx[k], t]
            ri = cim[idx[k], t]
            qr = qre[t]
            qi = qim[t]
            for f in range(nf):
                cr = np.float64(rr[f])
                ci = np.float64(ri[f])
                ar[f] += cr * qr[f] + ci * qi[f]
                ai[f] += cr * qi[f] - ci * qr[f]
    return acc_re, acc_im


def _planar(frames: np.ndarray, nf: int):
    """Contiguous float32 real and imaginary planes of the first ``nf`` bins."""
    half = np.asarray(frames)[..., :nf].astype(STORE_DTYPE, copy=False)
    return np.ascontiguousarray(half.real), np.ascontiguousarray(half.imag)


def _planar_views(frames: np.ndarray, nf: int):
    """Strided float32 views of the real and imaginary parts of the first ``nf`` bins, without copying."""
    f = np.asarray(frames)
    if f.dtype != STORE_DTYPE or f.strides[-1] != f.itemsize:
        return _planar(f, nf)
    fl = f.view(np.float32)
    return fl[..., 0:2 * nf:2], fl[..., 1:2 * nf:2]


def _planar_peaks(q_rows: np.ndarray, cre: np.ndarray, cim: np.ndarray, idx: np.ndarray,
                  n_l: int) -> np.ndarray:
    nf = n_l // 2 + 1
    qre = np.ascontiguousarray(q_rows.real[:, :nf], dtype=np.float64)
    qim = np.ascontiguousarray(q_rows.imag[:, :nf], dtype=np.float64)
    acc_re, acc_im = _spectrum_sums(qre, qim, cre, cim, np.asarray(idx, dtype=np.int64))
    return np.fft.irfft(acc_re + 1j * acc_im, n=n_l, axis=1).max(axis=1)


def correlation_peaks(q_rows: np.ndarray, cand_rows: np.ndarray, n_l: int) -> np.ndarray:
    """Peak of the summed correlation of one query against a batch of candidates.

    ``q_rows`` is (n_theta, F) and ``cand_rows`` is (N, n_theta, F'), both
    holding at least the first ``F = n_l // 2 + 1`` DFT bins. Candidates are
    read at storage precision, so a candidate equal to the stored copy of the
    query reproduces the autocorrelation peak bit for bit.
    """
    cre, cim = _planar(cand_rows, n_l // 2 + 1)
    return _planar_peaks(q_rows, cre, cim, np.arange(cre.shape[0]), n_l)


def _distances(q_rows: np.ndarray, cre: np.ndarray, cim: np.ndarray, idx: np.ndarray, n_l: int,
               normalized: bool):
    """Return (d, c_auto, c_qi) of a storage-precision query against planar frames ``idx``."""
    c_auto = correlation_peaks(q_rows, q_rows[None], n_l)[0]
    c_qi = _planar_peaks(q_rows, cre, cim, idx, n_l)
    if normalized:
        e_c = np.array([_planar_peaks(cre[i] + 1j * cim[i], cre, cim, np.array([i]), n_l)[0]
                        for i in idx])
        denom = np.sqrt(np.maximum(c_auto * e_c, np.finfo(float).tiny))
        c_qi = c_qi / denom
        c_auto = 1.0
    return np.abs(c_auto - c_qi), c_auto, c_qi


def similarity_distance(q: RadarDescriptor, c: RadarDescriptor,
                        normalized: bool = False) -> SimilarityDistance:
    _check_pair(q, c)
    cre, cim = _planar(np.asarray(c.rows)[None], q.n_l // 2 + 1)
    d, c_auto, c_qi = _distances(_quantize(q.rows), cre, cim, np.array([0]), q.n_l, normalized)
    return SimilarityDistance(float(d[0]), float(c_auto), float(c_qi[0]))


class RetrievalIndex:
    """Stores prepared for repeated queries.

    The coarse store is copied once into contiguous real and imaginary
    planes, which the scan over every admissible frame reads twice as fast as
    interleaved complex values. Fine frames are gathered per query from the
    store, which may be a memory map.
    """

    def __init__(self, db_fine: DescriptorStore, db_coarse: Optional[DescriptorStore] = None,
                 cfg: Optional[RetrievalConfig] = None):
        self.cfg = cfg or RetrievalConfig()
        self.fine = db_fine
        self.coarse = db_coarse
        self.hierarchical = self.cfg.coarse_factor > 1 and len(db_fine) > 0
        if self.hierarchical:
            if db_coarse is None:
                raise ParameterError("coarse_factor > 1 needs a coarse store")
            if len(db_coarse) != len(db_fine):
                raise DimensionError(
                    f"fine and coarse stores disagree on frame count: {len(db_fine)} vs {len(db_coarse)}")
        self._coarse_planes = None

    def _coarse(self):
        if self._coarse_planes is None:
            self._coarse_planes = _planar(self.coarse.frames, self.coarse.n_l // 2 + 1)
        return self._coarse_planes

    def admissible(self, query_index: Optional[int] = None) -> np.ndarray:
        idx = np.arange(0, len(self.fine), self.cfg.stride)
        if query_index is not None:
            idx = idx[np.abs(idx - query_index) > self.cfg.exclusion_window]
        return idx

    def score(self, q_fine: RadarDescriptor, frames: np.ndarray):
        """Full-resolution distances for the given frame indices."""
        n_l = self.fine.n_l
        cre, cim = _planar_views(self.fine.frames, n_l // 2 + 1)
        return _distances(_quantize(q_fine.rows), cre, cim, frames, n_l, self.cfg.normalized)

    def coarse_candidates(self, q_coarse: RadarDescriptor, admissible: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        cre, cim = self._coarse()
        d, _, _ = _distances(_quantize(q_coarse.rows), cre, cim, admissible, self.coarse.n_l, False)
        order = np.argsort(d, kind="stable")[: cfg.coarse_top_k]
        hits = admissible[order]
        w = cfg.neighbor_window
        expanded = (hits[:, None] + np.arange(-w, w + 1)[None, :]).ravel()
        return np.intersect1d(expanded, admissible)

    def query(self, q_fine: RadarDescriptor, q_coarse: Optional[RadarDescriptor] = None,
              query_index: Optional[int] = None) -> MatchResult:
        if q_fine.rows.shape != (self.fine.n_theta, self.fine.n_l):
            raise DimensionError(
                f"query shape {q_fine.rows.shape} != store shape {(self.fine.n_theta, self.fine.n_l)}")
        admissible = self.admissible(query_index)
        if admissible.size == 0:
            raise NoCandidateError("no admissible candidate frames")
        if self.hierarchical:
            if q_coarse is None:
                q_coarse = coarse_descriptor(sinogram_from_descriptor(q_fine), self.cfg.coarse_factor)
            if q_coarse.rows.shape != (self.coarse.n_theta, self.coarse.n_l):
                raise DimensionError(
                    f"coarse query shape {q_coarse.rows.shape} != store shape {(self.coarse.n_theta, self.coarse.n_l)}")
            frames = self.coarse_candidates(q_coarse, admissible)
        else:
            frames = admissible

        d, c_auto, c_qi = self.score(q_fine, frames)
        order = np.lexsort((frames, d))
        best = order[0]
        ranked = [(int(frames[k]), float(d[k])) for k in order[: max(self.cfg.top_k, 1)]]
        return MatchResult(
            best_index=int(frames[best]),
            best_distance=SimilarityDistance(float(d[best]), float(c_auto), float(c_qi[best])),
            ranked=ranked,
            examined=int(frames.size),
        )


def retrieve(q_fine: RadarDescriptor, q_coarse: Optional[RadarDescriptor],
             db_fine: DescriptorStore, db_coarse: Optional[DescriptorStore],
             cfg: Optional[RetrievalConfig] = None, query_index: Optional[int] = None) -> MatchResult:
    """One-shot retrieval. Build a :class:`RetrievalIndex` instead when issuing many queries."""
    return RetrievalIndex(db_fine, db_coarse, cfg).query(q_fine, q_coarse, query_index)
