"""Scoring retrieval output against pose ground truth.

A query's prediction is *positive* at threshold t when its best distance is
at most t, and a positive is a true positive when (query, predicted) is a
ground-truth pair. Recall is measured against the queries that have at least
one ground-truth pair; Recall@1 uses the same denominator and ignores the
threshold.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .descriptor import make_descriptor
from .errors import ParameterError
from .ingest import PolarScan
from .matcher import similarity_distance
from .radon import DEFAULT_N_THETA, radon_transform
from .warp import GridSpec, backward_warp

DEFAULT_SWEEP = 200


@dataclass
class LoopGroundTruth:
    boundary_m: float
    pairs: set = field(default_factory=set)
    mode: str = "intra"
    exclusion_window: int = 0

    def covered_queries(self) -> set:
        return {q for q, _ in self.pairs}


def _xy(poses) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        return np.asarray(poses, dtype=float)[:, :2]
    return np.array([[p.x, p.y] for p in poses], dtype=float).reshape(-1, 2)


def build_ground_truth(poses, boundary_m: float = 20.0, mode: str = "intra",
                       exclusion_window: int = 90, db_poses=None) -> LoopGroundTruth:
    """Pairs of frames whose positions lie within ``boundary_m`` of each other.

    ``intra``: both frames come from ``poses`` and must be more than
    ``exclusion_window`` frames apart; both orders of a pair are listed.
    ``multi``: queries come from ``poses``, candidates from ``db_poses``,
    with no temporal exclusion.
    """
    if mode not in ("intra", "multi"):
        raise ParameterError(f"mode must be 'intra' or 'multi', got {mode!r}")
    q = _xy(poses)
    if len(q) == 0:
        raise ParameterError("no poses given")
    if boundary_m < 0:
        raise ParameterError("boundary_m must be >= 0")
    gt = LoopGroundTruth(float(boundary_m), set(), mode, int(exclusion_window))
    if mode == "intra":
        tree = cKDTree(q)
        for i, j in tree.query_pairs(boundary_m, output_type="ndarray"):
            if abs(int(i) - int(j)) > exclusion_window:
                gt.pairs.add((int(i), int(j)))
                gt.pairs.add((int(j), int(i)))
    else:
        if db_poses is None:
            raise ParameterError("multi mode needs db_poses")
        db = _xy(db_poses)
        if len(db) == 0:
            raise ParameterError("no database poses given")
        hits = cKDTree(q).query_ball_tree(cKDTree(db), boundary_m)
        for i, js in enumerate(hits):
            gt.pairs.update((i, int(j)) for j in js)
    return gt


@dataclass(frozen=True)
class Prediction:
    query: int
    predicted: int
    d: float


@dataclass
class QueryRecord:
    query: int
    predicted: int
    d: float
    label: str


@dataclass
class EvalReport:
    thresholds: List[float]
    precision: List[Optional[float]]
    recall: List[Optional[float]]
    f1: List[Optional[float]]
    pr_points: List[tuple]
    auc: Optional[float]
    f1_curve: List[tuple]
    max_f1: Optional[float]
    best_threshold: Optional[float]
    recall_at_1: Optional[float]
    tp_detection_rate: Optional[float]
    tp_count: int
    fp_count: int
    fn_count: int
    gt_queries: int
    recall_defined: bool
    records: List[QueryRecord]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pr_points"] = [list(p) for p in self.pr_points]
        d["f1_curve"] = [list(p) for p in self.f1_curve]
        return d


def resolve_thresholds(thresholds, distances: np.ndarray) -> np.ndarray:
    """``None`` or an int gives that many evenly spaced values from 0 to the largest distance."""
    if thresholds is None or isinstance(thresholds, (int, np.integer)):
        count = DEFAULT_SWEEP if thresholds is None else int(thresholds)
        if count < 1:
            raise ParameterError("threshold sweep must contain at least one value")
        top = float(distances.max()) if distances.size else 0.0
        return np.linspace(0.0, top, count)
    t = np.asarray(list(thresholds), dtype=float)
    if t.size == 0:
        raise ParameterError("threshold sweep is empty")
    return np.sort(t)


def pr_auc(points) -> Optional[float]:
    """Trapezoidal area under (recall, precision) points.

    Points are ordered by recall (higher precision first on ties) and the
    curve is extended to recall 0 at the precision of the first point.
    """
    pts = sorted(points, key=lambda p: (p[1], -p[0]))
    if not pts:
        return None
    rec = np.array([0.0] + [p[1] for p in pts])
    prec = np.array([pts[0][0]] + [p[0] for p in pts])
    return float(np.sum(np.diff(rec) * (prec[1:] + prec[:-1]) / 2.0))


def evaluate(predictions: Sequence[Prediction], gt: LoopGroundTruth, thresholds=None) -> EvalReport:
    preds = sorted(predictions, key=lambda p: p.query)
    d = np.array([p.d for p in preds], dtype=float)
    ts = resolve_thresholds(thresholds, d)
    correct = np.array([(p.query, p.predicted) in gt.pairs for p in preds], dtype=bool)
    covered = gt.covered_queries()
    has_gt = np.array([p.query in covered for p in preds], dtype=bool)
    n_gt = int(has_gt.sum())

    precision, recall, f1 = [], [], []
    tps = []
    for t in ts:
        pos = d <= t
        tp = int(np.sum(pos & correct))
        fp = int(np.sum(pos & ~correct))
        tps.append((tp, fp))
        p = tp / (tp + fp) if tp + fp else None
        r = tp / n_gt if n_gt else None
        precision.append(p)
        recall.append(r)
        if p is None or r is None:
            f1.append(None)
        else:
            f1.append(0.0 if p + r == 0 else 2 * p * r / (p + r))

    pr_points = sorted(((p, r) for p, r in zip(precision, recall) if p is not None and r is not None),
                       key=lambda x: (x[1], -x[0]))
    f1_curve = [(f, r) for f, r in zip(f1, recall) if f is not None]

    best = None
    for k, f in enumerate(f1):
        if f is not None and (best is None or f > f1[best]):
            best = k
    k_label = best if best is not None else len(ts) - 1
    t_label = float(ts[k_label])

    records = []
    for p, ok, g in zip(preds, correct, has_gt):
        pos = p.d <= t_label
        if pos and ok:
            label = "TP"
        elif pos:
            label = "FP"
        elif g:
            label = "FN"
        else:
            label = "TN"
        records.append(QueryRecord(p.query, p.predicted, float(p.d), label))
    tp_count = sum(r.label == "TP" for r in records)
    fp_count = sum(r.label == "FP" for r in records)

    return EvalReport(
        thresholds=[float(t) for t in ts],
        precision=precision,
        recall=recall,
        f1=f1,
        pr_points=pr_points,
        auc=pr_auc(pr_points),
        f1_curve=f1_curve,
        max_f1=None if best is None else f1[best],
        best_threshold=None if best is None else float(ts[best]),
        recall_at_1=float(np.sum(correct & has_gt) / n_gt) if n_gt else None,
        tp_detection_rate=(tp_count / n_gt) if n_gt and best is not None else None,
        tp_count=tp_count,
        fp_count=fp_count,
        fn_count=n_gt - tp_count,
        gt_queries=n_gt,
        recall_defined=n_gt > 0,
        records=records,
    )


def write_report_json(report: EvalReport, path, config: Optional[dict] = None) -> None:
    payload = {"config": config or {}, "metrics": report.to_dict()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_pr_csv(report: EvalReport, path) -> None:
    def cell(v):
        return "" if v is None else repr(float(v))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall", "f1"])
        for row in zip(report.thresholds, report.precision, report.recall, report.f1):
            w.writerow([cell(v) for v in row])


def export_tp_trajectory(report: EvalReport, poses, path, svg_path=None) -> int:
    """Write ``x,y,label`` for every TP, FN and FP query; returns the row count.

    With ``svg_path`` the same points are drawn as a scatter plot over the
    full trajectory.
    """
    xy = _xy(poses) if len(poses) else np.zeros((0, 2))
    rows = [(float(xy[r.query, 0]), float(xy[r.query, 1]), r.label)
            for r in report.records if r.label in ("TP", "FN", "FP")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "label"])
        for x, y, label in rows:
            w.writerow([repr(x), repr(y), label])
    if svg_path is not None:
        from .plotting import plot_trajectory
        plot_trajectory(xy, rows, svg_path)
    return len(rows)


@dataclass
class SensitivityResult:
    threshold: float
    rows: List[tuple]  # (kind, value, d, normalized)

    def normalized(self, kind: Optional[str] = None) -> np.ndarray:
        return np.array([r[3] for r in self.rows if kind is None or r[0].startswith(kind)])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "value", "d", "normalized"])
            for kind, value, dist, norm in self.rows:
                w.writerow([kind, repr(float(value)), repr(float(dist)), repr(float(norm))])


def crop_grid(scan: PolarScan, max_shift_px: float, meters_per_pixel: float = 1.0) -> GridSpec:
    """Largest odd grid whose every rotated or shifted crop stays inside the sweep's range."""
    reach = scan.max_range / meters_per_pixel - max_shift_px
    side = int(math.floor(2.0 * reach / math.sqrt(2.0)))
    side -= 1 - side % 2
    if side < 3:
        raise ParameterError("translations too large for the sweep's range")
    return GridSpec(side, meters_per_pixel)


def sensitivity_sweep(scan: PolarScan, references: Sequence[PolarScan],
                      rotations: Sequence[float] = tuple(range(0, 360, 10)),
                      translations: Sequence[float] = tuple(range(-10, 11)),
                      grid: Optional[GridSpec] = None, n_theta: int = DEFAULT_N_THETA,
                      distance: Callable = similarity_distance) -> SensitivityResult:
    """Distance between a query and virtual copies of itself, relative to unrelated places.

    Every candidate is a crop of the same sweep seen from a rotated
    (degrees) or shifted (pixels, along x then along y) virtual sensor. The
    crop stays inside the sweep's range so no candidate has empty borders.
    Distances are divided by the median distance from the query to
    ``references``, sweeps of unrelated places.
    """
    if isinstance(references, PolarScan):
        references = [references]
    if not references:
        raise ParameterError("need at least one unrelated reference sweep")
    max_shift = max((abs(t) for t in translations), default=0.0)
    if grid is None:
        grid = crop_grid(scan, max_shift)
    half_diag = grid.center * math.sqrt(2.0) * grid.meters_per_pixel
    if half_diag + max_shift * grid.meters_per_pixel > scan.max_range:
        raise ParameterError("crop would leave the sweep's range; shrink the grid or the translations")

    def describe(s, offset=(0.0, 0.0), rotation=0.0):
        return make_descriptor(radon_transform(backward_warp(s, grid, offset, rotation), n_theta))

    query = describe(scan)
    threshold = float(np.median([distance(query, describe(r)).d for r in references]))
    scale = threshold if threshold > 0 else float("nan")
    rows = []
    for deg in rotations:
        d = distance(query, describe(scan, rotation=math.radians(deg))).d
        rows.append(("rotation", float(deg), d, d / scale))
    mpp = grid.meters_per_pixel
    for axis in ("x", "y"):
        for t in translations:
            off = (t * mpp, 0.0) if axis == "x" else (0.0, t * mpp)
            d = distance(query, describe(scan, offset=off)).d
            rows.append((f"translation_{axis}", float(t), d, d / scale))
    return SensitivityResult(threshold, rows)
