import csv
import itertools
import math

import numpy as np
import pytest

from sinoplace.errors import ParameterError
from sinoplace.evaluation import (LoopGroundTruth, Prediction, build_ground_truth, crop_grid, evaluate,
                                  export_tp_trajectory, pr_auc, sensitivity_sweep, write_pr_csv,
                                  write_report_json)
from sinoplace.ingest import PoseRecord
from sinoplace.synth import render_polar, square_loop
from sinoplace.warp import GridSpec


def _poses(xy):
    return [PoseRecord(i, float(x), float(y), 0.0) for i, (x, y) in enumerate(xy)]


def test_far_frames_no_pair():
    gt = build_ground_truth(_poses([(0, 0), (25, 0)]), 20.0, "intra", 0)
    assert gt.pairs == set()


def test_wider_boundary_multi():
    gt = build_ground_truth(_poses([(0, 0)]), 50.0, "multi", db_poses=_poses([(25, 0)]))
    assert gt.pairs == {(0, 0)}


def test_square_loop_matches_brute_force():
    wp = square_loop(80.0, 60, overlap=10)
    poses = _poses(wp[:, :2])
    gt = build_ground_truth(poses, 20.0, "intra", 15)
    brute = {(i, j) for i, j in itertools.product(range(len(wp)), repeat=2)
             if i != j and abs(i - j) > 15 and math.dist(wp[i, :2], wp[j, :2]) <= 20.0}
    assert gt.pairs == brute and brute


def test_ground_truth_errors():
    with pytest.raises(ParameterError):
        build_ground_truth([], 20.0)
    with pytest.raises(ParameterError):
        build_ground_truth(_poses([(0, 0)]), 20.0, "multi")
    with pytest.raises(ParameterError):
        build_ground_truth(_poses([(0, 0)]), 20.0, "other")


def test_boundary_monotone_multi(rng):
    q = _poses(rng.uniform(0, 100, (30, 2)))
    db = _poses(rng.uniform(0, 100, (40, 2)))
    counts = [len(build_ground_truth(q, b, "multi", db_poses=db).pairs) for b in (0, 5, 10, 20, 50, 200)]
    assert counts == sorted(counts)


# query, predicted, d, correct
FIXTURE = [
    (0, 100, 0.1, True),
    (1, 101, 0.3, True),
    (2, 102, 0.5, True),
    (3, 103, 0.8, True),
    (4, 999, 0.2, False),
    (5, 999, 0.9, False),
    (6, 106, 1.0, True),
    (7, 107, 0.4, False),
    (8, 108, 0.7, False),
    (9, 109, 0.6, False),
]
SWEEP = [0.0, 0.25, 0.5, 0.75, 1.0]


def _fixture():
    # queries 0..6 have a revisit; each "True" row predicts one of its pairs
    pairs = {(q, 100 + q) for q in range(7)} | {(4, 104), (5, 105)}
    gt = LoopGroundTruth(20.0, pairs)
    preds = [Prediction(q, p, d) for q, p, d, _ in FIXTURE]
    return preds, gt


def test_confusion_fixture_by_hand():
    preds, gt = _fixture()
    r = evaluate(preds, gt, SWEEP)
    assert r.gt_queries == 7
    assert r.precision == [None, 0.5, 0.6, pytest.approx(3 / 7, abs=1e-15), 0.5]
    assert r.recall == pytest.approx([0.0, 1 / 7, 3 / 7, 3 / 7, 5 / 7], abs=1e-15)
    assert r.f1[0] is None
    assert r.f1[1:] == pytest.approx([2 / 9, 0.5, 3 / 7, 10 / 17], abs=1e-15)
    assert r.auc == pytest.approx(177 / 490, abs=1e-15)
    assert r.max_f1 == pytest.approx(10 / 17, abs=1e-15)
    assert r.best_threshold == 1.0
    assert r.recall_at_1 == pytest.approx(5 / 7, abs=1e-15)
    assert r.tp_detection_rate == pytest.approx(5 / 7, abs=1e-15)
    labels = [rec.label for rec in r.records]
    assert labels == ["TP", "TP", "TP", "TP", "FP", "FP", "TP", "FP", "FP", "FP"]
    assert (r.tp_count, r.fp_count, r.fn_count) == (5, 5, 2)


def test_fixture_at_half_threshold():
    preds, gt = _fixture()
    r = evaluate(preds, gt, [0.5])
    assert r.precision == [0.6]
    assert r.recall == [pytest.approx(3 / 7)]


def test_perfect_classifier():
    gt = LoopGroundTruth(20.0, {(q, q + 50) for q in range(8)})
    r = evaluate([Prediction(q, q + 50, 0.0) for q in range(8)], gt)
    assert len(r.thresholds) == 200
    assert r.auc == 1.0 and r.max_f1 == 1.0 and r.recall_at_1 == 1.0
    r = evaluate([Prediction(q, q + 50, 0.0) for q in range(8)], gt, [0.1, 0.5])
    assert r.precision == [1.0, 1.0] and r.recall == [1.0, 1.0] and r.auc == 1.0


def test_no_ground_truth_flags_recall_undefined():
    r = evaluate([Prediction(0, 1, 0.3), Prediction(1, 0, 0.6)], LoopGroundTruth(20.0, set()), [0.0, 0.5, 1.0])
    assert not r.recall_defined
    assert r.recall == [None, None, None]
    assert r.auc is None and r.recall_at_1 is None and r.max_f1 is None
    assert r.precision == [None, 0.0, 0.0]


def test_empty_sweep_rejected():
    preds, gt = _fixture()
    with pytest.raises(ParameterError):
        evaluate(preds, gt, [])
    with pytest.raises(ParameterError):
        evaluate(preds, gt, 0)


def test_default_sweep_spans_observed_range():
    preds, gt = _fixture()
    r = evaluate(preds, gt)
    assert r.thresholds[0] == 0.0 and r.thresholds[-1] == 1.0 and len(r.thresholds) == 200


def test_recall_monotone_and_bounds(rng):
    gt = LoopGroundTruth(20.0, {(q, q) for q in range(0, 40, 2)})
    preds = [Prediction(q, q if rng.random() < 0.6 else -1, float(rng.random())) for q in range(40)]
    r = evaluate(preds, gt, 50)
    rec = [x for x in r.recall if x is not None]
    assert rec == sorted(rec)
    for v in r.precision + r.recall + r.f1:
        assert v is None or 0.0 <= v <= 1.0
    assert 0.0 <= r.auc <= 1.0
    assert [p[1] for p in r.pr_points] == sorted(p[1] for p in r.pr_points)


def test_permutation_invariance(rng):
    preds, gt = _fixture()
    base = evaluate(preds, gt, SWEEP).to_dict()
    for _ in range(5):
        shuffled = [preds[i] for i in rng.permutation(len(preds))]
        assert evaluate(shuffled, gt, SWEEP).to_dict() == base


def test_pr_auc_extends_to_zero_recall():
    assert pr_auc([(1.0, 0.5), (0.5, 1.0)]) == pytest.approx(0.5 + 0.375)
    assert pr_auc([]) is None


def test_exports(tmp_path):
    preds, gt = _fixture()
    r = evaluate(preds, gt, SWEEP)
    poses = _poses([(i, 2 * i) for i in range(10)])
    n = export_tp_trajectory(r, poses, tmp_path / "tp.csv", tmp_path / "tp.svg")
    rows = list(csv.DictReader(open(tmp_path / "tp.csv")))
    assert n == len(rows) == 10
    assert sum(row["label"] == "TP" for row in rows) == r.tp_count
    assert rows[2] == {"x": "2.0", "y": "4.0", "label": "TP"}
    assert (tmp_path / "tp.svg").read_text().lstrip().startswith("<?xml")
    write_pr_csv(r, tmp_path / "pr.csv")
    lines = (tmp_path / "pr.csv").read_text().splitlines()
    assert lines[0] == "threshold,precision,recall,f1"
    assert lines[1] == "0.0,,0.0,"
    write_report_json(r, tmp_path / "r.json", {"boundary_m": 20.0})


def test_export_empty_report(tmp_path):
    r = evaluate([], LoopGroundTruth(20.0, set()), [0.0])
    export_tp_trajectory(r, [], tmp_path / "tp.csv")
    assert (tmp_path / "tp.csv").read_text() == "x,y,label\n"


def test_export_three_points(tmp_path):
    gt = LoopGroundTruth(20.0, {(0, 5), (1, 6)})
    r = evaluate([Prediction(0, 5, 0.1), Prediction(1, 9, 0.1), Prediction(2, 7, 0.9)], gt, [0.5])
    export_tp_trajectory(r, _poses([(0, 0), (1, 0), (2, 0)]), tmp_path / "tp.csv")
    rows = list(csv.reader(open(tmp_path / "tp.csv")))[1:]
    assert rows == [["0.0", "0.0", "TP"], ["1.0", "0.0", "FP"]]
    assert [rec.label for rec in r.records] == ["TP", "FP", "TN"]


def test_sensitivity_identity_is_zero(scene, small_geometry):
    scan = render_polar(scene, (0, 0, 0), small_geometry)
    other = render_polar(scene, (60.0, 40.0, 1.0), small_geometry)
    res = sensitivity_sweep(scan, [other], rotations=[0, 90], translations=[0, 3], n_theta=30)
    kinds = [r[0] for r in res.rows]
    assert kinds == ["rotation", "rotation", "translation_x", "translation_x", "translation_y", "translation_y"]
    assert res.rows[0][2] == 0.0 and res.rows[2][2] == 0.0 and res.rows[4][2] == 0.0
    assert res.threshold > 0
    assert res.rows[1][3] == pytest.approx(res.rows[1][2] / res.threshold)


def test_sensitivity_rejects_oversized_crop(scene, small_geometry):
    scan = render_polar(scene, (0, 0, 0), small_geometry)
    with pytest.raises(ParameterError):
        sensitivity_sweep(scan, [scan], [0], [10], grid=GridSpec(141))
    with pytest.raises(ParameterError):
        sensitivity_sweep(scan, [], [0], [0])


def test_crop_grid_fits(small_geometry, scene):
    scan = render_polar(scene, (0, 0, 0), small_geometry)
    g = crop_grid(scan, 10)
    assert g.side_pixels % 2 == 1
    assert g.center * math.sqrt(2) + 10 <= scan.max_range
    assert (g.center + 1) * math.sqrt(2) + 10 > scan.max_range
