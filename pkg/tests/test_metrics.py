import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starvox.metrics import (
    DEFAULT_THRESHOLDS,
    MatchReport,
    instance_iou_matrix,
    match_at_threshold,
    score_curve,
)


# --- oracle -------------------------------------------------------------------

def match_brute_force(iou, tau):
    """Exhaustive search over all one-to-one assignments for the maximum
    number of pairs with IoU > tau."""
    n_p, n_g = iou.shape
    best = 0
    smaller, larger = (n_p, n_g) if n_p <= n_g else (n_g, n_p)
    for cols in itertools.permutations(range(larger), smaller):
        tp = 0
        for i, j in enumerate(cols):
            pair = iou[i, j] if n_p <= n_g else iou[j, i]
            if pair > tau:
                tp += 1
        best = max(best, tp)
    return best


def random_label_pair(seed):
    rng = np.random.default_rng(seed)
    dims = tuple(rng.integers(2, 9, 3))
    pred = rng.integers(0, 5, dims).astype(np.int32)
    gt = rng.integers(0, 5, dims).astype(np.int32)
    return pred, gt


# --- iou matrix ----------------------------------------------------------------

def test_iou_matrix_identity():
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 4, (8, 8, 8)).astype(np.int32)
    iou = instance_iou_matrix(gt, gt)
    assert iou.shape[0] == iou.shape[1]
    assert np.allclose(np.diag(iou), 1.0)
    off = iou - np.diag(np.diag(iou))
    assert np.all(off < 1.0)


def test_iou_matrix_disjoint():
    pred = np.zeros((6, 6, 6), dtype=np.int32)
    gt = np.zeros((6, 6, 6), dtype=np.int32)
    pred[0:2] = 1
    gt[4:6] = 1
    assert np.all(instance_iou_matrix(pred, gt) == 0.0)


def test_iou_matrix_half_overlap_is_one_third():
    # equal-size instances overlapping by half: |I| = V/2, |U| = 3V/2
    pred = np.zeros((8, 4, 4), dtype=np.int32)
    gt = np.zeros((8, 4, 4), dtype=np.int32)
    pred[0:4] = 1
    gt[2:6] = 1
    assert instance_iou_matrix(pred, gt)[0, 0] == pytest.approx(1.0 / 3.0)


def test_iou_matrix_rejects_dim_mismatch():
    with pytest.raises(ValueError):
        instance_iou_matrix(np.zeros((2, 2, 2), np.int32), np.zeros((3, 2, 2), np.int32))


# --- matching -------------------------------------------------------------------

def test_match_perfect_prediction():
    rng = np.random.default_rng(1)
    gt = rng.integers(0, 4, (8, 8, 8)).astype(np.int32)
    iou = instance_iou_matrix(gt, gt)
    for tau in DEFAULT_THRESHOLDS:
        tp, fp, fn = match_at_threshold(iou, tau)
        assert fp == 0 and fn == 0


def test_match_empty_prediction():
    pred = np.zeros((6, 6, 6), dtype=np.int32)
    gt = np.zeros((6, 6, 6), dtype=np.int32)
    gt[0:2] = 1
    gt[4:6] = 2
    iou = instance_iou_matrix(pred, gt)
    tp, fp, fn = match_at_threshold(iou, 0.5)
    assert (tp, fp, fn) == (0, 0, 2)


def test_match_greedy_suboptimal_case():
    # greedy grabs (p0, g0) at 0.9 and strands p1; optimal pairs both
    iou = np.array([[0.9, 0.6, 0.0], [0.7, 0.0, 0.0], [0.0, 0.0, 0.0]])
    tp, fp, fn = match_at_threshold(iou, 0.5)
    assert tp == 2 == match_brute_force(iou, 0.5)


def test_match_strict_inequality():
    iou = np.array([[0.5]])
    tp, _, _ = match_at_threshold(iou, 0.5)
    assert tp == 0  # IoU must be strictly greater than tau
    tp, _, _ = match_at_threshold(iou, 0.4999)
    assert tp == 1


def test_match_rejects_bad_tau():
    with pytest.raises(ValueError):
        match_at_threshold(np.ones((1, 1)), 0.0)
    with pytest.raises(ValueError):
        match_at_threshold(np.ones((1, 1)), 1.0)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]))
@settings(max_examples=60, deadline=None)
def test_match_equals_brute_force(seed, tau):
    pred, gt = random_label_pair(seed)
    iou = instance_iou_matrix(pred, gt)
    tp, fp, fn = match_at_threshold(iou, tau)
    assert tp == match_brute_force(iou, tau)
    assert tp + fp == iou.shape[0]
    assert tp + fn == iou.shape[1]


# --- score curve ------------------------------------------------------------------

def test_score_curve_perfect():
    rng = np.random.default_rng(2)
    gt = rng.integers(0, 5, (8, 8, 8)).astype(np.int32)
    report = score_curve(gt, gt)
    assert all(t.accuracy == 1.0 for t in report.per_threshold)
    assert report.mean_ap == 1.0


def test_score_curve_iou_055_flips_between_05_and_06():
    # 1D overlap crafted to IoU = 11/20 = 0.55 exactly
    pred = np.zeros((20, 2, 2), dtype=np.int32)
    gt = np.zeros((20, 2, 2), dtype=np.int32)
    pred[0:16] = 1
    gt[5:20] = 1
    assert instance_iou_matrix(pred, gt)[0, 0] == pytest.approx(0.55)
    report = score_curve(pred, gt)
    by_tau = {round(t.tau, 1): t.accuracy for t in report.per_threshold}
    for tau in (0.1, 0.2, 0.3, 0.4, 0.5):
        assert by_tau[tau] == 1.0
    for tau in (0.6, 0.7, 0.8, 0.9):
        assert by_tau[tau] == 0.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_score_curve_monotone_nonincreasing(seed):
    pred, gt = random_label_pair(seed)
    report = score_curve(pred, gt)
    accs = [t.accuracy for t in report.per_threshold]
    assert all(a >= b - 1e-12 for a, b in zip(accs, accs[1:]))


def test_score_curve_swap_symmetry():
    pred, gt = random_label_pair(7)
    fwd = score_curve(pred, gt)
    rev = score_curve(gt, pred)
    for a, b in zip(fwd.per_threshold, rev.per_threshold):
        assert a.tp == b.tp
        assert a.precision == pytest.approx(b.recall)
        assert a.recall == pytest.approx(b.precision)


def test_report_round_trips_through_dict():
    pred, gt = random_label_pair(9)
    report = score_curve(pred, gt)
    clone = MatchReport.from_dict(report.to_dict())
    assert clone == report
    text = report.format_table()
    assert "TP / (TP + FP + FN)" in text
    assert len(text.splitlines()) == 3 + len(report.per_threshold) + 1
