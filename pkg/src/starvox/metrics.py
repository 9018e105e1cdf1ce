"""Instance-segmentation scoring: optimal IoU matching between predicted and
ground-truth instances and threshold-sweep accuracy / AP / F1 curves.

A predicted instance counts as a true positive at threshold tau iff it is
matched one-to-one with a ground-truth instance at IoU strictly greater than
tau; matching maximizes the number of such pairs (optimal assignment, not
greedy). "Accuracy" here is the detection-style TP / (TP + FP + FN), which at
a fixed threshold coincides with the average-precision convention used for
instance maps; both are reported.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

DEFAULT_THRESHOLDS = tuple(round(0.1 * k, 1) for k in range(1, 10))


def instance_iou_matrix(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Pairwise IoU between all predicted and ground-truth instances.

    Entry (i, j) is |pred_i intersect gt_j| / |pred_i union gt_j|, with rows
    ordered by ascending distinct nonzero pred id and columns likewise for gt.
    Computed in a single joint pass via a contingency table.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    pred_ids = np.unique(pred)
    pred_ids = pred_ids[pred_ids != 0]
    gt_ids = np.unique(gt)
    gt_ids = gt_ids[gt_ids != 0]

    p_index = np.zeros(int(pred.max()) + 1, dtype=np.int64)
    p_index[pred_ids] = np.arange(1, pred_ids.size + 1)
    g_index = np.zeros(int(gt.max()) + 1, dtype=np.int64)
    g_index[gt_ids] = np.arange(1, gt_ids.size + 1)

    pi = p_index[pred.ravel()]
    gi = g_index[gt.ravel()]
    n_p, n_g = pred_ids.size, gt_ids.size
    table = np.bincount(pi * (n_g + 1) + gi, minlength=(n_p + 1) * (n_g + 1))
    table = table.reshape(n_p + 1, n_g + 1)

    inter = table[1:, 1:].astype(np.float64)
    size_p = table[1:, :].sum(axis=1, keepdims=True)
    size_g = table[:, 1:].sum(axis=0, keepdims=True)
    union = size_p + size_g - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return iou


def match_at_threshold(iou_matrix: np.ndarray, tau: float) -> tuple[int, int, int]:
    """(tp, fp, fn) under the one-to-one matching that maximizes the number
    of pairs with IoU strictly greater than tau."""
    if not (0.0 < tau < 1.0):
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    n_p, n_g = iou_matrix.shape
    if n_p == 0 or n_g == 0:
        return 0, n_p, n_g
    admissible = (iou_matrix > tau).astype(np.int64)
    rows, cols = linear_sum_assignment(admissible, maximize=True)
    tp = int(admissible[rows, cols].sum())
    return tp, n_p - tp, n_g - tp


@dataclass
class ThresholdMetrics:
    tau: float
    tp: int
    fp: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    ap: float


@dataclass
class MatchReport:
    """Per-threshold counts and scores plus their means over the sweep."""

    n_pred: int
    n_gt: int
    per_threshold: list[ThresholdMetrics]
    mean_accuracy: float
    mean_ap: float
    mean_f1: float

    def to_dict(self) -> dict:
        return {
            "accuracy_definition": "TP / (TP + FP + FN) at each IoU threshold",
            "n_pred": self.n_pred,
            "n_gt": self.n_gt,
            "per_threshold": [asdict(t) for t in self.per_threshold],
            "mean_accuracy": self.mean_accuracy,
            "mean_ap": self.mean_ap,
            "mean_f1": self.mean_f1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchReport":
        return cls(
            n_pred=d["n_pred"],
            n_gt=d["n_gt"],
            per_threshold=[ThresholdMetrics(**t) for t in d["per_threshold"]],
            mean_accuracy=d["mean_accuracy"],
            mean_ap=d["mean_ap"],
            mean_f1=d["mean_f1"],
        )

    def format_table(self) -> str:
        lines = [
            "instance matching report (accuracy = TP / (TP + FP + FN))",
            f"predicted instances: {self.n_pred}   ground-truth instances: {self.n_gt}",
            f"{'tau':>5} {'tp':>5} {'fp':>5} {'fn':>5} {'accuracy':>9} {'precision':>10} {'recall':>7} {'f1':>6}",
        ]
        for t in self.per_threshold:
            lines.append(
                f"{t.tau:>5.2f} {t.tp:>5d} {t.fp:>5d} {t.fn:>5d}"
                f" {t.accuracy:>9.4f} {t.precision:>10.4f} {t.recall:>7.4f} {t.f1:>6.4f}"
            )
        lines.append(f"mean accuracy: {self.mean_accuracy:.4f}   mAP: {self.mean_ap:.4f}   mean F1: {self.mean_f1:.4f}")
        return "\n".join(lines)


def _safe_div(a: float, b: float, empty: float = 1.0) -> float:
    return a / b if b else empty


def score_curve(pred: np.ndarray, gt: np.ndarray, thresholds=DEFAULT_THRESHOLDS) -> MatchReport:
    """Full matching curve over an IoU threshold sweep (default 0.1..0.9)."""
    iou = instance_iou_matrix(pred, gt)
    n_p, n_g = iou.shape
    rows = []
    for tau in thresholds:
        tp, fp, fn = match_at_threshold(iou, tau)
        rows.append(
            ThresholdMetrics(
                tau=float(tau),
                tp=tp,
                fp=fp,
                fn=fn,
                accuracy=_safe_div(tp, tp + fp + fn),
                precision=_safe_div(tp, tp + fp),
                recall=_safe_div(tp, tp + fn),
                f1=_safe_div(2 * tp, 2 * tp + fp + fn),
                ap=_safe_div(tp, tp + fp + fn),
            )
        )
    return MatchReport(
        n_pred=n_p,
        n_gt=n_g,
        per_threshold=rows,
        mean_accuracy=float(np.mean([r.accuracy for r in rows])),
        mean_ap=float(np.mean([r.ap for r in rows])),
        mean_f1=float(np.mean([r.f1 for r in rows])),
    )
