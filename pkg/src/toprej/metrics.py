"""Bipartite ranking metrics: pos@top, ROC-AUC, average precision, curves.

Tie conventions: a positive tying the top negative is not counted by
``pos_at_top``; tied pairs earn half credit in ``roc_auc``; tied scores form a
single threshold group for the curves and average precision.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    pos_at_top: float
    roc_auc: float
    pr_auc: float
    roc_points: list = field(default_factory=list, repr=False)
    pr_points: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {"pos_at_top": self.pos_at_top, "roc_auc": self.roc_auc, "pr_auc": self.pr_auc}


def _split(pos, neg):
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both classes need at least one score")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise ValueError("scores must be finite")
    return pos, neg


def pos_at_top(pos, neg) -> float:
    """Fraction of positives scored strictly above every negative."""
    pos, neg = _split(pos, neg)
    return float(np.count_nonzero(pos > neg.max())) / pos.size


def roc_auc(pos, neg) -> float:
    """Mann-Whitney estimate of P(pos > neg) with half credit for ties."""
    pos, neg = _split(pos, neg)
    s = np.sort(neg)
    below = np.searchsorted(s, pos, side="left")
    tied = np.searchsorted(s, pos, side="right") - below
    wins = int(below.sum()) + 0.5 * int(tied.sum())
    return wins / (pos.size * neg.size)


def _threshold_counts(pos, neg):
    """Cumulative TP/FP counts at each unique threshold, descending."""
    scores = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(pos.size, bool), np.zeros(neg.size, bool)])
    order = np.argsort(-scores, kind="stable")
    scores, is_pos = scores[order], is_pos[order]
    last = np.r_[scores[1:] != scores[:-1], True]
    tp = np.cumsum(is_pos)[last]
    fp = np.cumsum(~is_pos)[last]
    return scores[last], tp, fp


def pr_auc(pos, neg) -> float:
    """Average precision, sum of (R_k - R_{k-1}) * P_k; no interpolation."""
    pos, neg = _split(pos, neg)
    _, tp, fp = _threshold_counts(pos, neg)
    precision = tp / (tp + fp)
    recall = tp / pos.size
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def curve_points(pos, neg):
    """ROC ``(threshold, fpr, tpr)`` and PR ``(threshold, recall, precision)`` lists.

    A sample is predicted positive when its score is ``>= threshold``.  The ROC
    list opens with a threshold just above the maximum score, i.e. ``(0, 0)``.
    """
    pos, neg = _split(pos, neg)
    thr, tp, fp = _threshold_counts(pos, neg)
    m, n = pos.size, neg.size
    roc = [(float(np.nextafter(thr[0], np.inf)), 0.0, 0.0)]
    roc += [(float(t), a / n, b / m) for t, a, b in zip(thr, fp.tolist(), tp.tolist())]
    pr = [(float(t), a / m, a / (a + b)) for t, a, b in zip(thr, tp.tolist(), fp.tolist())]
    return roc, pr


def evaluate_scores(pos, neg) -> EvalReport:
    roc, pr = curve_points(pos, neg)
    return EvalReport(pos_at_top(pos, neg), roc_auc(pos, neg), pr_auc(pos, neg), roc, pr)


def write_curves(report: EvalReport, roc_path, pr_path) -> None:
    for path, header, rows in (
        (roc_path, ("threshold", "fpr", "tpr"), report.roc_points),
        (pr_path, ("threshold", "recall", "precision"), report.pr_points),
    ):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows([repr(float(v)) for v in row] for row in rows)
