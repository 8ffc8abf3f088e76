"""Reconstruction-error scoring, anomaly maps, ROC threshold selection.

A window's anomaly score is its mean squared reconstruction error. Scores
along each tow form a 1D signal (the anomaly map); pooling labeled scores
across scans gives the ROC curve used to pick the operating threshold at
the point nearest the (FPR=0, TPR=1) corner. Abnormal is the positive
class and a sample is predicted positive iff score > threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .depthmap import DepthMap
from .errors import InspectError
from .nnet import CAEModel
from .sampler import (DEFAULT_STRIDE, DEFAULT_WINDOW, SampleSet, WindowSample,
                      extract_windows)
from .towgeom import TowLayout


class EmptyClass(InspectError):
    """ROC needs at least one score in each class."""


def window_mse(original, reconstruction) -> float:
    """Mean squared pixel error between a window and its reconstruction."""
    a = original.pixels if isinstance(original, WindowSample) else np.asarray(original)
    b = np.asarray(reconstruction).reshape(a.shape)
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def score_samples(model: CAEModel, sset: SampleSet, batch_size: int = 256) -> np.ndarray:
    """Reconstruction MSE for every sample, in sample order (float64)."""
    n = len(sset.samples)
    scores = np.empty(n, dtype=np.float64)
    if n == 0:
        return scores
    stack = sset.pixel_stack()[:, None, :, :]
    for start in range(0, n, batch_size):
        xb = stack[start:start + batch_size].astype(model.dtype)
        yb = model.forward(xb)
        d = (yb - xb).astype(np.float64)
        scores[start:start + batch_size] = np.mean(d * d, axis=(1, 2, 3))
    return scores


def score_percentiles(scores: np.ndarray) -> dict:
    """Summary stats recorded at train time for later floor calibration."""
    return {
        "score_p50": float(np.percentile(scores, 50.0)),
        "score_p99": float(np.percentile(scores, 99.0)),
        "score_p999": float(np.percentile(scores, 99.9)),
        "score_max": float(scores.max()),
        "score_mean": float(scores.mean()),
    }


@dataclass(frozen=True)
class TowSignal:
    """Scores along one tow at strided window centers."""

    tow_index: int
    centers_x: np.ndarray   # strictly increasing pixel coordinates
    centers_y: np.ndarray
    scores: np.ndarray      # float64 MSE values, >= 0

    def __post_init__(self):
        if np.any(np.diff(self.centers_x) <= 0):
            raise ValueError("window centers must be strictly increasing along a tow")
        if np.any(self.scores < 0):
            raise ValueError("anomaly scores must be non-negative")


@dataclass(frozen=True)
class AnomalyMap:
    signals: tuple[TowSignal, ...]
    width: int
    height: int
    window: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE

    def to_csv(self) -> str:
        lines = ["tow_index,center_x,center_y,mse"]
        for sig in self.signals:
            for cx, cy, m in zip(sig.centers_x, sig.centers_y, sig.scores):
                lines.append(f"{sig.tow_index},{int(cx)},{int(cy)},{float(m)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, width: int, height: int,
                 window: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE) -> "AnomalyMap":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        by_tow: dict[int, list[tuple[int, int, float]]] = {}
        for tow, cx, cy, m in rows:
            by_tow.setdefault(int(tow), []).append((int(cx), int(cy), float(m)))
        signals = tuple(
            TowSignal(tow,
                      np.array([r[0] for r in entries]),
                      np.array([r[1] for r in entries]),
                      np.array([r[2] for r in entries]))
            for tow, entries in sorted(by_tow.items())
        )
        return cls(signals, width, height, window, stride)


def build_anomaly_map(model: CAEModel, dm: DepthMap, layout: TowLayout,
                      window: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE,
                      batch_size: int = 256) -> AnomalyMap:
    """Score every window of a scan and group the scores by tow."""
    sset = extract_windows(dm, layout, window=window, stride=stride)
    if not sset.samples:
        raise ValueError("layout yields no windows to score")
    scores = score_samples(model, sset, batch_size=batch_size)
    signals = []
    for tow in sorted({s.tow_index for s in sset.samples}):
        idx = [i for i, s in enumerate(sset.samples) if s.tow_index == tow]
        signals.append(TowSignal(
            tow,
            np.array([sset.samples[i].center_x for i in idx]),
            np.array([sset.samples[i].center_y for i in idx]),
            scores[idx],
        ))
    return AnomalyMap(tuple(signals), dm.width, dm.height, window, stride)


@dataclass(frozen=True)
class RocCurve:
    """ROC sweep points with thresholds descending from +inf to -inf."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def __post_init__(self):
        if np.any(np.diff(self.fpr) < 0) or np.any(np.diff(self.tpr) < 0):
            raise ValueError("ROC points must be monotone along the sweep")


def roc_curve(scores_normal, scores_abnormal) -> RocCurve:
    """Sweep thresholds over the observed scores (plus +-inf sentinels).

    Positive class is abnormal; prediction is positive iff score is
    strictly above the threshold. AUC is the trapezoidal integral.
    """
    normal = np.asarray(scores_normal, dtype=np.float64)
    abnormal = np.asarray(scores_abnormal, dtype=np.float64)
    if normal.size == 0 or abnormal.size == 0:
        raise EmptyClass("roc_curve needs scores from both classes")
    thresholds = np.concatenate([
        [np.inf],
        np.unique(np.concatenate([normal, abnormal]))[::-1],
        [-np.inf],
    ])
    sn = np.sort(normal)
    sa = np.sort(abnormal)
    fpr = (normal.size - np.searchsorted(sn, thresholds, side="right")) / normal.size
    tpr = (abnormal.size - np.searchsorted(sa, thresholds, side="right")) / abnormal.size
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr, tpr, thresholds, auc)


def best_threshold(curve: RocCurve) -> float:
    """Threshold of the sweep point nearest the (0, 1) corner.

    Ties break toward lower FPR, then toward the higher threshold.
    """
    d2 = curve.fpr ** 2 + (1.0 - curve.tpr) ** 2
    best = 0
    for i in range(1, len(d2)):
        key = (d2[i], curve.fpr[i], -curve.thresholds[i])
        if key < (d2[best], curve.fpr[best], -curve.thresholds[best]):
            best = i
    return float(curve.thresholds[best])


@dataclass(frozen=True)
class ClassificationReport:
    """Binary metrics at a fixed threshold; undefined ratios stay None."""

    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float | None
    recall: float | None
    f1: float | None
    accuracy: float
    auc: float

    def to_json(self) -> str:
        return json.dumps({
            "threshold": self.threshold,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "auc": self.auc,
        }, indent=2)


def classification_report(scores_normal, scores_abnormal, threshold: float) -> ClassificationReport:
    """Confusion counts and metrics with abnormal as the positive class."""
    if not math.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    normal = np.asarray(scores_normal, dtype=np.float64)
    abnormal = np.asarray(scores_abnormal, dtype=np.float64)
    if normal.size == 0 or abnormal.size == 0:
        raise EmptyClass("classification_report needs scores from both classes")
    tp = int(np.count_nonzero(abnormal > threshold))
    fn = abnormal.size - tp
    fp = int(np.count_nonzero(normal > threshold))
    tn = normal.size - fp
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn)
    f1 = None
    if precision is not None and (precision + recall) > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    accuracy = (tp + tn) / (tp + tn + fp + fn)
    auc = roc_curve(normal, abnormal).auc
    return ClassificationReport(threshold, tp, fp, tn, fn,
                                precision, recall, f1, accuracy, auc)
